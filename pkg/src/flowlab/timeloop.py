"""Saddle-point solves and semi-implicit time integration.

The Stokes-like part (viscous operator, pressure coupling, zero-mean
constraint) is treated implicitly with a reusable sparse LU
factorisation; convection is applied explicitly.  Time stepping is a
first-order IMEX Euler bootstrap followed by SBDF2 with constant step
size.  Fully periodic steady solves additionally pin the two velocity
mean components, which are otherwise a nullspace of the viscous
operator on the torus.
"""

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_convection, assemble_forcing, build_operators
from .space import CoefficientVector, interpolate, method_spaces

__all__ = [
    "FlowState",
    "SaddleFactorization",
    "TimeSeries",
    "SingularSystemError",
    "factorize",
    "bootstrap_step",
    "sbdf2_step",
    "solve_stokes",
    "run_transient",
]

log = logging.getLogger(__name__)

SOLVE_RTOL = 1e-10


class SingularSystemError(RuntimeError):
    """The implicit block system is singular (inf-sup failure or a
    missing mean/nullspace constraint)."""


class FlowState:
    """Velocity and pressure coefficients at one time instant."""

    def __init__(self, u, p, lam=0.0, t=0.0):
        self.u = u
        self.p = p
        self.lam = lam
        self.t = t


class TimeSeries:
    """Per-step diagnostic records of one transient run.

    Column arrays: t, errL2, errH1broken, errEnergy (nan without an
    exact solution), divL2, divLinf, kinetic, dissipation, upwind.
    ``blowup_time`` is set (and the series truncated) when the state
    leaves the realm of finite numbers.
    """

    COLUMNS = ("t", "errL2", "errH1broken", "errEnergy", "divL2", "divLinf",
               "kinetic", "dissipation", "upwind")

    def __init__(self):
        self.rows = []
        self.blowup_time = None

    def append(self, **kw):
        self.rows.append([kw[c] for c in self.COLUMNS])

    def column(self, name):
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def __len__(self):
        return len(self.rows)


class SaddleFactorization:
    """LU factorisation of the implicit block system on free DOFs.

    Block layout: [ K_ff  B_f^T  (mom)  0    ] [u_f]   [r_u]
                  [ B_f   0      0      mean ] [p  ]   [r_p]
                  [ mom^T 0      0      0    ] [.  ] = [mom targets]
                  [ 0     mean^T 0      0    ] [lam]   [0]
    with K = mass_coeff * M + A.  The momentum rows appear only for
    steady solves on fully periodic meshes.
    """

    def __init__(self, ops, mass_coeff):
        self.ops = ops
        self.mass_coeff = mass_coeff
        n = ops.V.n_dofs
        self.constrained = ops.dirichlet_dofs
        free = np.setdiff1d(np.arange(n), self.constrained)
        self.free = free
        K = (ops.A if mass_coeff == 0.0 else
             (mass_coeff * ops.M + ops.A)).tocsr()
        self.K_full = K
        K_ff = K[free][:, free]
        n_p = ops.Q.n_dofs
        self.n_p = n_p
        self.n_f = len(free)
        self.with_mom = mass_coeff == 0.0 and ops.mom is not None
        blocks = [[K_ff], [None], [None], [None]]
        B_f = ops.B[:, free] if n_p else None
        rows = [[K_ff]]
        if n_p:
            rows[0].append(B_f.T)
            rows.append([B_f, None])
        if self.with_mom:
            mom_f = sp.csr_matrix(ops.mom[free])
            rows[0].append(mom_f)
            if n_p:
                rows[1].append(None)
            rows.append([mom_f.T] + ([None] if n_p else []) + [None])
        if n_p:
            mean_col = sp.csr_matrix(ops.mean[:, None])
            rows[0].append(None)
            rows[1].append(mean_col)
            if self.with_mom:
                rows[2].append(None)
            rows.append([None, mean_col.T] + ([None] if self.with_mom else [])
                        + [None])
        width = max(len(r) for r in rows)
        for r in rows:
            r.extend([None] * (width - len(r)))
        self.aug = sp.bmat(rows, format="csc")
        # symmetric block equilibration: bring the constraint rows to the
        # scale of the momentum block so LU and refinement treat them evenly
        n_aux = self.aug.shape[0] - self.n_f
        if n_aux and K_ff.nnz:
            k_scale = abs(K_ff).max()
            b_scale = abs(ops.B).max() if (n_p and ops.B.nnz) else 1.0
            s = max(k_scale / max(b_scale, 1e-300), 1.0)
        else:
            s = 1.0
        self.scaling = np.concatenate([np.ones(self.n_f),
                                       np.full(n_aux, s)])
        D = sp.diags(self.scaling)
        self.aug = (D @ self.aug @ D).tocsc()
        try:
            self.lu = spla.splu(self.aug)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
        self.aug_norm = spla.norm(self.aug, np.inf)

    def solve(self, rhs_v, g=None, mom_target=(0.0, 0.0)):
        """Solve for (u, p, lam) given the full-length momentum rhs.

        rhs_v is the velocity-equation right-hand side on all DOFs;
        g holds strong Dirichlet values (full-length, zero on free DOFs).
        Iterative refinement drives the residual towards round-off;
        SingularSystemError signals a backward error above SOLVE_RTOL.
        """
        ops = self.ops
        if g is None:
            g = np.zeros(ops.V.n_dofs)
        parts = [(rhs_v - self.K_full @ g)[self.free]]
        if self.n_p:
            parts.append(-(ops.B @ g))
        if self.with_mom:
            parts.append(np.asarray(mom_target, dtype=float))
        if self.n_p:
            parts.append([0.0])
        b = self.scaling * np.concatenate([np.atleast_1d(p) for p in parts])
        x = self.lu.solve(b)
        nb = np.linalg.norm(b)
        # refine towards the round-off floor; stop once progress stalls
        res = np.linalg.norm(self.aug @ x - b)
        for _ in range(3):
            denom = nb + self.aug_norm * np.linalg.norm(x)
            if not np.isfinite(res) or res <= 1e-16 * denom:
                break
            x_new = x + self.lu.solve(b - self.aug @ x)
            res_new = np.linalg.norm(self.aug @ x_new - b)
            if not res_new < 0.5 * res:
                if res_new < res:
                    x, res = x_new, res_new
                break
            x, res = x_new, res_new
        denom = nb + self.aug_norm * np.linalg.norm(x)
        if not np.isfinite(res) or res > SOLVE_RTOL * max(denom, 1e-300):
            raise SingularSystemError(
                f"saddle solve residual {res:.3e} exceeds "
                f"{SOLVE_RTOL} * {denom:.3e}")
        x = self.scaling * x
        u = g.copy()
        u[self.free] = x[:self.n_f]
        p = x[self.n_f:self.n_f + self.n_p]
        lam = x[-1] if self.n_p else 0.0
        return u, p, float(lam)


def factorize(ops, dt=None, scheme="sbdf2"):
    """Factorise the implicit matrix: mass_coeff*M + A plus constraints.

    scheme 'sbdf2' uses 3/(2 dt), 'euler' 1/dt, 'steady' 0 (adds the
    velocity-mean rows on fully periodic meshes).
    """
    if scheme == "steady":
        coeff = 0.0
    else:
        if dt is None or dt <= 0:
            raise ValueError("time step must be positive")
        coeff = {"sbdf2": 1.5 / dt, "euler": 1.0 / dt}[scheme]
    return SaddleFactorization(ops, coeff)


def _forcing_vector(ops, f, t):
    if f is None:
        return np.zeros(ops.V.n_dofs)
    return assemble_forcing(ops.V, f, t)


def _convection_rhs(ops, state):
    """Explicit convection functional C(u)u minus inflow data terms."""
    C, inflow = assemble_convection(ops.V, state.u.values,
                                    dirichlet=ops.dirichlet, t=state.t)
    return C.matrix @ state.u.values - inflow


def bootstrap_step(initial, fac, ops, dt, f=None, conv_cache=None):
    """One first-order IMEX Euler step from the initial state.

    Solves (u1 - u0)/dt * M + A u1 + B^T p1 = F(t1) + lifting(t1) - C(u0)u0
    with the divergence and mean constraints.
    """
    t1 = initial.t + dt
    conv = _convection_rhs(ops, initial) if conv_cache is None else conv_cache
    rhs = (_forcing_vector(ops, f, t1) + ops.lifting(t1)
           + (ops.M @ initial.u.values) / dt - conv)
    g = ops.boundary_state(t1)
    u, p, lam = fac.solve(rhs, g)
    return FlowState(CoefficientVector(ops.V, u, t1),
                     CoefficientVector(ops.Q, p, t1) if ops.Q.n_dofs else None,
                     lam, t1)


def sbdf2_step(history, fac, ops, dt, f=None, conv_cache=None):
    """One SBDF2 step given states (u^{n-1}, u^n).

    Implicit Stokes part with coefficient 3/(2 dt); convection assembled
    fresh at the two explicit states and extrapolated.  Returns the new
    state; pass conv_cache=(C(u^{n-1})u^{n-1}, C(u^n)u^n) to reuse
    already-assembled convection vectors.
    """
    prev, curr = history
    t1 = curr.t + dt
    if conv_cache is None:
        conv_prev = _convection_rhs(ops, prev)
        conv_curr = _convection_rhs(ops, curr)
    else:
        conv_prev, conv_curr = conv_cache
    rhs = (_forcing_vector(ops, f, t1) + ops.lifting(t1)
           + (ops.M @ (4.0 * curr.u.values - prev.u.values)) / (2.0 * dt)
           - (2.0 * conv_curr - conv_prev))
    g = ops.boundary_state(t1)
    u, p, lam = fac.solve(rhs, g)
    return FlowState(CoefficientVector(ops.V, u, t1),
                     CoefficientVector(ops.Q, p, t1) if ops.Q.n_dofs else None,
                     lam, t1)


def solve_stokes(ops, forcing=None, rhs_extra=None, t=None, mom_target=None):
    """Steady Stokes solve: A u + B^T p = F, B u = 0, zero-mean pressure.

    forcing is an analytic field or None; rhs_extra an optional
    pre-assembled vector added to the momentum right-hand side.  On fully
    periodic meshes the velocity means are pinned to mom_target
    (default zero).
    """
    fac = factorize(ops, scheme="steady")
    rhs = _forcing_vector(ops, forcing, t) + ops.lifting(t)
    if rhs_extra is not None:
        rhs = rhs + rhs_extra
    g = ops.boundary_state(t)
    u, p, lam = fac.solve(rhs, g, mom_target=mom_target or (0.0, 0.0))
    return FlowState(CoefficientVector(ops.V, u, t),
                     CoefficientVector(ops.Q, p, t) if ops.Q.n_dofs else None,
                     lam, t or 0.0)


def _cfl_advisory(ops, u0, dt, k):
    from .assembly import _volume_tables

    tab = _volume_tables(ops.V, 2 * k)
    vals = tab.function_values(u0.values)
    umax = float(np.sqrt((vals * vals).sum(axis=-1)).max())
    h_min = float(ops.V.mesh.h_K.min())
    number = dt * umax * (k + 1) ** 2 / h_min
    if number > 1.0:
        log.warning("explicit convection advisory: dt*max|u|*(k+1)^2/h_min "
                    "= %.3g > 1; expect instability", number)
    return number


def run_transient(mesh, config, exact=None, dt=None, tend=None, nu=None,
                  forcing=None, initial="stokes-projection"):
    """Advance the semi-discrete system with SBDF2 and record diagnostics.

    config is a MethodConfig; ``exact`` (when given) supplies nu, the
    initial datum, Dirichlet data on non-periodic meshes, the body force,
    and the per-step error columns.  ``forcing`` overrides the exact
    solution's body force (used for gradient-shift experiments).
    ``initial`` is 'stokes-projection' or 'interpolation'.  Blow-up
    truncates the series and stamps ``blowup_time`` instead of raising.
    Returns a TimeSeries whose ``final_state`` is the last finite state.
    """
    from .analysis import step_records, stokes_projection

    if dt is None or dt <= 0 or tend is None or tend <= 0:
        raise ValueError("dt and tend must be positive")
    if nu is None:
        if exact is None:
            raise ValueError("give nu explicitly or via an exact solution")
        nu = exact.nu
    n_steps = int(round(tend / dt))
    if abs(n_steps * dt - tend) > 1e-9 * max(tend, 1.0):
        raise ValueError(f"dt={dt} does not divide tend={tend}")

    V, Q = method_spaces(mesh, config)
    periodic = len(mesh.boundary_facets) == 0
    dirichlet = None
    if not periodic:
        if exact is None:
            raise ValueError("non-periodic runs need an exact solution "
                             "supplying Dirichlet data")
        dirichlet = exact.velocity
    ops = build_operators(V, Q, nu, config.sigma, config.delta,
                          dirichlet=dirichlet)
    f = forcing if forcing is not None else (
        exact.forcing if exact is not None else None)

    if exact is None:
        u0 = CoefficientVector(V, np.zeros(V.n_dofs), 0.0)
    elif initial == "interpolation":
        u0 = interpolate(V, exact.velocity, 0.0)
    elif initial == "stokes-projection":
        u0 = stokes_projection(exact.velocity, exact.velocity_gradient,
                               ops, t=0.0)
    else:
        raise ValueError(f"unknown initial datum mode {initial!r}")
    state = FlowState(u0, CoefficientVector(Q, np.zeros(Q.n_dofs), 0.0)
                      if Q.n_dofs else None, 0.0, 0.0)
    _cfl_advisory(ops, u0, dt, config.k)

    series = TimeSeries()
    series.final_state = state
    series.append(**step_records(state, ops, exact))
    fac2 = factorize(ops, dt, "sbdf2")
    fac1 = factorize(ops, dt, "euler")

    conv_curr = _convection_rhs(ops, state)
    new = bootstrap_step(state, fac1, ops, dt, f=f, conv_cache=conv_curr)
    prev, curr = state, new
    conv_prev = conv_curr
    for n in range(1, n_steps + 1):
        if not np.isfinite(curr.u.values).all():
            series.blowup_time = curr.t
            log.warning("blow-up detected at t=%.6g", curr.t)
            break
        series.append(**step_records(curr, ops, exact))
        series.final_state = curr
        if n == n_steps:
            break
        conv_curr = _convection_rhs(ops, curr)
        new = sbdf2_step((prev, curr), fac2, ops, dt, f=f,
                         conv_cache=(conv_prev, conv_curr))
        prev, curr = curr, new
        conv_prev = conv_curr
    return series
