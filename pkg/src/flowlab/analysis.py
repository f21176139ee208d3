"""Exact solutions, norms, projections, rates, and energy diagnostics.

Everything here is a pure function over immutable inputs: closed-form
benchmark flows, the discrete Stokes projection, the error and energy
norms recorded along trajectories, convergence-rate extraction,
Gronwall-exponent functionals for the different method classes, and the
discrete energy-inequality audit.
"""

import math
from dataclasses import dataclass

import numpy as np

from .assembly import (
    ah_moment_vector,
    upwind_seminorm_sq,
    _facet_points,
    _facet_tables,
    _quad_default,
    _volume_tables,
)
from .refelem import QuadRule
from .space import CoefficientVector

__all__ = [
    "ExactSolution",
    "NormReport",
    "RateTable",
    "lattice_flow",
    "potential_flow",
    "gradient_forcing",
    "compute_norms",
    "step_records",
    "stokes_projection",
    "convergence_rates",
    "gronwall_functional",
    "energy_budget",
    "measure_coercivity",
]


class ExactSolution:
    """Closed-form flow with velocity, gradient, pressure, and forcing.

    All field callables take (t, points) with points (n, 2).  ``u_inf``
    and ``grad_u_inf``, when present, are the analytic L-infinity norms
    as functions of time (used by the Gronwall functionals).
    """

    def __init__(self, velocity, velocity_gradient, pressure, nu,
                 forcing=None, u_inf=None, grad_u_inf=None, period=None,
                 name=""):
        self.velocity = velocity
        self.velocity_gradient = velocity_gradient
        self.pressure = pressure
        self.forcing = forcing
        self.nu = nu
        self.u_inf = u_inf
        self.grad_u_inf = grad_u_inf
        self.period = period
        self.name = name

    def l2_norm(self, t, mesh, exact_degree=12):
        """Quadrature L2 norm of the velocity at time t."""
        from .refelem import quadrature_rule

        rule = quadrature_rule(exact_degree)
        v = mesh.vertices[mesh.cells]
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        pts = v[:, None, 0, :] + np.einsum("cab,qb->cqa", J, rule.points)
        uv = np.asarray(self.velocity(t, pts.reshape(-1, 2))).reshape(pts.shape)
        wdet = rule.weights[None, :] * detJ[:, None]
        return float(np.sqrt(np.einsum("cq,cqa,cqa->", wdet, uv, uv)))


def lattice_flow(nu):
    """Freely decaying standing-vortex array on the periodic unit square.

    u0 = (sin 2pi x sin 2pi y, cos 2pi x cos 2pi y), u = u0 e^{-8 pi^2 nu t},
    f = 0; the convective term is balanced by the closed-form pressure.
    """
    tp = 2.0 * math.pi
    lam = 8.0 * math.pi**2 * nu

    def velocity(t, pts):
        pts = np.atleast_2d(pts)
        decay = math.exp(-lam * (t or 0.0))
        sx, sy = np.sin(tp * pts[:, 0]), np.sin(tp * pts[:, 1])
        cx, cy = np.cos(tp * pts[:, 0]), np.cos(tp * pts[:, 1])
        return decay * np.stack([sx * sy, cx * cy], axis=1)

    def velocity_gradient(t, pts):
        pts = np.atleast_2d(pts)
        decay = math.exp(-lam * (t or 0.0))
        sx, sy = np.sin(tp * pts[:, 0]), np.sin(tp * pts[:, 1])
        cx, cy = np.cos(tp * pts[:, 0]), np.cos(tp * pts[:, 1])
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = cx * sy
        g[:, 0, 1] = sx * cy
        g[:, 1, 0] = -sx * cy
        g[:, 1, 1] = -cx * sy
        return tp * decay * g

    def pressure(t, pts):
        pts = np.atleast_2d(pts)
        decay = math.exp(-2.0 * lam * (t or 0.0))
        return 0.25 * decay * (np.cos(2 * tp * pts[:, 0])
                               - np.cos(2 * tp * pts[:, 1]))

    return ExactSolution(
        velocity, velocity_gradient, pressure, nu,
        forcing=None,
        u_inf=lambda t: math.exp(-lam * t),
        grad_u_inf=lambda t: tp * math.exp(-lam * t),
        period=(1.0, 1.0),
        name="lattice",
    )


def potential_flow():
    """Transient potential flow u = grad(t (x^5 - 10 x^3 y^2 + 5 x y^4)).

    Harmonic potential, nu = 1, f = 0; the full inertia term is a
    gradient balanced by the pressure, so the velocity is degree-4
    polynomial at every time.
    """

    def phi0(x, y):
        return x**5 - 10.0 * x**3 * y**2 + 5.0 * x * y**4

    def velocity(t, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        t = t or 0.0
        return t * np.stack([5 * x**4 - 30 * x**2 * y**2 + 5 * y**4,
                             -20 * x**3 * y + 20 * x * y**3], axis=1)

    def velocity_gradient(t, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        t = t or 0.0
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = 20 * x**3 - 60 * x * y**2
        g[:, 0, 1] = -60 * x**2 * y + 20 * y**3
        g[:, 1, 0] = g[:, 0, 1]
        g[:, 1, 1] = -g[:, 0, 0]
        return t * g

    def pressure(t, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        t = t or 0.0
        return -12.5 * t**2 * (x**2 + y**2) ** 4 - phi0(x, y)

    return ExactSolution(velocity, velocity_gradient, pressure, nu=1.0,
                         forcing=None, name="potential")


def gradient_forcing(psi_gradient, base=None):
    """Forcing f = (base or 0) + grad(psi); the invariance-principle shift."""

    def forcing(t, pts):
        pts = np.atleast_2d(pts)
        g = np.asarray(psi_gradient(pts))
        if base is not None:
            g = g + np.asarray(base(t, pts))
        return g

    return forcing


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

@dataclass
class NormReport:
    """Error and field quantities of one state (nan where not available)."""

    errL2: float
    errH1broken: float
    errEnergy: float
    errEnergySharp: float
    upwind: float
    divL2: float
    divLinf: float
    kinetic: float
    dissipation: float


_VERTEX_RULE = QuadRule(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                        np.full(3, 1.0 / 6.0), 1)


def _field_jump_sq(space, coeffs, sigma, exact=None, t=None, deg=None):
    """sum_F (sigma/h) ||[[u_h]] (- u on boundary)||^2 over facets."""
    if space.family != "bdm":
        return 0.0
    deg = deg or _quad_default(space, "norms")
    total = 0.0
    ft = _facet_tables(space, deg, "interior")
    if ft.n_facets:
        jump = ft.trace_values(0, coeffs) - ft.trace_values(1, coeffs)
        total += float(np.einsum("f,fq,fqa,fqa->", sigma / ft.h_F, ft.wq,
                                 jump, jump))
    bt = _facet_tables(space, deg, "boundary")
    if bt.n_facets:
        tr = bt.trace_values(0, coeffs)
        if exact is not None:
            pts = _facet_points(space.mesh, bt)
            tr = tr - np.asarray(exact(t, pts.reshape(-1, 2))).reshape(tr.shape)
        total += float(np.einsum("f,fq,fqa,fqa->", sigma / bt.h_F, bt.wq,
                                 tr, tr))
    return total


def _grad_normal_sq(space, coeffs, exact_grad=None, t=None, deg=None):
    """sum_K h_K || (grad e) n ||^2_{L2(dK)}; the sharp-norm augmentation."""
    deg = deg or _quad_default(space, "norms")
    mesh = space.mesh
    total = 0.0
    for which in ("interior", "boundary"):
        ft = _facet_tables(space, deg, which)
        if not ft.n_facets:
            continue
        for side in range(len(ft.vals)):
            gn = np.einsum("fqja,fj->fqa", ft.grads_n[side],
                           coeffs[space.cell_dofs[ft.cells[side]]])
            if exact_grad is not None:
                pts = _facet_points(mesh, ft, side)
                ge = np.asarray(exact_grad(t, pts.reshape(-1, 2)))
                ge = ge.reshape(pts.shape[:2] + (2, 2))
                gn = gn - np.einsum("fqab,fb->fqa", ge, ft.normals)
            hK = mesh.h_K[ft.cells[side]]
            total += float(np.einsum("f,fq,fqa,fqa->", hK, ft.wq, gn, gn))
    return total


def compute_norms(state, ops, exact=None, beta=None):
    """Populate a NormReport for one flow state.

    Error fields measure u - u_h against ``exact`` (nan when absent);
    jump contributions of the error reduce to jumps of u_h on interior
    facets and to u - u_h on weak-Dirichlet boundaries.  The upwind
    seminorm uses ``beta`` (default: the state's own velocity).
    """
    V = ops.V
    u = state.u.values
    t = state.t
    deg = _quad_default(V, "norms")
    vt = _volume_tables(V, deg)
    uq = vt.function_values(u)
    divq = vt.function_divs(u)
    gq = vt.function_grads(u)

    kinetic = 0.5 * float(np.einsum("cq,cqa,cqa->", vt.wdet, uq, uq))
    div_l2 = float(np.sqrt(np.abs(np.einsum("cq,cq,cq->", vt.wdet, divq, divq))))
    vtx = _volume_tables(V, _VERTEX_RULE)
    div_linf = max(float(np.abs(divq).max()),
                   float(np.abs(vtx.function_divs(u)).max()))
    grad_sq = float(np.einsum("cq,cqab,cqab->", vt.wdet, gq, gq))
    jump_sq = _field_jump_sq(V, u, ops.sigma, deg=deg)
    dissipation = ops.nu * (grad_sq + jump_sq)
    upw = math.sqrt(max(upwind_seminorm_sq(
        V, u if beta is None else beta, u), 0.0))

    if exact is None:
        return NormReport(math.nan, math.nan, math.nan, math.nan, upw,
                          div_l2, div_linf, kinetic, dissipation)

    pts = vt.points.reshape(-1, 2)
    ue = np.asarray(exact.velocity(t, pts)).reshape(uq.shape)
    ge = np.asarray(exact.velocity_gradient(t, pts)).reshape(gq.shape)
    derr = uq - ue
    gerr = gq - ge
    err_l2 = math.sqrt(float(np.einsum("cq,cqa,cqa->", vt.wdet, derr, derr)))
    err_h1 = math.sqrt(float(np.einsum("cq,cqab,cqab->", vt.wdet, gerr, gerr)))
    ejump_sq = _field_jump_sq(V, u, ops.sigma, exact=exact.velocity, t=t,
                              deg=deg)
    err_energy = math.sqrt(err_h1**2 + ejump_sq)
    esharp = math.sqrt(err_energy**2 + _grad_normal_sq(
        V, u, exact_grad=exact.velocity_gradient, t=t, deg=deg))
    return NormReport(err_l2, err_h1, err_energy, esharp, upw, div_l2,
                      div_linf, kinetic, dissipation)


def step_records(state, ops, exact=None):
    """TimeSeries row for one state."""
    r = compute_norms(state, ops, exact)
    return {
        "t": state.t,
        "errL2": r.errL2,
        "errH1broken": r.errH1broken,
        "errEnergy": r.errEnergy,
        "divL2": r.divL2,
        "divLinf": r.divLinf,
        "kinetic": r.kinetic,
        "dissipation": r.dissipation,
        "upwind": r.upwind,
    }


# ---------------------------------------------------------------------------
# Stokes projection
# ---------------------------------------------------------------------------

def stokes_projection(w, grad_w=None, ops=None, t=None, div_tol=1e-10):
    """Discrete field matching the viscous-form moments of a
    divergence-free target.

    ``w`` is either an analytic velocity (with ``grad_w``) or a
    CoefficientVector already in the velocity space.  The solve imposes
    the target's own boundary data strongly (normal moments) and weakly
    (SIP terms); fully periodic meshes pin the velocity means to the
    target's.  Raises ValueError when the target's divergence exceeds
    ``div_tol`` at quadrature points.
    """
    from .timeloop import factorize

    V = ops.V
    deg = _quad_default(V, "viscous")
    vt = _volume_tables(V, deg)
    if isinstance(w, CoefficientVector):
        divs = vt.function_divs(w.values)
        scale = max(float(np.abs(w.values).max()), 1.0)
        if np.abs(divs).max() > div_tol * scale:
            raise ValueError("target field is not pointwise divergence-free")
        rhs = ops.A @ w.values
        g = np.zeros(V.n_dofs)
        dofs = V.dirichlet_dofs()
        g[dofs] = w.values[dofs]
        mom_target = (ops.mom.T @ w.values) if ops.mom is not None else (0.0, 0.0)
    else:
        if grad_w is None:
            raise ValueError("analytic targets need their gradient")
        gw = np.asarray(grad_w(t, vt.points.reshape(-1, 2)))
        divs = gw[:, 0, 0] + gw[:, 1, 1]
        scale = max(float(np.abs(gw).max()), 1.0)
        if np.abs(divs).max() > div_tol * scale:
            raise ValueError("target field is not pointwise divergence-free")
        rhs = ops.nu * ah_moment_vector(
            V, lambda _, p: grad_w(t, p),
            w=lambda _, p: w(t, p), sigma=ops.sigma)
        g = np.zeros(V.n_dofs)
        if len(V.mesh.boundary_facets):
            dofs, vals = V.boundary_values(w, t)
            g[dofs] = vals
        if ops.mom is not None:
            wq = np.asarray(w(t, vt.points.reshape(-1, 2)))
            wq = wq.reshape(vt.points.shape)
            mom_target = tuple(np.einsum("cq,cqa->a", vt.wdet, wq))
        else:
            mom_target = (0.0, 0.0)
    fac = factorize(ops, scheme="steady")
    u, _, _ = fac.solve(rhs, g, mom_target=mom_target)
    return CoefficientVector(V, u, t)


# ---------------------------------------------------------------------------
# convergence rates
# ---------------------------------------------------------------------------

class RateTable:
    """Observed orders log2(e_h / e_{h/2}) per norm across halving levels."""

    def __init__(self, hs, ndofs, errors):
        hs = np.asarray(hs, dtype=float)
        if len(hs) < 2:
            raise ValueError("need at least two refinement levels")
        ratios = hs[:-1] / hs[1:]
        if np.any(np.abs(ratios - 2.0) > 1e-6):
            raise ValueError(f"mesh sizes must halve; got ratios {ratios}")
        self.hs = hs
        self.ndofs = list(ndofs)
        self.errors = {k: np.asarray(v, dtype=float) for k, v in errors.items()}
        self.rates = {}
        self.preasymptotic = {}
        for name, errs in self.errors.items():
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.log2(errs[:-1] / errs[1:])
            self.rates[name] = r
            self.preasymptotic[name] = bool(
                len(r) >= 2 and np.any(np.abs(np.diff(r)) > 0.5))

    def observed(self, name):
        """Final (most-refined) observed rate for one norm."""
        return float(self.rates[name][-1])


def convergence_rates(rows):
    """rows: list of (h, n_dofs, {norm: error}) with h halving."""
    hs = [r[0] for r in rows]
    ndofs = [r[1] for r in rows]
    names = rows[0][2].keys()
    errors = {n: [r[2][n] for r in rows] for n in names}
    return RateTable(hs, ndofs, errors)


# ---------------------------------------------------------------------------
# Gronwall functionals
# ---------------------------------------------------------------------------

def gronwall_functional(exact, T, mode, params=None):
    """Gronwall-exponent value for one method class.

    mode 'classical-26':  (1/2)||grad u||_{L1(Linf)} + (4/nu)||u||^2_{L2(Linf)}
    mode 'graddiv-27':    T + C1 ||grad u||_{L1(Linf)}
                            + C2 (h^2/delta) ||u||^2_{L1(W1inf)}
    mode 'divfree-45':    T + ||u||_{L1(Linf)} + C ||grad u||_{L1(Linf)}
    Unknown constants default to 1; mode 27 needs params h and delta.
    The W^{1,inf} profile is taken as ||u||_inf + ||grad u||_inf.
    """
    from scipy.integrate import quad

    if exact.u_inf is None or exact.grad_u_inf is None:
        raise ValueError("exact solution lacks analytic sup-norm profiles")
    p = {"C": 1.0, "C1": 1.0, "C2": 1.0}
    p.update(params or {})
    tol = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    l1_u = quad(exact.u_inf, 0.0, T, **tol)[0]
    l1_gu = quad(exact.grad_u_inf, 0.0, T, **tol)[0]
    if mode == "classical-26":
        l2_u_sq = quad(lambda s: exact.u_inf(s) ** 2, 0.0, T, **tol)[0]
        return 0.5 * l1_gu + 4.0 / exact.nu * l2_u_sq
    if mode == "graddiv-27":
        if "h" not in p or "delta" not in p:
            raise ValueError("mode graddiv-27 needs params h and delta")
        l1_w1 = quad(lambda s: exact.u_inf(s) + exact.grad_u_inf(s),
                     0.0, T, **tol)[0]
        return T + p["C1"] * l1_gu + p["C2"] * p["h"] ** 2 / p["delta"] * l1_w1**2
    if mode == "divfree-45":
        return T + l1_u + p["C"] * l1_gu
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# energy budget
# ---------------------------------------------------------------------------

class BudgetReport:
    def __init__(self, passed, worst_margin, worst_time, detail=""):
        self.passed = passed
        self.worst_margin = worst_margin
        self.worst_time = worst_time
        self.detail = detail

    def __bool__(self):
        return self.passed


def energy_budget(series, delta=0.0, f_l1_l2=0.0, coercivity=1.0, rtol=1e-8,
                  sharp=False):
    """Audit the discrete energy inequality along a TimeSeries.

    Standard form, checked at every step n (left-endpoint sums):
        kinetic_n + sum_{m<n} dt [coercivity * dissipation_m
            + delta * divL2_m^2 + upwind_m^2]
        <= 2*kinetic_0 + 1.5 * f_l1_l2^2 + rtol*scale.
    ``coercivity`` is the measured constant multiplying the recorded
    dissipation rate ``nu |||u|||_e^2`` (the coercive part of the viscous
    form; see measure_coercivity).  sharp=True bounds the same left side
    by kinetic_0 alone, the tight decay statement for unforced runs.
    """
    t = series.column("t")
    if len(t) < 2:
        raise ValueError("series too short")
    dt = t[1] - t[0]
    kin = series.column("kinetic")
    diss = series.column("dissipation")
    div2 = series.column("divL2") ** 2
    upw2 = series.column("upwind") ** 2
    running = np.concatenate([[0.0], np.cumsum(
        dt * (coercivity * diss + delta * div2 + upw2))])[:len(t)]
    lhs = kin + running
    rhs = (kin[0] if sharp else 2.0 * kin[0]) + 1.5 * f_l1_l2**2
    scale = max(rhs, kin[0])
    margin = rhs + rtol * scale - lhs
    worst = int(np.argmin(margin))
    return BudgetReport(bool(margin[worst] >= 0.0), float(margin[worst]),
                        float(t[worst]))


def measure_coercivity(ops, n_samples=30, seed=0):
    """Measured floor of v'Av / (nu |||v|||_e^2) after removing grad-div."""
    V = ops.V
    rng = np.random.default_rng(seed)
    deg = _quad_default(V, "norms")
    vt = _volume_tables(V, deg)
    worst = np.inf
    for _ in range(n_samples):
        v = rng.standard_normal(V.n_dofs)
        gq = vt.function_grads(v)
        grad_sq = float(np.einsum("cq,cqab,cqab->", vt.wdet, gq, gq))
        energy_sq = grad_sq + _field_jump_sq(V, v, ops.sigma, deg=deg)
        divq = vt.function_divs(v)
        div_sq = float(np.einsum("cq,cq,cq->", vt.wdet, divq, divq))
        num = float(v @ (ops.A @ v)) - ops.delta * div_sq
        worst = min(worst, num / (ops.nu * energy_sq))
    return worst
