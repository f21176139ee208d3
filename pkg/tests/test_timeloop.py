import math

import numpy as np
import pytest
import scipy.sparse as sp

from flowlab.assembly import OperatorSet, build_operators
from flowlab.mesh import make_periodic, unit_square_mesh
from flowlab.space import CoefficientVector, MethodConfig, method_spaces
from flowlab.timeloop import (
    FlowState,
    SingularSystemError,
    bootstrap_step,
    factorize,
    run_transient,
    sbdf2_step,
    solve_stokes,
)
from flowlab.analysis import lattice_flow, potential_flow


class _ScalarSpace:
    """1-DOF stand-in so the steppers run on a decoupled scalar ODE."""

    n_dofs = 1

    class mesh:
        boundary_facets = np.array([], dtype=int)


def scalar_ops(lam):
    """M = [1], A = [lam], no pressure: dy/dt = -lam y."""
    V = _ScalarSpace()
    Q = type("Q", (), {"n_dofs": 0})()
    M = sp.csr_matrix(np.array([[1.0]]))
    A = sp.csr_matrix(np.array([[lam]]))
    B = sp.csr_matrix((0, 1))
    ops = OperatorSet(V, Q, M, A, B, np.zeros(0), None, nu=1.0, sigma=1.0,
                      delta=0.0)
    return ops


class TestScalarOracle:
    def test_sbdf2_matches_bdf2_formula(self):
        lam, dt = 1.0, 0.1
        ops = scalar_ops(lam)
        fac = factorize(ops, dt, "sbdf2")
        y0, y1 = 1.0, math.exp(-dt)
        s0 = FlowState(CoefficientVector(ops.V, np.array([y0]), 0.0), None, 0.0, 0.0)
        s1 = FlowState(CoefficientVector(ops.V, np.array([y1]), dt), None, 0.0, dt)
        s2 = sbdf2_step((s0, s1), fac, ops, dt,
                        conv_cache=(np.zeros(1), np.zeros(1)))
        # independent oracle: (3 y2 - 4 y1 + y0)/(2 dt) = -lam y2
        expected = (4.0 * y1 - y0) / (3.0 + 2.0 * dt * lam)
        assert abs(s2.u.values[0] - expected) <= 1e-13
        assert s2.t == pytest.approx(2 * dt)

    def test_bootstrap_is_backward_euler(self):
        lam, dt = 2.0, 0.05
        ops = scalar_ops(lam)
        fac = factorize(ops, dt, "euler")
        s0 = FlowState(CoefficientVector(ops.V, np.array([1.0]), 0.0), None, 0.0, 0.0)
        s1 = bootstrap_step(s0, fac, ops, dt, conv_cache=np.zeros(1))
        assert abs(s1.u.values[0] - 1.0 / (1.0 + dt * lam)) <= 1e-14

    def test_bootstrap_local_order_two(self):
        # backward Euler has O(dt^2) local truncation error: Richardson
        lam = 1.0
        ops = scalar_ops(lam)
        errs = []
        for dt in (0.02, 0.01, 0.005):
            fac = factorize(ops, dt, "euler")
            s0 = FlowState(CoefficientVector(ops.V, np.array([1.0]), 0.0),
                           None, 0.0, 0.0)
            s1 = bootstrap_step(s0, fac, ops, dt, conv_cache=np.zeros(1))
            errs.append(abs(s1.u.values[0] - math.exp(-lam * dt)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert orders.min() > 1.9


class TestFactorization:
    def test_solve_roundtrip(self):
        mesh = unit_square_mesh(2)
        V, Q = method_spaces(mesh, MethodConfig("bdm", 2))
        exact = potential_flow()
        ops = build_operators(V, Q, 1.0, 16.0, 0.0, dirichlet=exact.velocity)
        fac = factorize(ops, 0.01, "sbdf2")
        rng = np.random.default_rng(3)
        x = rng.standard_normal(fac.aug.shape[0])
        b = fac.aug @ x
        y = fac.lu.solve(b)
        y += fac.lu.solve(b - fac.aug @ y)  # as the solver refines
        assert np.linalg.norm(y - x) <= 1e-10 * np.linalg.norm(x)

    def test_missing_mean_constraint_is_singular(self):
        mesh = unit_square_mesh(1)
        V, Q = method_spaces(mesh, MethodConfig("bdm", 1))
        exact = potential_flow()
        ops = build_operators(V, Q, 1.0, 4.0, 0.0, dirichlet=exact.velocity)
        ops.mean = np.zeros(Q.n_dofs)  # drop the mean row's content
        with pytest.raises(SingularSystemError):
            fac = factorize(ops, 0.01, "sbdf2")
            fac.solve(np.zeros(V.n_dofs), ops.boundary_state(0.0))

    def test_th_pair_factorizes(self):
        mesh = unit_square_mesh(3)
        V, Q = method_spaces(mesh, MethodConfig("th", 2))
        exact = lattice_flow(1e-3)
        ops = build_operators(V, Q, 1e-3, 16.0, 0.0, dirichlet=exact.velocity)
        factorize(ops, 0.01, "sbdf2")


class TestStokes:
    def test_zero_data_zero_solution(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        V, Q = method_spaces(mesh, MethodConfig("bdm", 2))
        ops = build_operators(V, Q, 1.0, 16.0, 0.0)
        st = solve_stokes(ops)
        assert np.abs(st.u.values).max() <= 1e-12

    def test_divergence_free_solution(self):
        mesh = unit_square_mesh(2)
        V, Q = method_spaces(mesh, MethodConfig("bdm", 2))
        exact = lattice_flow(1.0)
        ops = build_operators(V, Q, 1.0, 16.0, 0.0, dirichlet=exact.velocity)
        st = solve_stokes(ops, forcing=lambda t, p: np.stack(
            [np.sin(np.pi * p[:, 0]), np.cos(np.pi * p[:, 1])], axis=1), t=0.0)
        from flowlab.analysis import compute_norms
        rep = compute_norms(st, ops)
        assert rep.divLinf <= 1e-10

    def test_gradient_forcing_invisible_to_divfree(self):
        # f = grad(psi), psi = x^2 + y^2 - 2/3: with no-penetration data the
        # load is orthogonal to pointwise divergence-free test functions,
        # so the BDM velocity stays at zero (the pressure absorbs psi)
        mesh = unit_square_mesh(2)
        V, Q = method_spaces(mesh, MethodConfig("bdm", 2))
        zero = lambda t, p: np.zeros((len(np.atleast_2d(p)), 2))
        ops = build_operators(V, Q, 1.0, 16.0, 0.0, dirichlet=zero)

        def grad_psi(t, p):
            return 2.0 * np.atleast_2d(p)

        st = solve_stokes(ops, forcing=grad_psi, t=0.0)
        assert np.abs(st.u.values).max() <= 1e-10


class TestTransient:
    def test_zero_everything(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        series = run_transient(mesh, MethodConfig("bdm", 2), exact=None,
                               dt=0.1, tend=0.3, nu=1.0)
        assert len(series) == 4
        assert series.column("kinetic").max() == 0.0
        assert series.blowup_time is None

    def test_stokes_energy_decay(self):
        # f = 0, nu > 0: kinetic energy strictly decreases step to step
        mesh = make_periodic(unit_square_mesh(3), 1.0, 1.0)
        exact = lattice_flow(0.05)
        series = run_transient(mesh, MethodConfig("bdm", 2), exact=exact,
                               dt=2e-3, tend=0.02)
        kin = series.column("kinetic")
        assert np.all(np.diff(kin) < 0)

    def test_potential_flow_exactness_short(self):
        mesh = unit_square_mesh(2)
        exact = potential_flow()
        series = run_transient(mesh, MethodConfig("bdm", 4), exact=exact,
                               dt=1e-3, tend=5e-3)
        err = series.column("errL2")
        norm = exact.l2_norm(series.column("t")[-1], mesh)
        assert err[-1] <= 1e-9 * max(norm, 1.0)
        assert np.all(series.column("divLinf") <= 1e-9)

    def test_record_count_and_times(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        exact = lattice_flow(0.01)
        series = run_transient(mesh, MethodConfig("bdm", 1), exact=exact,
                               dt=0.05, tend=0.2)
        t = series.column("t")
        assert len(t) == 5
        assert np.all(np.diff(t) > 0)

    def test_dt_must_divide_tend(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        with pytest.raises(ValueError):
            run_transient(mesh, MethodConfig("bdm", 1),
                          exact=lattice_flow(0.01), dt=0.3, tend=1.0)
