import numpy as np
import pytest

from flowlab.assembly import (
    assemble_convection,
    assemble_divergence,
    assemble_forcing,
    assemble_mass,
    assemble_viscous,
    upwind_seminorm_sq,
)
from flowlab.mesh import Mesh, make_periodic, unit_square_mesh
from flowlab.refelem import CellMap, facet_rule, map_basis, quadrature_rule, ref_basis
from flowlab.space import build_space, interpolate


def brute_energy_norm_sq(space, coeffs, sigma):
    """Independent energy-norm oracle: per-cell quadrature plus facet jumps."""
    mesh = space.mesh
    rule = quadrature_rule(2 * space.degree + 2)
    total = 0.0
    for c in range(mesh.n_cells):
        cm = CellMap(mesh.vertices[mesh.cells[c]])
        local = coeffs[space.cell_dofs[c]] * space.cell_signs[c]
        if space.family == "bdm":
            _, _, pg, _ = map_basis(cm, space.ref, rule)
            g = np.einsum("qjab,j->qab", pg, local)
        else:
            _, _, pg = map_basis(cm, space.ref, rule)
            gs = np.einsum("qja,j->qa", pg, local[0::2]), \
                 np.einsum("qja,j->qa", pg, local[1::2])
            g = np.stack(gs, axis=1)
        total += cm.detJ * np.einsum("q,qab,qab->", rule.weights, g, g)
    if space.family != "bdm":
        return total
    s, w = facet_rule(2 * space.degree + 2)
    mesh_facets = list(mesh.interior_facets) + list(mesh.boundary_facets)
    for f in mesh_facets:
        sides = []
        nsides = 2 if mesh.facet_cells[f, 1] >= 0 else 1
        for side in range(nsides):
            c = mesh.facet_cells[f, side]
            geo = mesh.facet_side_geo[f, side]
            a, b = mesh.vertices[mesh.facet_vertices[geo]]
            pts = a[None, :] + s[:, None] * (b - a)[None, :]
            cm = CellMap(mesh.vertices[mesh.cells[c]])
            vals = space.ref.eval(cm.pull_back(pts))[0]
            pv = np.einsum("ab,qjb->qja", cm.J, vals) / cm.detJ
            local = coeffs[space.cell_dofs[c]] * space.cell_signs[c]
            sides.append(np.einsum("qja,j->qa", pv, local))
        jump = sides[0] - sides[1] if nsides == 2 else sides[0]
        total += sigma / mesh.h_F[f] * mesh.h_F[f] * np.einsum(
            "q,qa,qa->", w, jump, jump)
    return total


def ref_triangle_mesh():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                np.array([[0, 1, 2]]))


class TestMass:
    def test_p1_reference_entries(self):
        V = build_space(ref_triangle_mesh(), "lagrange", 1)
        M = assemble_mass(V).toarray()
        expect = np.full((3, 3), 1 / 24)
        np.fill_diagonal(expect, 1 / 12)
        np.testing.assert_allclose(M, expect, atol=1e-15)

    def test_partition_of_unity(self):
        mesh = unit_square_mesh(3)
        V = build_space(mesh, "lagrange", 3)
        M = assemble_mass(V)
        ones = np.ones(V.n_dofs)
        assert abs(ones @ (M @ ones) - 1.0) < 1e-13

    def test_spd(self):
        mesh = unit_square_mesh(1)
        V = build_space(mesh, "lagrange", 2, vector_components=2)
        M = assemble_mass(V).toarray()
        np.testing.assert_allclose(M, M.T, atol=1e-15)
        w = np.linalg.eigvalsh(M)
        assert w.min() > 0

    def test_bdm_mass_spd(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        V = build_space(mesh, "bdm", 2)
        M = assemble_mass(V).toarray()
        assert np.linalg.eigvalsh(M).min() > 0


class TestViscous:
    @pytest.mark.parametrize("method,k", [("bdm", 2), ("bdm", 3)])
    def test_symmetry(self, method, k):
        mesh = unit_square_mesh(3)
        V = build_space(mesh, method, k)
        A, _ = assemble_viscous(V, nu=1.0, sigma=4.0 * k * k, delta=0.0)
        diff = abs(A - A.T).max()
        assert diff <= 1e-12 * abs(A).max()

    def test_symmetry_conforming(self):
        mesh = unit_square_mesh(3)
        V = build_space(mesh, "lagrange", 2, vector_components=2)
        A, _ = assemble_viscous(V, nu=0.7, sigma=16.0, delta=0.1)
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()

    @pytest.mark.parametrize("periodic", [False, True])
    def test_coercivity_floor(self, periodic):
        k = 2
        mesh = unit_square_mesh(3)
        if periodic:
            mesh = make_periodic(mesh, 1.0, 1.0)
        V = build_space(mesh, "bdm", k)
        nu = 1e-2
        A, _ = assemble_viscous(V, nu=nu, sigma=4.0 * k * k, delta=0.0)
        rng = np.random.default_rng(11)
        for _ in range(100):
            v = rng.standard_normal(V.n_dofs)
            lhs = v @ (A @ v)
            rhs = nu * brute_energy_norm_sq(V, v, 4.0 * k * k)
            assert lhs >= 0.1 * rhs

    def test_energy_norm_matches_A_for_zero_penalty_cross_terms(self):
        # conforming space: A(nu=1, delta=0) realises the broken H1 seminorm
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "lagrange", 2, vector_components=2)
        A, _ = assemble_viscous(V, nu=1.0, sigma=16.0, delta=0.0)
        rng = np.random.default_rng(4)
        v = rng.standard_normal(V.n_dofs)
        assert abs(v @ (A @ v) - brute_energy_norm_sq(V, v, 0.0)) < 1e-10

    def test_graddiv_vanishes_on_divfree_interpolant(self):
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "bdm", 2)

        def rot(t, p):
            p = np.atleast_2d(p)
            return np.stack([p[:, 1], -p[:, 0]], axis=1)

        u = interpolate(V, rot)
        A1, _ = assemble_viscous(V, nu=1.0, sigma=16.0, delta=0.0)
        A2, _ = assemble_viscous(V, nu=1.0, sigma=16.0, delta=7.0)
        gd = (A2 - A1) / 7.0
        assert abs(u.values @ (gd @ u.values)) < 1e-11

    def test_sigma_warning(self):
        mesh = unit_square_mesh(1)
        V = build_space(mesh, "bdm", 2)
        with pytest.warns(UserWarning):
            assemble_viscous(V, nu=1.0, sigma=1.0, delta=0.0)
        with pytest.raises(ValueError):
            assemble_viscous(V, nu=1.0, sigma=0.0, delta=0.0)


class TestDivergence:
    def test_divergence_theorem(self):
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "bdm", 2)
        Q = build_space(mesh, "lagrange-dg", 1)
        B, mean = assemble_divergence(V, Q)
        rng = np.random.default_rng(5)
        v = rng.standard_normal(V.n_dofs)
        v[V.dirichlet_dofs()] = 0.0  # v.n = 0 on the boundary
        # q == 1 expanded in the DG space
        one = interpolate(Q, lambda t, p: np.ones(len(np.atleast_2d(p))))
        assert abs(one.values @ (B @ v)) < 1e-12

    def test_mean_vector(self):
        mesh = unit_square_mesh(2)
        Q = build_space(mesh, "lagrange-dg", 1)
        _, mean = assemble_divergence(build_space(mesh, "bdm", 2), Q)
        one = interpolate(Q, lambda t, p: np.ones(len(np.atleast_2d(p))))
        assert abs(mean @ one.values - 1.0) < 1e-13

    def test_interpolant_of_divfree_field_is_discretely_divfree(self):
        def u0(t, pts):
            pts = np.atleast_2d(pts)
            return np.stack([
                np.sin(2 * np.pi * pts[:, 0]) * np.sin(2 * np.pi * pts[:, 1]),
                np.cos(2 * np.pi * pts[:, 0]) * np.cos(2 * np.pi * pts[:, 1]),
            ], axis=1)

        def quad_field(t, pts):
            pts = np.atleast_2d(pts)
            return np.stack([pts[:, 0] ** 2, -2 * pts[:, 0] * pts[:, 1]], axis=1)

        mesh = unit_square_mesh(4)
        V = build_space(mesh, "bdm", 2)
        Q = build_space(mesh, "lagrange-dg", 1)
        B, _ = assemble_divergence(V, Q)
        # polynomial div-free field: commuting interpolation to round-off
        up = interpolate(V, quad_field)
        assert np.abs(B @ up.values).max() < 1e-14
        # transcendental field: divergence moments at quadrature-error level,
        # comfortably below the h^2 interpolation-consistency scale
        u = interpolate(V, u0)
        h = mesh.stats().h_max
        assert np.abs(B @ u.values).max() < 0.1 * h**2


class TestConvection:
    def test_upwind_identity_constant_field(self):
        # beta constant (div-free, periodic): v' C v equals the upwind seminorm
        mesh = make_periodic(unit_square_mesh(3), 1.0, 1.0)
        V = build_space(mesh, "bdm", 2)
        beta = interpolate(V, lambda t, p: np.broadcast_to(
            [0.7, -0.4], (len(np.atleast_2d(p)), 2)))
        C, rhs = assemble_convection(V, beta)
        assert np.all(rhs == 0.0)
        rng = np.random.default_rng(9)
        for _ in range(20):
            v = rng.standard_normal(V.n_dofs)
            lhs = v @ (C.matrix @ v)
            upw = upwind_seminorm_sq(V, beta, v)
            assert abs(lhs - upw) <= 1e-10 * max(upw, 1.0)

    def test_conforming_skew_symmetry(self):
        mesh = make_periodic(unit_square_mesh(3), 1.0, 1.0)
        V = build_space(mesh, "lagrange", 2, vector_components=2)
        beta = interpolate(V, lambda t, p: np.broadcast_to(
            [1.0, 0.5], (len(np.atleast_2d(p)), 2)))
        C, _ = assemble_convection(V, beta)
        rng = np.random.default_rng(10)
        scale = abs(C.matrix).max()
        for _ in range(20):
            v = rng.standard_normal(V.n_dofs)
            assert abs(v @ (C.matrix @ v)) <= 1e-11 * scale * (v @ v)

    def test_zero_jump_upwind_seminorm(self):
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "bdm", 2)
        beta = interpolate(V, lambda t, p: np.broadcast_to(
            [1.0, 0.0], (len(np.atleast_2d(p)), 2)))

        def rot(t, p):
            p = np.atleast_2d(p)
            return np.stack([p[:, 1], -p[:, 0]], axis=1)

        w = interpolate(V, rot)  # linear field, continuous, zero jumps
        assert upwind_seminorm_sq(V, beta, w) < 1e-13

    def test_space_mismatch(self):
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "bdm", 2)
        W = build_space(mesh, "bdm", 1)
        beta = interpolate(W, lambda t, p: np.zeros((len(np.atleast_2d(p)), 2)))
        with pytest.raises(ValueError):
            assemble_convection(V, beta)

    def test_workspace_reuse_matches_fresh(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        V = build_space(mesh, "bdm", 2)
        rng = np.random.default_rng(12)
        b1 = rng.standard_normal(V.n_dofs)
        b2 = rng.standard_normal(V.n_dofs)
        C1a, _ = assemble_convection(V, b1)
        C2, _ = assemble_convection(V, b2)
        C1b, _ = assemble_convection(V, b1)
        assert (C1a.matrix != C1b.matrix).nnz == 0
        assert abs(C1a.matrix - C2.matrix).max() > 0


class TestForcing:
    def test_zero(self):
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "bdm", 2)
        F = assemble_forcing(V, lambda t, p: np.zeros((len(p), 2)))
        assert np.all(F == 0.0)

    def test_constant_load_sums_to_area(self):
        mesh = unit_square_mesh(2)
        V = build_space(mesh, "lagrange", 3, vector_components=2)
        F = assemble_forcing(V, lambda t, p: np.broadcast_to(
            [1.0, 0.0], (len(p), 2)))
        assert abs(F[0::2].sum() - 1.0) < 1e-13
        assert abs(F[1::2].sum()) < 1e-13


class TestDeterminism:
    def test_bit_identical_assembly(self):
        mesh = make_periodic(unit_square_mesh(3), 1.0, 1.0)
        V = build_space(mesh, "bdm", 2)
        Q = build_space(mesh, "lagrange-dg", 1)
        A1, _ = assemble_viscous(V, nu=1e-3, sigma=16.0, delta=0.0)
        A2, _ = assemble_viscous(V, nu=1e-3, sigma=16.0, delta=0.0)
        assert np.array_equal(A1.data, A2.data)
        B1, m1 = assemble_divergence(V, Q)
        B2, m2 = assemble_divergence(V, Q)
        assert np.array_equal(B1.data, B2.data) and np.array_equal(m1, m2)


class TestTraceConstant:
    def measure(self, mesh, k, seed=0):
        V = build_space(mesh, "bdm", k)
        rng = np.random.default_rng(seed)
        rule = quadrature_rule(2 * k + 2)
        s, w = facet_rule(2 * k + 2)
        worst = 0.0
        for c in range(mesh.n_cells):
            cm = CellMap(mesh.vertices[mesh.cells[c]])
            _, pv, _, _ = map_basis(cm, V.ref, rule)
            for v in rng.standard_normal((20, V.ref.dim)):
                vol = cm.detJ * np.einsum("q,qja,j,qia,i->", rule.weights,
                                          pv, v, pv, v)
                bnd = 0.0
                for l, (a, b) in enumerate(((1, 2), (0, 2), (0, 1))):
                    pa = mesh.vertices[mesh.cells[c][a]]
                    pb = mesh.vertices[mesh.cells[c][b]]
                    pts = pa[None, :] + s[:, None] * (pb - pa)[None, :]
                    vals = V.ref.eval(cm.pull_back(pts))[0]
                    tv = np.einsum("ab,qjb,j->qa", cm.J, vals, v) / cm.detJ
                    bnd += np.linalg.norm(pb - pa) * np.einsum(
                        "q,qa,qa->", w, tv, tv)
                worst = max(worst, (bnd / vol) * mesh.h_K[c])
        return np.sqrt(worst)

    def test_h_independence(self):
        from flowlab.mesh import uniform_refine

        mesh = unit_square_mesh(2)
        c0 = self.measure(mesh, 2)
        c1 = self.measure(uniform_refine(mesh), 2)
        c2 = self.measure(uniform_refine(uniform_refine(mesh)), 2)
        assert abs(c1 - c0) <= 0.05 * c0
        assert abs(c2 - c1) <= 0.05 * c1
