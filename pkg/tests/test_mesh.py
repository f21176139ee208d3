import numpy as np
import pytest

from flowlab.mesh import (
    Mesh,
    MeshFormatError,
    MeshTopologyError,
    PeriodicityError,
    alfeld_split,
    load_mesh,
    make_periodic,
    save_mesh,
    uniform_refine,
    unit_square_mesh,
)

TWO_CELL = """tri-mesh v1
vertices 4
0.0 0.0
1.0 0.0
1.0 1.0
0.0 1.0
cells 2
0 1 2
0 2 3
"""


def two_cell_mesh():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(verts, cells)


class TestLoad:
    def test_two_cell_counts(self, tmp_path):
        p = tmp_path / "m.tri"
        p.write_text(TWO_CELL)
        mesh = load_mesh(p)
        assert mesh.n_cells == 2
        assert mesh.n_facets == 5
        assert len(mesh.interior_facets) == 1
        assert len(mesh.boundary_facets) == 4

    def test_inverted_cell(self, tmp_path):
        p = tmp_path / "m.tri"
        p.write_text(TWO_CELL.replace("0 1 2", "0 2 1"))
        with pytest.raises(MeshTopologyError):
            load_mesh(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.tri"
        p.write_text("tri-mesh v2\n" + TWO_CELL.split("\n", 1)[1])
        with pytest.raises(MeshFormatError):
            load_mesh(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "m.tri"
        p.write_text("\n".join(TWO_CELL.splitlines()[:-1]))
        with pytest.raises(MeshFormatError):
            load_mesh(p)

    def test_roundtrip(self, tmp_path):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        p = tmp_path / "m.tri"
        save_mesh(mesh, p)
        back = load_mesh(p)
        np.testing.assert_array_equal(back.cells, mesh.cells)
        np.testing.assert_allclose(back.vertices, mesh.vertices)
        assert back.periodic_pairs == mesh.periodic_pairs

    def test_markers_roundtrip(self, tmp_path):
        mesh = unit_square_mesh(1)
        p = tmp_path / "m.tri"
        save_mesh(mesh, p)
        back = load_mesh(p)
        assert back.boundary_markers == mesh.boundary_markers

    def test_hanging_node(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
                          [0.5, 0.0], [0.5, -1.0]])
        cells = np.array([[0, 1, 2], [0, 2, 3], [0, 5, 4], [4, 5, 1]])
        with pytest.raises(MeshTopologyError):
            Mesh(verts, cells)


class TestStructured:
    def test_counts_2x2(self):
        mesh = unit_square_mesh(2)
        assert mesh.n_cells == 8
        assert mesh.n_facets == 16
        assert len(mesh.interior_facets) == 8
        assert len(mesh.boundary_facets) == 8

    def test_area_sums_to_one(self):
        mesh = unit_square_mesh(3)
        assert abs(mesh.cell_areas.sum() - 1.0) < 1e-12

    def test_facet_invariants(self):
        mesh = unit_square_mesh(3)
        v = mesh.vertices
        for f in mesh.interior_facets:
            c0, c1 = mesh.facet_cells[f]
            assert c0 < c1
            n = mesh.normals[f]
            centroid0 = v[mesh.cells[c0]].mean(axis=0)
            a, b = v[mesh.facet_vertices[f]]
            assert n @ (0.5 * (a + b) - centroid0) > 0
        # h_F <= h_K of adjacent cells
        for f in range(mesh.n_facets):
            for c in mesh.facet_cells[f]:
                if c >= 0:
                    assert mesh.h_F[f] <= mesh.h_K[c] + 1e-14


class TestPeriodic:
    def test_2x2_pairs(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        assert len(mesh.periodic_pairs) == 4
        assert len(mesh.interior_facets) == 12
        assert len(mesh.boundary_facets) == 0
        masters = {m for m, _ in mesh.periodic_pairs}
        slaves = {s for _, s in mesh.periodic_pairs}
        assert not masters & slaves

    def test_idempotent(self):
        m1 = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        m2 = make_periodic(m1, 1.0, 1.0)
        assert m1.periodic_pairs == m2.periodic_pairs

    def test_mismatch(self):
        verts = np.array([[0.0, 0.0], [0.6, 0.0], [1.0, 0.0],
                          [0.0, 1.0], [0.5, 1.0], [1.0, 1.0],
                          [0.0, 0.3], [1.0, 0.5]])
        cells = np.array([
            [0, 1, 6], [1, 4, 6], [6, 4, 3], [1, 2, 7], [1, 7, 4], [7, 5, 4],
        ])
        mesh = Mesh(verts, cells)
        with pytest.raises(PeriodicityError):
            make_periodic(mesh, 1.0, 1.0)

    def test_interior_facet_pair_rejected(self):
        mesh = unit_square_mesh(1)
        f = int(mesh.interior_facets[0])
        with pytest.raises(PeriodicityError):
            Mesh(mesh.vertices, mesh.cells, periodic_pairs=[(f, f)])

    def test_pairing_is_bijection(self):
        mesh = make_periodic(unit_square_mesh(3), 1.0, 1.0)
        masters = [m for m, _ in mesh.periodic_pairs]
        slaves = [s for _, s in mesh.periodic_pairs]
        assert len(set(masters)) == len(masters)
        assert len(set(slaves)) == len(slaves)

    def test_slave_endpoint_order_matches_master(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        v = mesh.vertices
        for m, s in mesh.periodic_pairs:
            pm = v[mesh.facet_vertices[m]]
            ps = v[mesh.facet_vertices[s]]
            shift = ps.mean(axis=0) - pm.mean(axis=0)
            assert np.linalg.norm(ps - (pm + shift)) < 1e-12


class TestAlfeld:
    def test_single_triangle(self):
        mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                    np.array([[0, 1, 2]]))
        split = alfeld_split(mesh)
        assert split.n_cells == 3
        assert split.n_vertices == 4
        assert len(split.interior_facets) == 3
        assert split.alfeld

    def test_two_cell(self):
        split = alfeld_split(two_cell_mesh())
        assert split.n_cells == 6
        assert split.n_vertices == 6
        assert split.n_facets == 11

    def test_double_split(self):
        mesh = two_cell_mesh()
        twice = alfeld_split(alfeld_split(mesh))
        assert twice.n_cells == 9 * mesh.n_cells // 1 * 2 // 2  # 3*3*2
        assert twice.n_cells == 18

    def test_markers_and_pairs_inherited(self):
        base = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        split = alfeld_split(base)
        assert len(split.periodic_pairs) == 4
        assert split.cell_areas.sum() == pytest.approx(1.0, abs=1e-12)


class TestRefine:
    def test_two_cell(self):
        mesh = two_cell_mesh()
        fine = uniform_refine(mesh)
        assert fine.n_cells == 8
        assert fine.stats().h_max == pytest.approx(mesh.stats().h_max / 2)

    def test_min_angle_preserved(self):
        mesh = unit_square_mesh(2)
        fine = uniform_refine(mesh)
        assert fine.stats().min_angle == pytest.approx(mesh.stats().min_angle)

    def test_three_levels(self):
        mesh = two_cell_mesh()
        for _ in range(3):
            mesh = uniform_refine(mesh)
        assert mesh.n_cells == 128

    def test_periodic_inherited(self):
        base = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        fine = uniform_refine(base)
        assert len(fine.periodic_pairs) == 8
        assert len(fine.boundary_facets) == 0
        assert abs(fine.cell_areas.sum() - 1.0) < 1e-12

    def test_markers_inherited(self):
        base = unit_square_mesh(1)
        fine = uniform_refine(base)
        assert len(fine.boundary_facets) == 8
        assert all(fine.boundary_markers[int(f)] == 0 for f in fine.boundary_facets)


class TestStats:
    def test_two_cell(self):
        stats = two_cell_mesh().stats()
        assert stats.n_cells == 2
        assert stats.n_facets == 5
        assert stats.n_interior_facets == 1
        assert stats.h_max == pytest.approx(np.sqrt(2.0))
        assert stats.min_angle == pytest.approx(np.pi / 4)

    def test_periodic_counts_pairs_once(self):
        mesh = make_periodic(unit_square_mesh(2), 1.0, 1.0)
        assert mesh.stats().n_interior_facets == 12
