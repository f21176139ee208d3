"""Global finite-element spaces over a mesh.

Deterministic DOF numbering (vertices, then edges in facet order, then
cells), periodic identification by aliasing slave entities to their
masters, per-cell orientation signs for the H(div) family, strong
Dirichlet DOF sets, moment/nodal interpolation, and point evaluation.
"""

from dataclasses import dataclass, field

import numpy as np

from .mesh import _LOCAL_EDGES
from .refelem import (
    CellMap,
    facet_rule,
    poly_space_dim,
    quadrature_rule,
    ref_basis,
    shifted_legendre,
)

__all__ = [
    "FESpace",
    "MethodConfig",
    "CoefficientVector",
    "build_space",
    "method_spaces",
    "interpolate",
    "evaluate",
]


@dataclass
class MethodConfig:
    """Discretisation choice: method id, order, and form parameters.

    method is one of 'th' (Taylor-Hood), 'gdth' (grad-div stabilised
    Taylor-Hood), 'sv' (Scott-Vogelius) or 'bdm' (H(div)-conforming
    DG on Brezzi-Douglas-Marini elements with upwinding).  sigma is the
    interior-penalty parameter (default 4k^2), delta the grad-div
    parameter (used by 'gdth' only, default 0.1).
    """

    method: str
    k: int
    sigma: float = None
    delta: float = None

    def __post_init__(self):
        if self.method not in ("th", "gdth", "sv", "bdm"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method in ("th", "gdth", "sv") and self.k < 2:
            raise ValueError(f"{self.method} needs k >= 2")
        if self.method == "bdm" and self.k < 1:
            raise ValueError("bdm needs k >= 1")
        if self.sigma is None:
            self.sigma = 4.0 * self.k**2
        if self.delta is None:
            self.delta = 0.1 if self.method == "gdth" else 0.0
        if self.method == "bdm" and self.sigma <= 0:
            raise ValueError("bdm needs sigma > 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    @property
    def conforming(self):
        return self.method in ("th", "gdth", "sv")

    @property
    def exactly_divergence_free(self):
        return self.method in ("sv", "bdm")

    @property
    def velocity_family(self):
        return "lagrange" if self.conforming else "bdm"

    @property
    def pressure_family(self):
        return "lagrange" if self.method in ("th", "gdth") else "lagrange-dg"

    @property
    def pressure_degree(self):
        return self.k - 1

    def label(self):
        names = {"th": "Galerkin-TH", "gdth": "grad-div-TH", "sv": "SV", "bdm": "BDM"}
        return f"{names[self.method]}{self.k}"


class CoefficientVector:
    """Coefficients of one FE function, optionally stamped with a time."""

    def __init__(self, space, values, t=None):
        values = np.asarray(values, dtype=float)
        if values.shape != (space.n_dofs,):
            raise ValueError(f"expected {space.n_dofs} coefficients, got {values.shape}")
        self.space = space
        self.values = values
        self.t = t

    def copy(self, t=None):
        return CoefficientVector(self.space, self.values.copy(),
                                 self.t if t is None else t)


class FESpace:
    """A global FE space: DOF maps, signs, constraints, boundary sets.

    Attributes
    ----------
    cell_dofs : (nc, n_local) int
        Global DOF of each cell-local shape function (periodic slaves
        already aliased to their masters).
    cell_signs : (nc, n_local) float
        +-1 orientation factors; the global basis restricted to a cell is
        sign * (mapped reference shape function).  All ones for Lagrange.
    """

    def __init__(self, mesh, family, degree, vector_components=1):
        if family == "bdm" and vector_components != 1:
            raise ValueError("bdm is intrinsically vector-valued")
        self.mesh = mesh
        self.family = family
        self.degree = degree
        self.vector_components = vector_components
        self.ref = ref_basis(family, degree)
        self.n_components = 2 if (family == "bdm" or vector_components == 2) else 1
        self._vertex_rep = self._resolve_vertex_reps()
        self._facet_rep = np.arange(mesh.n_facets)
        for m, s in mesh.periodic_pairs:
            self._facet_rep[s] = m
        if family == "lagrange":
            self._number_lagrange()
        elif family == "lagrange-dg":
            self._number_dg()
        elif family == "bdm":
            self._number_bdm()
        else:
            raise ValueError(f"unknown family {family!r}")
        self.cell_dofs.flags.writeable = False
        self.cell_signs.flags.writeable = False

    # -- numbering --------------------------------------------------------

    def _resolve_vertex_reps(self):
        rep = np.arange(self.mesh.n_vertices)
        vm = self.mesh.periodic_vertex_map
        for v in vm:
            r = v
            seen = set()
            while r in vm and r not in seen:
                seen.add(r)
                r = vm[r]
            rep[v] = r
        return rep

    def _number_lagrange(self):
        mesh = self.mesh
        k = self.degree
        comps = self.vector_components
        rep_verts = np.unique(self._vertex_rep)
        vert_dof = {int(v): i for i, v in enumerate(rep_verts)}
        next_dof = len(rep_verts)
        n_edge = k - 1
        edge_dof = {}
        for f in range(mesh.n_facets):
            if self._facet_rep[f] == f and n_edge > 0:
                edge_dof[f] = next_dof
                next_dof += n_edge
        cell_base = next_dof
        n_int = sum(1 for e in self.ref.dof_entities if e[0] == "interior")
        next_dof += n_int * mesh.n_cells
        self.n_scalar_dofs = next_dof
        self.n_dofs = next_dof * comps
        nloc = self.ref.dim * comps
        self.cell_dofs = np.empty((mesh.n_cells, nloc), dtype=np.int64)
        self.cell_signs = np.ones((mesh.n_cells, nloc))
        self.node_coords = np.empty((self.n_scalar_dofs, 2))
        verts = mesh.vertices
        for c in range(mesh.n_cells):
            cm = CellMap(verts[mesh.cells[c]])
            phys_nodes = cm.apply(self.ref.nodes)
            for j, ent in enumerate(self.ref.dof_entities):
                if ent[0] == "vertex":
                    s = vert_dof[int(self._vertex_rep[mesh.cells[c, ent[1]]])]
                elif ent[0] == "edge":
                    l, m = ent[1], ent[2]
                    f = mesh.cell_facets[c, l]
                    g = self._facet_rep[f]
                    pos = m if not self._edge_reversed(c, l, f) else n_edge - 1 - m
                    s = edge_dof[int(g)] + pos
                else:
                    s = cell_base + c * n_int + ent[1]
                self.node_coords[s] = phys_nodes[j]
                for comp in range(comps):
                    self.cell_dofs[c, comps * j + comp] = comps * s + comp
        self._scalar_cell_dofs = self.cell_dofs[:, ::comps] // comps

    def _number_dg(self):
        mesh = self.mesh
        nloc = self.ref.dim
        self.n_scalar_dofs = self.n_dofs = nloc * mesh.n_cells
        self.cell_dofs = (np.arange(mesh.n_cells)[:, None] * nloc
                          + np.arange(nloc)[None, :]).astype(np.int64)
        self.cell_signs = np.ones((mesh.n_cells, nloc))
        self.node_coords = np.empty((self.n_dofs, 2))
        for c in range(mesh.n_cells):
            cm = CellMap(mesh.vertices[mesh.cells[c]])
            self.node_coords[self.cell_dofs[c]] = cm.apply(self.ref.nodes)
        self._scalar_cell_dofs = self.cell_dofs

    def _number_bdm(self):
        mesh = self.mesh
        k = self.degree
        n_em = k + 1
        facet_base = {}
        next_dof = 0
        for f in range(mesh.n_facets):
            if self._facet_rep[f] == f:
                facet_base[f] = next_dof
                next_dof += n_em
        n_int = self.ref.n_interior_dofs
        cell_base = next_dof
        next_dof += n_int * mesh.n_cells
        self.n_dofs = next_dof
        self.facet_dof_base = facet_base
        nloc = self.ref.dim
        self.cell_dofs = np.empty((mesh.n_cells, nloc), dtype=np.int64)
        self.cell_signs = np.ones((mesh.n_cells, nloc))
        for c in range(mesh.n_cells):
            for j, ent in enumerate(self.ref.dof_entities):
                if ent[0] == "edge":
                    l, m = ent[1], ent[2]
                    f = mesh.cell_facets[c, l]
                    g = int(self._facet_rep[f])
                    self.cell_dofs[c, j] = facet_base[g] + m
                    sign = 1.0 if self._is_plus_side(c, g) else -1.0
                    if self._edge_reversed(c, l, f) and m % 2 == 1:
                        sign = -sign
                    self.cell_signs[c, j] = sign
                else:
                    self.cell_dofs[c, j] = cell_base + c * n_int + ent[1]

    def _edge_reversed(self, c, l, f):
        """Local canonical edge direction vs the facet's stored direction."""
        lmin = _LOCAL_EDGES[l][0]
        return self.mesh.cells[c, lmin] != self.mesh.facet_vertices[f, 0]

    def _is_plus_side(self, c, logical_facet):
        return self.mesh.facet_cells[logical_facet, 0] == c

    # -- boundary ---------------------------------------------------------

    def dirichlet_dofs(self, markers=None):
        """Sorted global DOFs strongly constrained on marked boundary facets.

        Lagrange spaces constrain every DOF on the facet closure (all
        components); the H(div) family constrains the facet's normal
        moments only.
        """
        mesh = self.mesh
        dofs = set()
        for f in mesh.boundary_facets:
            mk = mesh.boundary_markers.get(int(f), 0)
            if markers is not None and mk not in markers:
                continue
            dofs.update(self.facet_closure_dofs(int(f)))
        return np.array(sorted(dofs), dtype=np.int64)

    def facet_closure_dofs(self, f):
        """Global DOFs supported on facet f (vertex + edge, or moments)."""
        if self.family == "bdm":
            base = self.facet_dof_base[int(self._facet_rep[f])]
            return list(range(base, base + self.degree + 1))
        if self.family == "lagrange-dg":
            raise ValueError("per-cell spaces carry no facet DOFs")
        c = self.mesh.facet_cells[f, 0]
        l = self.mesh.local_edge(c, f)
        out = []
        comps = self.vector_components
        for j, ent in enumerate(self.ref.dof_entities):
            on_facet = (ent[0] == "vertex" and ent[1] in _LOCAL_EDGES[l]) or \
                       (ent[0] == "edge" and ent[1] == l)
            if on_facet:
                out.extend(int(self.cell_dofs[c, comps * j + comp])
                           for comp in range(comps))
        return out

    def boundary_values(self, g, t=None, markers=None):
        """Strong Dirichlet data: (dof array, value array) for field g.

        g maps (t, points) -> values; points is (n, 2), values (n,) for
        scalar spaces, (n, 2) for vector ones.
        """
        mesh = self.mesh
        if self.family == "bdm":
            dofs, vals = [], []
            s, w = facet_rule(2 * self.degree + 2)
            leg = np.stack([shifted_legendre(m, s) for m in range(self.degree + 1)])
            for f in mesh.boundary_facets:
                mk = mesh.boundary_markers.get(int(f), 0)
                if markers is not None and mk not in markers:
                    continue
                a, b = mesh.vertices[mesh.facet_vertices[f]]
                pts = a[None, :] + s[:, None] * (b - a)[None, :]
                gn = np.asarray(g(t, pts)) @ mesh.normals[f]
                length = mesh.h_F[f]
                base = self.facet_dof_base[int(self._facet_rep[f])]
                for m in range(self.degree + 1):
                    dofs.append(base + m)
                    vals.append(length * np.sum(w * leg[m] * gn))
            return np.array(dofs, dtype=np.int64), np.array(vals)
        dofs = self.dirichlet_dofs(markers)
        comps = self.vector_components
        scalar = dofs // comps
        pts = self.node_coords[scalar]
        gv = np.asarray(g(t, pts))
        if comps == 1:
            return dofs, gv
        return dofs, gv[np.arange(len(dofs)), dofs % comps]


def build_space(mesh, family, degree, vector_components=1):
    """Construct an FESpace; raises ValueError for unsupported input."""
    return FESpace(mesh, family, degree, vector_components)


def method_spaces(mesh, config):
    """Velocity/pressure pair for a MethodConfig, with validity checks."""
    if config.method == "sv" and config.k < 4 and not mesh.alfeld:
        raise ValueError(
            "Scott-Vogelius with k < 4 needs a barycentre-split mesh")
    if config.conforming:
        V = FESpace(mesh, "lagrange", config.k, vector_components=2)
    else:
        V = FESpace(mesh, "bdm", config.k)
    Q = FESpace(mesh, config.pressure_family, config.pressure_degree)
    return V, Q


# ---------------------------------------------------------------------------
# interpolation and evaluation
# ---------------------------------------------------------------------------

def interpolate(space, field, t=None):
    """DOF-functional interpolation of an analytic field.

    Nodal for Lagrange spaces; edge normal moments plus interior moments
    for the H(div) family.  ``field(t, points)`` must accept (n, 2) point
    arrays.
    """
    if space.family != "bdm":
        vals = np.asarray(field(t, space.node_coords))
        comps = space.vector_components
        if comps == 1:
            return CoefficientVector(space, vals, t)
        out = np.empty(space.n_dofs)
        out[0::2] = vals[:, 0]
        out[1::2] = vals[:, 1]
        return CoefficientVector(space, out, t)

    mesh = space.mesh
    k = space.degree
    out = np.zeros(space.n_dofs)
    s, w = facet_rule(2 * k + 2)
    leg = np.stack([shifted_legendre(m, s) for m in range(k + 1)])
    for f in range(mesh.n_facets):
        if space._facet_rep[f] != f:
            continue
        a, b = mesh.vertices[mesh.facet_vertices[f]]
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        gn = np.asarray(field(t, pts)) @ mesh.normals[f]
        base = space.facet_dof_base[f]
        for m in range(k + 1):
            out[base + m] = mesh.h_F[f] * np.sum(w * leg[m] * gn)
    n_int = space.ref.n_interior_dofs
    if n_int:
        rule = quadrature_rule(2 * k + 2)
        W = _interior_functional_weights(space.ref, rule)  # (n_int, nq, 2)
        int_start = space.ref.dim - n_int
        for c in range(mesh.n_cells):
            cm = CellMap(mesh.vertices[mesh.cells[c]])
            gv = np.asarray(field(t, cm.apply(rule.points)))
            pulled = gv @ cm.Jinv.T * cm.detJ  # detJ * Jinv @ g
            moments = np.einsum("q,iqc,qc->i", rule.weights, W, pulled)
            out[space.cell_dofs[c, int_start:]] = moments
    return CoefficientVector(space, out, t)


def _interior_functional_weights(ref, rule):
    """Vector weights realising the reference interior moments of a basis."""
    from .refelem import modal_basis

    k = ref.degree
    n_int = ref.n_interior_dofs
    W = np.empty((n_int, rule.n_points, 2))
    row = 0
    _, g_lower = modal_basis(rule.points, k - 1)
    for d in range(1, poly_space_dim(k - 1)):
        W[row] = g_lower[:, d, :]
        row += 1
    if k >= 2:
        x, y = rule.points[:, 0], rule.points[:, 1]
        bub = x * y * (1.0 - x - y)
        bub_x = y * (1.0 - 2.0 * x - y)
        bub_y = x * (1.0 - x - 2.0 * y)
        m_vals, m_grads = modal_basis(rule.points, k - 2)
        for d in range(poly_space_dim(k - 2)):
            psi = m_vals[:, d]
            W[row, :, 0] = bub_y * psi + bub * m_grads[:, d, 1]
            W[row, :, 1] = -(bub_x * psi + bub * m_grads[:, d, 0])
            row += 1
    assert row == n_int
    return W


def locate_cell(mesh, point, tol=1e-12):
    """Lowest-index cell containing the point (barycentric test)."""
    p = np.asarray(point, dtype=float)
    v = mesh.vertices
    c = mesh.cells
    p0, p1, p2 = v[c[:, 0]], v[c[:, 1]], v[c[:, 2]]

    def cr(a, b):
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

    area2 = cr(p1 - p0, p2 - p0)
    l1 = cr(p - p0, p2 - p0) / area2
    l2 = cr(p1 - p0, p - p0) / area2
    l0 = 1.0 - l1 - l2
    scale = tol + 1e-9
    inside = (l0 >= -scale) & (l1 >= -scale) & (l2 >= -scale)
    hits = np.nonzero(inside)[0]
    if not hits.size:
        raise ValueError(f"point {tuple(p)} lies outside the mesh")
    return int(hits[0])


def evaluate(space, coeffs, point):
    """Value of the FE function at one physical point.

    On facets of discontinuous spaces the trace of the lowest-index
    adjacent cell is returned.
    """
    c = locate_cell(space.mesh, point)
    cm = CellMap(space.mesh.vertices[space.mesh.cells[c]])
    ref_pt = cm.pull_back(np.asarray(point, dtype=float))
    local = coeffs.values[space.cell_dofs[c]] * space.cell_signs[c]
    if space.family == "bdm":
        vals = space.ref.eval(ref_pt)[0][0]  # (dim, 2)
        return (cm.J @ (vals.T @ local)) / cm.detJ
    vals = space.ref.eval(ref_pt)[0][0]  # (dim,)
    if space.n_components == 1:
        return float(vals @ local)
    comps = space.vector_components
    return np.array([vals @ local[c0::comps] for c0 in range(comps)])
