"""Assembly of the discrete flow operators into scipy CSR matrices.

Covers the velocity mass matrix, the symmetric-interior-penalty viscous
form with optional grad-div augmentation, the velocity-pressure
divergence coupling with the pressure-mean vector, the skew-symmetrised
convection form with central facet flux and upwind penalty, load
vectors, and weak-Dirichlet lifting terms.

Facet sums run over logical interior facets (periodic pairs count once,
traces taken on each side's own geometry) plus, for tangentially
discontinuous spaces, the boundary.  H1-conforming spaces drop all facet
terms.  Assembly is vectorised over cells/facets and deterministic:
repeated runs produce bit-identical matrices.
"""

import warnings

import numpy as np
import scipy.sparse as sp

from .refelem import facet_rule, quadrature_rule
from .space import CoefficientVector

__all__ = [
    "OperatorSet",
    "ConvectionOperator",
    "assemble_mass",
    "assemble_viscous",
    "assemble_divergence",
    "assemble_convection",
    "assemble_forcing",
    "sip_lifting",
    "ah_moment_vector",
    "upwind_seminorm_sq",
    "build_operators",
    "velocity_mean_columns",
]

# keep the precontracted convection tensor below ~256 MB
_CONV_TENSOR_CAP = 32 * 2**20


def _quad_default(space, kind):
    k = space.degree
    return {
        "mass": 2 * k,
        "viscous": 2 * k + 2,
        "divergence": 2 * k,
        "convection": 3 * k + 2,
        "forcing": 2 * k + 2,
        "norms": 2 * k + 4,
    }[kind]


# ---------------------------------------------------------------------------
# cached physical basis tables
# ---------------------------------------------------------------------------

class VolumeTables:
    """Physical basis values at volume quadrature points, one space+rule.

    Velocity spaces expose vals (nc,nq,nloc,2), divs (nc,nq,nloc) and
    grads (nc,nq,nloc,2,2); scalar spaces expose vals (nc,nq,nloc).
    Orientation signs are folded in, so scattering uses cell_dofs alone.
    Arrays for conforming spaces are broadcast views where possible.
    """

    def __init__(self, space, exact_degree):
        mesh = space.mesh
        rule = (exact_degree if hasattr(exact_degree, "points")
                else quadrature_rule(exact_degree))
        self.rule = rule
        self.space = space
        v = mesh.vertices[mesh.cells]  # (nc, 3, 2)
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self.J = J
        self.detJ = detJ
        self.Jinv = np.linalg.inv(J)
        self.wdet = rule.weights[None, :] * detJ[:, None]
        self.points = (v[:, None, 0, :]
                       + np.einsum("cab,qb->cqa", J, rule.points))
        nc = mesh.n_cells
        nq = rule.n_points

        if space.family == "bdm":
            rv, rg, rd = space.ref.eval(rule.points)
            sign = space.cell_signs  # (nc, nloc)
            vals = np.einsum("cab,qjb->cqja", J, rv) / detJ[:, None, None, None]
            self.vals = vals * sign[:, None, :, None]
            self.divs = (rd[None, :, :] / detJ[:, None, None]) * sign[:, None, :]
            self._ref_grads = rg
            self._grads = None
        else:
            rv, rg = space.ref.eval(rule.points)
            comps = space.vector_components
            if comps == 1:
                self.vals = np.broadcast_to(rv[None, :, :], (nc, nq, space.ref.dim))
                self._ref_grads = rg
                self._grads = None
            else:
                nsc = space.ref.dim
                vv = np.zeros((nq, 2 * nsc, 2))
                vv[:, 0::2, 0] = rv
                vv[:, 1::2, 1] = rv
                self.vals = np.broadcast_to(vv[None], (nc, nq, 2 * nsc, 2))
                pg = np.einsum("cba,qjb->cqja", self.Jinv, rg)  # J^-T grad
                divs = np.empty((nc, nq, 2 * nsc))
                divs[:, :, 0::2] = pg[:, :, :, 0]
                divs[:, :, 1::2] = pg[:, :, :, 1]
                self.divs = divs
                self._scalar_grads = pg
                self._grads = None

    @property
    def grads(self):
        """(nc, nq, nloc, 2, 2) array; grads[c,q,j,a,b] = d v_a / d x_b."""
        if self._grads is None:
            space = self.space
            if space.family == "bdm":
                g = np.einsum("eac,qjcd,edb->eqjab", self.J, self._ref_grads,
                              self.Jinv, optimize=True)
                g /= self.detJ[:, None, None, None, None]
                self._grads = g * space.cell_signs[:, None, :, None, None]
            elif space.vector_components == 2:
                nc, nq, nsc, _ = self._scalar_grads.shape
                g = np.zeros((nc, nq, 2 * nsc, 2, 2))
                g[:, :, 0::2, 0, :] = self._scalar_grads
                g[:, :, 1::2, 1, :] = self._scalar_grads
                self._grads = g
            else:
                self._grads = np.einsum("cba,qjb->cqja", self.Jinv, self._ref_grads)
        return self._grads

    def function_values(self, coeffs):
        """Field values at quadrature points: (nc, nq[, 2])."""
        local = coeffs[self.space.cell_dofs]
        nc, nq = self.wdet.shape
        if self.space.family == "bdm":
            flat = getattr(self, "_vals_flat", None)
            if flat is None:
                flat = self._vals_flat = np.ascontiguousarray(
                    np.moveaxis(self.vals, 2, 3)).reshape(nc, nq * 2, -1)
            return np.matmul(flat, local[:, :, None]).reshape(nc, nq, 2)
        if self.space.vector_components == 2:
            flat = getattr(self, "_vref_flat", None)
            if flat is None:
                # values are cell-independent: (q, j, a) -> (j, q*a)
                flat = self._vref_flat = np.ascontiguousarray(
                    np.moveaxis(self.vals[0], 1, 0).reshape(-1, nq * 2))
            return np.matmul(local, flat).reshape(nc, nq, 2)
        return np.matmul(self.vals, local[:, :, None])[:, :, 0]

    def function_divs(self, coeffs):
        local = coeffs[self.space.cell_dofs]
        return np.matmul(self.divs, local[:, :, None])[:, :, 0]

    def function_grads(self, coeffs):
        """Broken gradient at quadrature points: (nc, nq, 2, 2)."""
        local = coeffs[self.space.cell_dofs]
        nc, nq = self.wdet.shape
        if self.space.family == "bdm":
            flat = getattr(self, "_grads_flat", None)
            if flat is None:
                flat = self._grads_flat = np.ascontiguousarray(
                    np.moveaxis(self.grads, 2, 4)).reshape(nc, nq * 4, -1)
            return np.matmul(flat, local[:, :, None]).reshape(nc, nq, 2, 2)
        # conforming vector: component a uses the scalar gradients
        pg = getattr(self, "_sgrads_flat", None)
        if pg is None:
            nsc = self._scalar_grads.shape[2]
            pg = self._sgrads_flat = np.ascontiguousarray(
                np.swapaxes(self._scalar_grads, 2, 3)).reshape(
                nc, nq * 2, nsc)
        out = np.empty((nc, nq, 2, 2))
        out[:, :, 0, :] = np.matmul(
            pg, coeffs[self.space.cell_dofs[:, 0::2]][:, :, None]
        ).reshape(nc, nq, 2)
        out[:, :, 1, :] = np.matmul(
            pg, coeffs[self.space.cell_dofs[:, 1::2]][:, :, None]
        ).reshape(nc, nq, 2)
        return out

    def convective_term(self, beta_at_q):
        """(beta . grad) of every shape function: (nc, nq, nloc, 2).

        Contracts the reference gradients against J^-1 beta, avoiding the
        full physical gradient array.
        """
        bref = np.einsum("cab,cqb->cqa", self.Jinv, beta_at_q)
        space = self.space
        if space.family == "bdm":
            s = np.einsum("qjab,cqb->cqja", self._ref_grads, bref)
            s = np.einsum("cab,cqjb->cqja", self.J, s)
            s /= self.detJ[:, None, None, None]
            return s * space.cell_signs[:, None, :, None]
        # vector Lagrange: (beta.grad)(phi e_a) = (ghat . J^-1 beta) e_a
        dphi = np.einsum("qjb,cqb->cqj", self._ref_grads, bref)
        nc, nq, nsc = dphi.shape
        out = np.zeros((nc, nq, 2 * nsc, 2))
        out[:, :, 0::2, 0] = dphi
        out[:, :, 1::2, 1] = dphi
        return out


class FacetTables:
    """Traces of a velocity space on logical facets at 1D Gauss points.

    side arrays have shape (nf, nq, nloc, ...): entry f uses facet
    ``facets[f]``, trace of cell ``cells[s][f]`` on its own geometric
    facet, parameterised by the facet's canonical direction so that
    points of both sides coincide (periodic facets via translation).
    """

    def __init__(self, space, exact_degree, which="interior"):
        mesh = space.mesh
        self.space = space
        s, w = facet_rule(exact_degree)
        self.s = s
        self.w1d = w
        if which == "interior":
            facets = np.asarray(mesh.interior_facets, dtype=np.int64)
            sides = 2
        else:
            facets = np.asarray(mesh.boundary_facets, dtype=np.int64)
            sides = 1
        self.facets = facets
        self.n_facets = len(facets)
        self.h_F = mesh.h_F[facets]
        self.normals = mesh.normals[facets]
        self.wq = self.w1d[None, :] * self.h_F[:, None]  # physical arclength weights
        self.cells = []
        self.vals = []
        self.grads_n = []  # (grad v) n_F
        if self.n_facets == 0:
            return

        # reference trace tables per (local edge, reversed)
        from .mesh import _LOCAL_EDGES
        from .refelem import REF_VERTICES

        nq = len(s)
        ref = space.ref
        tab_v = {}
        tab_g = {}
        for l in range(3):
            a, b = _LOCAL_EDGES[l]
            pa, pb = REF_VERTICES[a], REF_VERTICES[b]
            for rev in (0, 1):
                t = 1.0 - s if rev else s
                pts = pa[None, :] + t[:, None] * (pb - pa)[None, :]
                if space.family == "bdm":
                    rv, rg, _ = ref.eval(pts)
                else:
                    rv, rg = ref.eval(pts)
                tab_v[(l, rev)] = rv
                tab_g[(l, rev)] = rg

        v = mesh.vertices[mesh.cells]
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Jinv = np.linalg.inv(J)

        for side in range(sides):
            cells = mesh.facet_cells[facets, side]
            geo = mesh.facet_side_geo[facets, side]
            ls = np.array([mesh.local_edge(c, g) for c, g in zip(cells, geo)])
            revs = np.array([
                int(space._edge_reversed(c, l, g))
                for c, l, g in zip(cells, ls, geo)])
            rv = np.stack([tab_v[(l, r)] for l, r in zip(ls, revs)])
            rg = np.stack([tab_g[(l, r)] for l, r in zip(ls, revs)])
            Jc = J[cells]
            Jic = Jinv[cells]
            dc = detJ[cells]
            if space.family == "bdm":
                sign = space.cell_signs[cells]
                pv = np.einsum("fab,fqjb->fqja", Jc, rv) / dc[:, None, None, None]
                pv *= sign[:, None, :, None]
                pg = np.einsum("fac,fqjcd,fdb->fqjab", Jc, rg, Jic,
                               optimize=True) / dc[:, None, None, None, None]
                pg *= sign[:, None, :, None, None]
                gn = np.einsum("fqjab,fb->fqja", pg, self.normals)
            elif space.vector_components == 2:
                nsc = ref.dim
                pv = np.zeros((len(facets), nq, 2 * nsc, 2))
                pv[:, :, 0::2, 0] = rv
                pv[:, :, 1::2, 1] = rv
                sg = np.einsum("fba,fqjb->fqja", Jic, rg)
                gn_s = np.einsum("fqja,fa->fqj", sg, self.normals)
                gn = np.zeros((len(facets), nq, 2 * nsc, 2))
                gn[:, :, 0::2, 0] = gn_s
                gn[:, :, 1::2, 1] = gn_s
            else:
                pv = rv
                sg = np.einsum("fba,fqjb->fqja", Jic, rg)
                gn = np.einsum("fqja,fa->fqj", sg, self.normals)
            self.cells.append(cells)
            self.vals.append(pv)
            self.grads_n.append(gn)

    def trace_values(self, side, coeffs):
        """Trace of a coefficient field on one side: (nf, nq, 2) or (nf, nq)."""
        local = coeffs[self.space.cell_dofs[self.cells[side]]]
        V = self.vals[side]
        if V.ndim == 4:
            flat = getattr(self, "_vals_flat", None)
            if flat is None:
                flat = self._vals_flat = [None] * len(self.vals)
            if flat[side] is None:
                nf, nq = V.shape[:2]
                flat[side] = np.ascontiguousarray(
                    np.moveaxis(V, 2, 3)).reshape(nf, nq * 2, -1)
            nf, nq = V.shape[:2]
            return np.matmul(flat[side], local[:, :, None]).reshape(nf, nq, 2)
        return np.matmul(V, local[:, :, None])[:, :, 0]


def _volume_tables(space, exact_degree):
    cache = getattr(space, "_vol_tables", None)
    if cache is None:
        cache = space._vol_tables = {}
    if exact_degree not in cache:
        cache[exact_degree] = VolumeTables(space, exact_degree)
    return cache[exact_degree]


def _facet_tables(space, exact_degree, which):
    cache = getattr(space, "_facet_tables", None)
    if cache is None:
        cache = space._facet_tables = {}
    key = (exact_degree, which)
    if key not in cache:
        cache[key] = FacetTables(space, exact_degree, which)
    return cache[key]


def _scatter_blocks(blocks, rows_dofs, cols_dofs, shape):
    rows = np.broadcast_to(rows_dofs[:, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(cols_dofs[:, None, :], blocks.shape).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=shape).tocsr()


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def assemble_mass(space, exact_degree=None):
    """Velocity (or scalar) mass matrix."""
    deg = exact_degree or _quad_default(space, "mass")
    tab = _volume_tables(space, deg)
    if tab.vals.ndim == 4:
        blocks = np.einsum("cq,cqia,cqja->cij", tab.wdet, tab.vals, tab.vals,
                           optimize=True)
    else:
        blocks = np.einsum("cq,cqi,cqj->cij", tab.wdet, tab.vals, tab.vals,
                           optimize=True)
    n = space.n_dofs
    return _scatter_blocks(blocks, space.cell_dofs, space.cell_dofs, (n, n))


def assemble_viscous(space, nu, sigma, delta, dirichlet=None, t=None,
                     exact_degree=None):
    """Viscous SIP + grad-div matrix (already scaled by nu) and lifting.

    Returns (A, lift) with A realising nu * (broken gradient inner
    product + SIP facet terms) + delta * grad-div.  H1-conforming spaces
    carry no facet terms.  ``lift`` is the weak tangential-Dirichlet
    right-hand side at time t (zero without data or for conforming
    spaces).
    """
    if space.family == "bdm":
        if sigma <= 0:
            raise ValueError("interior-penalty parameter sigma must be > 0 for DG")
        if sigma < space.degree**2:
            warnings.warn(f"sigma={sigma} below k^2={space.degree**2}; "
                          "coercivity of the viscous form may fail", stacklevel=2)
    deg = exact_degree or _quad_default(space, "viscous")
    tab = _volume_tables(space, deg)
    G = tab.grads
    blocks = nu * np.einsum("cq,cqiab,cqjab->cij", tab.wdet, G, G, optimize=True)
    if delta:
        blocks += delta * np.einsum("cq,cqi,cqj->cij", tab.wdet, tab.divs,
                                    tab.divs, optimize=True)
    n = space.n_dofs
    A = _scatter_blocks(blocks, space.cell_dofs, space.cell_dofs, (n, n))
    lift = np.zeros(n)
    if space.family != "bdm":
        return A, lift

    jumps = (1.0, -1.0)
    for which in ("interior", "boundary"):
        ft = _facet_tables(space, deg + 1, which)
        if ft.n_facets == 0:
            continue
        nsides = len(ft.vals)
        avg = 1.0 / nsides
        pen = sigma / ft.h_F  # (nf,)
        for si in range(nsides):
            for sj in range(nsides):
                Vi, Vj = ft.vals[si], ft.vals[sj]
                Gni, Gnj = ft.grads_n[si], ft.grads_n[sj]
                # -nu [ {{grad w}}n.[[v]] + [[w]].{{grad v}}n - (sigma/h)[[w]].[[v]] ]
                blk = (-nu * avg * jumps[si]) * np.einsum(
                    "fq,fqja,fqia->fij", ft.wq, Gnj, Vi, optimize=True)
                blk += (-nu * avg * jumps[sj]) * np.einsum(
                    "fq,fqja,fqia->fij", ft.wq, Vj, Gni, optimize=True)
                blk += (nu * jumps[si] * jumps[sj]) * np.einsum(
                    "f,fq,fqja,fqia->fij", pen, ft.wq, Vj, Vi, optimize=True)
                rows = space.cell_dofs[ft.cells[si]]
                cols = space.cell_dofs[ft.cells[sj]]
                A = A + _scatter_blocks(blk, rows, cols, (n, n))
    if dirichlet is not None:
        lift = sip_lifting(space, dirichlet, t, nu, sigma, exact_degree=deg + 1)
    return A.tocsr(), lift


def sip_lifting(space, g, t, nu, sigma, exact_degree=None):
    """Right-hand side realising weak Dirichlet data in the SIP form.

    l(v) = nu * sum_bnd int [ (sigma/h) g.v - g.(grad v n) ].  Zero for
    conforming spaces (strong data there).
    """
    n = space.n_dofs
    lift = np.zeros(n)
    if space.family != "bdm":
        return lift
    deg = exact_degree or (_quad_default(space, "viscous") + 1)
    ft = _facet_tables(space, deg, "boundary")
    if ft.n_facets == 0:
        return lift
    pts = _facet_points(space.mesh, ft)
    gv = np.asarray(g(t, pts.reshape(-1, 2))).reshape(ft.n_facets, len(ft.s), 2)
    pen = sigma / ft.h_F
    vec = nu * np.einsum("f,fq,fqa,fqia->fi", pen, ft.wq, gv, ft.vals[0],
                         optimize=True)
    vec -= nu * np.einsum("fq,fqa,fqia->fi", ft.wq, gv, ft.grads_n[0],
                          optimize=True)
    np.add.at(lift, space.cell_dofs[ft.cells[0]], vec)
    return lift


def _facet_points(mesh, ft, side=0):
    geo = mesh.facet_side_geo[ft.facets, side]
    a = mesh.vertices[mesh.facet_vertices[geo, 0]]
    b = mesh.vertices[mesh.facet_vertices[geo, 1]]
    return a[:, None, :] + ft.s[None, :, None] * (b - a)[:, None, :]


def assemble_divergence(velocity, pressure, exact_degree=None):
    """Divergence coupling B_qj = -int q (div phi_j) and mean vector m."""
    deg = exact_degree or _quad_default(velocity, "divergence")
    vt = _volume_tables(velocity, deg)
    pt = _volume_tables(pressure, deg)
    blocks = -np.einsum("cq,cqi,cqj->cij", vt.wdet, pt.vals, vt.divs,
                        optimize=True)
    B = _scatter_blocks(blocks, pressure.cell_dofs, velocity.cell_dofs,
                        (pressure.n_dofs, velocity.n_dofs))
    mean = np.zeros(pressure.n_dofs)
    np.add.at(mean, pressure.cell_dofs,
              np.einsum("cq,cqi->ci", pt.wdet, pt.vals))
    return B, mean


def assemble_forcing(space, f, t=None, exact_degree=None):
    """Load vector int f . phi_i."""
    deg = exact_degree or _quad_default(space, "forcing")
    tab = _volume_tables(space, deg)
    fv = np.asarray(f(t, tab.points.reshape(-1, 2)))
    out = np.zeros(space.n_dofs)
    if tab.vals.ndim == 4:
        fv = fv.reshape(tab.points.shape)
        vec = np.einsum("cq,cqa,cqia->ci", tab.wdet, fv, tab.vals, optimize=True)
    else:
        fv = fv.reshape(tab.points.shape[:2])
        vec = np.einsum("cq,cq,cqi->ci", tab.wdet, fv, tab.vals, optimize=True)
    np.add.at(out, space.cell_dofs, vec)
    return out


def velocity_mean_columns(space):
    """Columns [int phi_i . e_x, int phi_i . e_y]; constraints for spaces
    containing the constant fields (periodic runs)."""
    cols = np.empty((space.n_dofs, 2))
    for a in range(2):
        e = np.zeros(2)
        e[a] = 1.0
        cols[:, a] = assemble_forcing(
            space, lambda t, p, e=e: np.broadcast_to(e, (len(p), 2)))
    return cols


class ConvectionOperator:
    """Assembled convection matrix for one discrete convecting field."""

    def __init__(self, matrix, space, beta):
        self.matrix = matrix
        self.space = space
        self.beta = beta

    def apply(self, coeffs):
        return self.matrix @ coeffs


class _BlockPattern:
    """Fixed CSR sparsity for a list of (rows, cols) block scatter maps;
    per-call assembly reduces to one bincount over precomputed slots."""

    def __init__(self, pairs, nloc_shapes, n):
        rows = np.concatenate([
            np.broadcast_to(r[:, :, None], (len(r),) + shape).ravel()
            for (r, _), shape in zip(pairs, nloc_shapes)])
        cols = np.concatenate([
            np.broadcast_to(c[:, None, :], (len(c),) + shape).ravel()
            for (_, c), shape in zip(pairs, nloc_shapes)])
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        new = np.empty(len(rs), dtype=bool)
        new[0] = True
        new[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        slot_sorted = np.cumsum(new) - 1
        self.slots = np.empty(len(order), dtype=np.int64)
        self.slots[order] = slot_sorted
        self.nnz = int(slot_sorted[-1]) + 1
        starts = np.nonzero(new)[0]
        self.indices = cs[starts].astype(np.int32)
        counts = np.bincount(rs[starts], minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.n = n

    def assemble(self, blocks):
        data = np.concatenate([b.ravel() for b in blocks])
        vals = np.bincount(self.slots, weights=data, minlength=self.nnz)
        return sp.csr_matrix((vals, self.indices, self.indptr),
                             shape=(self.n, self.n))


class _ConvectionWorkspace:
    """Per-space cache making repeated convection assembly cheap.

    The volume term is linear in the convecting field, so it contracts
    once into a (nc, nloc, nloc, nloc) tensor when memory allows;
    otherwise each call contracts directly.
    """

    def __init__(self, space):
        self.space = space
        deg = _quad_default(space, "convection")
        self.vt = _volume_tables(space, deg)
        self.ft = _facet_tables(space, deg, "interior") \
            if space.family == "bdm" else None
        self.bt = _facet_tables(space, deg, "boundary") \
            if space.family == "bdm" else None
        nc = space.mesh.n_cells
        nloc = space.cell_dofs.shape[1]
        self.tensor = None
        if nc * nloc**3 <= _CONV_TENSOR_CAP:
            self.tensor = self._build_tensor()
        self._patterns = {}

    def pattern(self, with_inflow):
        if with_inflow not in self._patterns:
            space = self.space
            pairs = [(space.cell_dofs, space.cell_dofs)]
            nloc = space.cell_dofs.shape[1]
            shapes = [(nloc, nloc)]
            if space.family == "bdm":
                if self.ft.n_facets:
                    for si in range(2):
                        for sj in range(2):
                            pairs.append((space.cell_dofs[self.ft.cells[si]],
                                          space.cell_dofs[self.ft.cells[sj]]))
                            shapes.append((nloc, nloc))
                if with_inflow and self.bt.n_facets:
                    pairs.append((space.cell_dofs[self.bt.cells[0]],
                                  space.cell_dofs[self.bt.cells[0]]))
                    shapes.append((nloc, nloc))
            self._patterns[with_inflow] = _BlockPattern(pairs, shapes,
                                                        space.n_dofs)
        return self._patterns[with_inflow]

    def _build_tensor(self):
        vt = self.vt
        nc, nq, nloc, _ = vt.vals.shape
        # T[c,m,i,j] = int (phi_m . grad phi_j) . phi_i + 1/2 (div phi_m)(phi_j . phi_i)
        T = np.empty((nc, nloc, nloc * nloc))
        chunk = max(1, int(2**22 / max(nq * nloc * nloc, 1)))
        for lo in range(0, nc, chunk):
            sl = slice(lo, lo + chunk)
            V = np.ascontiguousarray(vt.vals[sl])
            G = vt.grads[sl]
            ncs = V.shape[0]
            # A[c,q,m,j,a] = sum_b V[c,q,m,b] G[c,q,j,a,b]
            Gp = np.ascontiguousarray(np.moveaxis(G, 4, 2)).reshape(
                ncs, nq, 2, nloc * 2)
            A = np.matmul(V, Gp).reshape(ncs, nq, nloc, nloc, 2)
            # T1[c,m,i,j] = sum_{q,a} A[c,q,m,j,a] (wdet V)[c,q,i,a]
            Wv = vt.wdet[sl, :, None, None] * V
            A_r = np.ascontiguousarray(np.moveaxis(A, 1, 3)).reshape(
                ncs, nloc * nloc, nq * 2)          # (c, (m,j), (q,a))
            W_r = np.ascontiguousarray(np.moveaxis(Wv, 2, 3)).reshape(
                ncs, nq * 2, nloc)                 # (c, (q,a), i)
            T1 = np.matmul(A_r, W_r).reshape(ncs, nloc, nloc, nloc)
            T1 = np.swapaxes(T1, 2, 3)             # (c,m,j,i) -> (c,m,i,j)
            # T2[c,m,(i,j)] = sum_q (wdet divs)[c,q,m] (V V^T)[c,q,i,j]
            P = np.matmul(V, np.swapaxes(V, 2, 3)).reshape(ncs, nq, -1)
            WD = np.swapaxes(vt.wdet[sl, :, None] * vt.divs[sl], 1, 2)
            T[sl] = (T1.reshape(ncs, nloc, -1) + 0.5 * np.matmul(WD, P))
        return T

    def volume_blocks(self, beta_local):
        if self.tensor is not None:
            nc, nloc, _ = self.tensor.shape
            out = np.matmul(beta_local[:, None, :], self.tensor)
            return out.reshape(nc, nloc, nloc)
        vt = self.vt
        beta_q = np.einsum("cqja,cj->cqa", vt.vals, beta_local)
        conv = vt.convective_term(beta_q)
        blocks = np.einsum("cq,cqja,cqia->cij", vt.wdet, conv, vt.vals,
                           optimize=True)
        divb = np.einsum("cqj,cj->cq", vt.divs, beta_local)
        blocks += 0.5 * np.einsum("cq,cq,cqja,cqia->cij", vt.wdet, divb,
                                  vt.vals, vt.vals, optimize=True)
        return blocks


def assemble_convection(space, beta, dirichlet=None, t=None):
    """Convection operator C(beta) and inflow data vector.

    beta is a CoefficientVector in the same velocity space (the discrete
    convecting field).  The operator realises the volume term
    (beta.grad w).v + (div beta)(w.v)/2 plus, for tangentially
    discontinuous spaces, the central facet flux and upwind penalty on
    interior facets.  With Dirichlet data, boundary facets add the
    upwind inflow closure (exterior trace = the datum); the returned
    vector is the known inflow contribution to the right-hand side.
    """
    if isinstance(beta, CoefficientVector):
        if beta.space is not space:
            raise ValueError("convecting field must live in the form's space")
        bvals = beta.values
    else:
        bvals = np.asarray(beta)
        if bvals.shape != (space.n_dofs,):
            raise ValueError("convecting field must live in the form's space")
    ws = getattr(space, "_conv_workspace", None)
    if ws is None:
        ws = space._conv_workspace = _ConvectionWorkspace(space)
    n = space.n_dofs
    beta_local = bvals[space.cell_dofs]  # tables carry the orientation signs
    blocks = [ws.volume_blocks(beta_local)]
    rhs = np.zeros(n)
    with_inflow = False

    if space.family == "bdm":
        ft = ws.ft
        if ft.n_facets:
            b0 = ft.trace_values(0, bvals)
            b1 = ft.trace_values(1, bvals)
            bn = np.einsum("fqa,fa->fq", 0.5 * (b0 + b1), ft.normals)
            absbn = np.abs(bn)
            jumps = (1.0, -1.0)
            for si in range(2):
                for sj in range(2):
                    coef = ft.wq * (-bn * jumps[sj] * 0.5 + 0.5 * absbn
                                    * jumps[si] * jumps[sj])
                    blocks.append(_facet_blocks(coef, ft.vals[sj], ft.vals[si]))
        bt = ws.bt
        if dirichlet is not None and bt.n_facets:
            with_inflow = True
            btr = bt.trace_values(0, bvals)
            bn = np.einsum("fqa,fa->fq", btr, bt.normals)
            inflow = np.maximum(-bn, 0.0)  # -(beta.n) on inflow, 0 elsewhere
            blocks.append(_facet_blocks(bt.wq * inflow, bt.vals[0], bt.vals[0]))
            pts = _facet_points(space.mesh, bt)
            gv = np.asarray(dirichlet(t, pts.reshape(-1, 2))).reshape(pts.shape)
            vec = np.einsum("fq,fqa,fqia->fi", bt.wq * inflow, gv, bt.vals[0],
                            optimize=True)
            np.add.at(rhs, space.cell_dofs[bt.cells[0]], vec)

    C = ws.pattern(with_inflow).assemble(blocks)
    return ConvectionOperator(C, space, bvals), rhs


def _facet_blocks(coef, Vj, Vi):
    """blk[f,i,j] = sum_{q,a} coef[f,q] Vj[f,q,j,a] Vi[f,q,i,a] via GEMM."""
    nf, nq, nj = Vj.shape[:3]
    ni = Vi.shape[2]
    A = np.moveaxis(Vi, 2, 3).reshape(nf, nq * 2, ni)
    B = (coef[:, :, None, None] * Vj)
    B = np.moveaxis(B, 2, 3).reshape(nf, nq * 2, nj)
    return np.matmul(np.swapaxes(A, 1, 2), B)


def upwind_seminorm_sq(space, beta, w, exact_degree=None):
    """|w|^2 in the upwind jump seminorm for convecting field beta."""
    if space.family != "bdm":
        return 0.0
    deg = exact_degree or _quad_default(space, "convection")
    ft = _facet_tables(space, deg, "interior")
    if ft.n_facets == 0:
        return 0.0
    bvals = beta.values if isinstance(beta, CoefficientVector) else np.asarray(beta)
    wvals = w.values if isinstance(w, CoefficientVector) else np.asarray(w)
    b0 = ft.trace_values(0, bvals)
    b1 = ft.trace_values(1, bvals)
    bn = np.einsum("fqa,fa->fq", 0.5 * (b0 + b1), ft.normals)
    jump = ft.trace_values(0, wvals) - ft.trace_values(1, wvals)
    return float(0.5 * np.einsum("fq,fq,fqa,fqa->", ft.wq, np.abs(bn),
                                 jump, jump))


def ah_moment_vector(space, grad_w, w=None, sigma=None, exact_degree=None):
    """Moments of the viscous form against an analytic field.

    r_i = int grad w : grad phi_i  - facet terms with the analytic traces
    (interior facets use the consistency term only, since the smooth
    field has no jumps; boundary facets add the full SIP data terms with
    w itself).  grad_w(t=None, pts) -> (n,2,2); w(t=None, pts) -> (n,2).
    Conforming spaces keep the volume term only.
    """
    deg = exact_degree or _quad_default(space, "viscous")
    tab = _volume_tables(space, deg)
    gw = np.asarray(grad_w(None, tab.points.reshape(-1, 2)))
    gw = gw.reshape(tab.points.shape[:2] + (2, 2))
    out = np.zeros(space.n_dofs)
    vec = np.einsum("cq,cqab,cqiab->ci", tab.wdet, gw, tab.grads, optimize=True)
    np.add.at(out, space.cell_dofs, vec)
    if space.family != "bdm":
        return out
    assert sigma is not None
    ft = _facet_tables(space, deg + 1, "interior")
    if ft.n_facets:
        pts = _facet_points(space.mesh, ft)
        gwf = np.asarray(grad_w(None, pts.reshape(-1, 2)))
        gwf = gwf.reshape(pts.shape[:2] + (2, 2))
        gwn = np.einsum("fqab,fb->fqa", gwf, ft.normals)
        for si, jmp in ((0, 1.0), (1, -1.0)):
            vec = -jmp * np.einsum("fq,fqa,fqia->fi", ft.wq, gwn,
                                   ft.vals[si], optimize=True)
            np.add.at(out, space.cell_dofs[ft.cells[si]], vec)
    bt = _facet_tables(space, deg + 1, "boundary")
    if bt.n_facets:
        pts = _facet_points(space.mesh, bt)
        flat = pts.reshape(-1, 2)
        gwf = np.asarray(grad_w(None, flat)).reshape(pts.shape[:2] + (2, 2))
        gwn = np.einsum("fqab,fb->fqa", gwf, bt.normals)
        wv = np.asarray(w(None, flat)).reshape(pts.shape)
        pen = sigma / bt.h_F
        vec = -np.einsum("fq,fqa,fqia->fi", bt.wq, gwn, bt.vals[0], optimize=True)
        vec -= np.einsum("fq,fqa,fqia->fi", bt.wq, wv, bt.grads_n[0], optimize=True)
        vec += np.einsum("f,fq,fqa,fqia->fi", pen, bt.wq, wv, bt.vals[0],
                         optimize=True)
        np.add.at(out, space.cell_dofs[bt.cells[0]], vec)
    return out


class OperatorSet:
    """Assembled operators of one velocity/pressure pair.

    M: velocity mass; A: viscous SIP (+ grad-div), scaled by nu;
    B: divergence coupling; mean: pressure-mean vector; mom: velocity
    mean columns when the space contains constants unconstrained
    (fully periodic runs), else None.
    """

    def __init__(self, V, Q, M, A, B, mean, mom, nu, sigma, delta,
                 dirichlet=None):
        self.V = V
        self.Q = Q
        self.M = M
        self.A = A
        self.B = B
        self.mean = mean
        self.mom = mom
        self.nu = nu
        self.sigma = sigma
        self.delta = delta
        self.dirichlet = dirichlet
        self.dirichlet_dofs = (V.dirichlet_dofs() if dirichlet is not None
                               else np.array([], dtype=np.int64))

    def lifting(self, t):
        if self.dirichlet is None:
            return np.zeros(self.V.n_dofs)
        return sip_lifting(self.V, self.dirichlet, t, self.nu, self.sigma)

    def boundary_state(self, t):
        """Full-length vector with strong Dirichlet values at time t."""
        g = np.zeros(self.V.n_dofs)
        if self.dirichlet is not None:
            dofs, vals = self.V.boundary_values(self.dirichlet, t)
            g[dofs] = vals
        return g


def build_operators(V, Q, nu, sigma, delta, dirichlet=None):
    """Assemble the full operator set for one velocity/pressure pair."""
    M = assemble_mass(V)
    A, _ = assemble_viscous(V, nu, sigma, delta)
    B, mean = assemble_divergence(V, Q)
    periodic_free = dirichlet is None and len(V.mesh.boundary_facets) == 0
    mom = velocity_mean_columns(V) if periodic_free else None
    return OperatorSet(V, Q, M, A, B, mean, mom, nu, sigma, delta, dirichlet)
