"""Reference-triangle quadrature, shape functions, and cell mappings.

The reference triangle has vertices (0,0), (1,0), (0,1).  Scalar bases
(continuous or per-cell Lagrange) use an affine pullback; the vector
H(div) family uses the contravariant Piola map.  All bases are built on
an orthonormal modal basis evaluated by stable recurrences, so duality
between shape functions and their defining functionals holds to machine
precision for every supported degree.
"""

from functools import lru_cache

import numpy as np

__all__ = [
    "QuadRule",
    "RefBasis",
    "CellMap",
    "quadrature_rule",
    "facet_rule",
    "ref_basis",
    "map_basis",
]

MAX_EXACT_DEGREE = 25
MAX_BASIS_DEGREE = 8

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local edge l is opposite vertex l; endpoints in canonical (low, high) local order
REF_EDGE_VERTS = ((1, 2), (0, 2), (0, 1))
REF_EDGE_NORMALS = np.array([
    [1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)],
    [-1.0, 0.0],
    [0.0, -1.0],
])
REF_EDGE_LENGTHS = np.array([np.sqrt(2.0), 1.0, 1.0])


def poly_space_dim(k):
    """dim P_k on a triangle."""
    return (k + 1) * (k + 2) // 2


# ---------------------------------------------------------------------------
# modal (orthonormal) basis via recurrences
# ---------------------------------------------------------------------------

def modal_basis(points, k):
    """Orthonormal polynomial basis of P_k at ``points``.

    Returns (vals, grads) with shapes (np, N) and (np, N, 2), N = dim P_k.
    Ordering: total degree ascending, within a degree by the first index
    of the collapsed-coordinate construction.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    npt = len(pts)
    n_modes = poly_space_dim(k)

    # Q_m = P_m(a) (1-y)^m with a = (2x+y-1)/(1-y) is polynomial in (x, y)
    u = 2.0 * x + y - 1.0
    v = 1.0 - y
    Q = np.zeros((k + 1, npt))
    Qx = np.zeros((k + 1, npt))
    Qy = np.zeros((k + 1, npt))
    Q[0] = 1.0
    if k >= 1:
        Q[1] = u
        Qx[1] = 2.0
        Qy[1] = 1.0
    for m in range(1, k):
        c1, c2 = (2 * m + 1) / (m + 1), m / (m + 1)
        Q[m + 1] = c1 * u * Q[m] - c2 * v * v * Q[m - 1]
        Qx[m + 1] = c1 * (2.0 * Q[m] + u * Qx[m]) - c2 * v * v * Qx[m - 1]
        Qy[m + 1] = c1 * (Q[m] + u * Qy[m]) - c2 * (v * v * Qy[m - 1] - 2.0 * v * Q[m - 1])

    b = 2.0 * y - 1.0
    vals = np.empty((npt, n_modes))
    grads = np.empty((npt, n_modes, 2))
    idx = 0
    for deg in range(k + 1):
        for m in range(deg, -1, -1):
            n = deg - m
            J, Jp = _jacobi_with_derivative(n, 2 * m + 1, b)
            phi = Q[m] * J
            phix = Qx[m] * J
            phiy = Qy[m] * J + 2.0 * Q[m] * Jp
            c = _modal_norm_constant(m, n)
            vals[:, idx] = c * phi
            grads[:, idx, 0] = c * phix
            grads[:, idx, 1] = c * phiy
            idx += 1
    return vals, grads


def _jacobi_with_derivative(n, alpha, z):
    """Jacobi P_n^(alpha,0) and its derivative at z, by recurrence."""
    P_prev = np.ones_like(z)
    Pp_prev = np.zeros_like(z)
    if n == 0:
        return P_prev, Pp_prev
    P = ((alpha + 2.0) * z + alpha) / 2.0
    Pp = np.full_like(z, (alpha + 2.0) / 2.0)
    for m in range(2, n + 1):
        c1 = 2.0 * m * (m + alpha) * (2.0 * m + alpha - 2.0)
        c2 = (2.0 * m + alpha - 1.0) * alpha * alpha
        c3 = (2.0 * m + alpha - 1.0) * (2.0 * m + alpha) * (2.0 * m + alpha - 2.0)
        c4 = 2.0 * (m + alpha - 1.0) * (m - 1.0) * (2.0 * m + alpha)
        P, P_prev = ((c2 + c3 * z) * P - c4 * P_prev) / c1, P
        Pp, Pp_prev = ((c2 + c3 * z) * Pp + c3 * P_prev - c4 * Pp_prev) / c1, Pp
    return P, Pp


@lru_cache(maxsize=None)
def _modal_norm_table(k):
    """1/sqrt of the L2 norms of the raw modal functions up to degree k."""
    pts, w = _collapsed_rule(2 * k + 2)
    x, y = pts[:, 0], pts[:, 1]
    u = 2.0 * x + y - 1.0
    v = 1.0 - y
    Q = np.zeros((k + 1, len(pts)))
    Q[0] = 1.0
    if k >= 1:
        Q[1] = u
    for m in range(1, k):
        Q[m + 1] = ((2 * m + 1) * u * Q[m] - m * v * v * Q[m - 1]) / (m + 1)
    b = 2.0 * y - 1.0
    table = {}
    for deg in range(k + 1):
        for m in range(deg, -1, -1):
            n = deg - m
            J, _ = _jacobi_with_derivative(n, 2 * m + 1, b)
            raw = Q[m] * J
            table[(m, n)] = 1.0 / np.sqrt(np.sum(w * raw * raw))
    return table


def _modal_norm_constant(m, n):
    return _modal_norm_table(max(MAX_BASIS_DEGREE, m + n))[(m, n)]


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

class QuadRule:
    """Volume quadrature on the reference triangle.

    Weights sum to 1/2 and integrate monomials x^a y^b with
    a+b <= exact_degree to machine precision.
    """

    def __init__(self, points, weights, exact_degree):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.weights = np.ascontiguousarray(weights, dtype=float)
        self.exact_degree = int(exact_degree)
        self.points.flags.writeable = False
        self.weights.flags.writeable = False

    @property
    def n_points(self):
        return len(self.weights)


def _collapsed_rule(degree):
    """Gauss-Legendre x Gauss-Jacobi(1,0) product rule, exact to ``degree``."""
    from scipy.special import roots_jacobi

    n = max(1, (degree + 2) // 2)
    gx, gw = np.polynomial.legendre.leggauss(n)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    jx, jw = roots_jacobi(n, 1.0, 0.0)
    # map weight (1-z)dz on [-1,1] to (1-y)dy on [0,1]: scale nodes and weights
    jy = 0.5 * (jx + 1.0)
    jw = 0.25 * jw
    X = np.outer(1.0 - jy, gx) + 0.0
    Y = np.broadcast_to(jy[:, None], X.shape)
    W = np.outer(jw, gw)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return pts, W.ravel()


def _symmetrize(points, weights):
    """Average a rule over the rotation group of the triangle."""
    x, y = points[:, 0], points[:, 1]
    z = 1.0 - x - y
    pts = np.concatenate([
        points,
        np.stack([y, z], axis=1),
        np.stack([z, x], axis=1),
    ])
    w = np.concatenate([weights, weights, weights]) / 3.0
    return pts, w


@lru_cache(maxsize=None)
def quadrature_rule(exact_degree):
    """Symmetric volume rule exact to ``exact_degree`` (1..25)."""
    if not 1 <= exact_degree <= MAX_EXACT_DEGREE:
        raise ValueError(f"exact_degree {exact_degree} outside 1..{MAX_EXACT_DEGREE}")
    if exact_degree == 1:
        return QuadRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if exact_degree == 2:
        pts = np.array([[2 / 3, 1 / 6], [1 / 6, 2 / 3], [1 / 6, 1 / 6]])
        return QuadRule(pts, np.full(3, 1 / 6), 2)
    pts, w = _collapsed_rule(exact_degree)
    pts, w = _symmetrize(pts, w)
    return QuadRule(pts, w, exact_degree)


@lru_cache(maxsize=None)
def facet_rule(exact_degree):
    """Gauss rule on [0, 1] exact to ``exact_degree``; returns (nodes, weights)."""
    n = max(1, (exact_degree + 2) // 2)
    gx, gw = np.polynomial.legendre.leggauss(n)
    return 0.5 * (gx + 1.0), 0.5 * gw


def shifted_legendre(m, s):
    """Legendre polynomial of degree m on [0, 1]."""
    s = np.asarray(s, dtype=float)
    z = 2.0 * s - 1.0
    P_prev = np.ones_like(z)
    if m == 0:
        return P_prev
    P = z.copy()
    for i in range(1, m):
        P, P_prev = ((2 * i + 1) * z * P - i * P_prev) / (i + 1), P
    return P


# ---------------------------------------------------------------------------
# reference bases
# ---------------------------------------------------------------------------

class RefBasis:
    """Shape functions on the reference triangle.

    family is one of 'lagrange', 'lagrange-dg', 'bdm'.  Scalar families
    expose ``eval(points) -> (vals, grads)`` with shapes (np, dim) and
    (np, dim, 2); the vector family returns (vals, grads, divs) with
    shapes (np, dim, 2), (np, dim, 2, 2) and (np, dim).  ``grads[p,j,a,b]``
    is d(component a)/d(x_b).

    DOF ordering: vertex functionals, then edge functionals (edges in
    local order, functionals along the canonical edge direction), then
    interior functionals.  ``dof_entities`` lists ('vertex', i),
    ('edge', l, m) or ('interior', j) per DOF.
    """

    def __init__(self, family, degree):
        self.family = family
        self.degree = degree
        if family in ("lagrange", "lagrange-dg"):
            self._init_lagrange()
        elif family == "bdm":
            self._init_bdm()
        else:
            raise ValueError(f"unknown basis family {family!r}")

    # scalar nodal basis ------------------------------------------------

    def _init_lagrange(self):
        k = self.degree
        if self.family == "lagrange" and k < 1:
            raise ValueError("continuous Lagrange needs degree >= 1")
        if k < 0 or k > MAX_BASIS_DEGREE:
            raise ValueError(f"Lagrange degree {k} outside 0..{MAX_BASIS_DEGREE}")
        if k == 0:
            self.nodes = np.array([[1 / 3, 1 / 3]])
            self.dof_entities = [("interior", 0)]
            self.dim = 1
            self._coeff = np.array([[1.0]]) / modal_basis(self.nodes, 0)[0][0, 0]
            return
        nodes = [REF_VERTICES[i] for i in range(3)]
        entities = [("vertex", i) for i in range(3)]
        for l, (a, b) in enumerate(REF_EDGE_VERTS):
            pa, pb = REF_VERTICES[a], REF_VERTICES[b]
            for m in range(1, k):
                nodes.append(pa + (m / k) * (pb - pa))
                entities.append(("edge", l, m - 1))
        j = 0
        for iy in range(1, k):
            for ix in range(1, k - iy):
                nodes.append(np.array([ix / k, iy / k]))
                entities.append(("interior", j))
                j += 1
        self.nodes = np.array(nodes)
        self.dof_entities = entities
        self.dim = poly_space_dim(k)
        assert len(nodes) == self.dim
        vand, _ = modal_basis(self.nodes, k)
        self._coeff = _refined_inverse(vand)

    # H(div) vector basis -------------------------------------------------

    def _init_bdm(self):
        k = self.degree
        if not 1 <= k <= MAX_BASIS_DEGREE:
            raise ValueError(f"BDM degree {k} outside 1..{MAX_BASIS_DEGREE}")
        nmod = poly_space_dim(k)
        self.dim = 2 * nmod
        self.n_edge_dofs = k + 1
        self.n_interior_dofs = self.dim - 3 * (k + 1)

        entities = []
        for l in range(3):
            entities.extend(("edge", l, m) for m in range(k + 1))
        entities.extend(("interior", j) for j in range(self.n_interior_dofs))
        self.dof_entities = entities

        D = np.zeros((self.dim, self.dim))
        # edge rows: moments of the normal trace against Legendre polynomials
        s, w = facet_rule(2 * k + 2)
        for l, (a, b) in enumerate(REF_EDGE_VERTS):
            pa, pb = REF_VERTICES[a], REF_VERTICES[b]
            epts = pa[None, :] + s[:, None] * (pb - pa)[None, :]
            vals, _ = modal_basis(epts, k)  # (nq, nmod)
            n = REF_EDGE_NORMALS[l]
            length = REF_EDGE_LENGTHS[l]
            for m in range(k + 1):
                leg = shifted_legendre(m, s)
                row = l * (k + 1) + m
                mom = length * np.einsum("q,qd->d", w * leg, vals)
                D[row, 0:2 * nmod:2] = mom * n[0]
                D[row, 1:2 * nmod:2] = mom * n[1]
        # interior rows: moments against grad(P_{k-1} modal, non-constant)
        # and curl(bubble * P_{k-2} modal); classical unisolvent complement
        if self.n_interior_dofs:
            rule = quadrature_rule(2 * k + 2)
            vvals, vgrads = modal_basis(rule.points, k)
            wq = rule.weights
            row = 3 * (k + 1)
            _, g_lower = modal_basis(rule.points, k - 1)
            for d in range(1, poly_space_dim(k - 1)):
                gx, gy = g_lower[:, d, 0], g_lower[:, d, 1]
                D[row, 0:2 * nmod:2] = np.einsum("q,qd->d", wq * gx, vvals)
                D[row, 1:2 * nmod:2] = np.einsum("q,qd->d", wq * gy, vvals)
                row += 1
            if k >= 2:
                x, y = rule.points[:, 0], rule.points[:, 1]
                bub = x * y * (1.0 - x - y)
                bub_x = y * (1.0 - 2.0 * x - y)
                bub_y = x * (1.0 - x - 2.0 * y)
                m_vals, m_grads = modal_basis(rule.points, k - 2)
                for d in range(poly_space_dim(k - 2)):
                    psi = m_vals[:, d]
                    px = bub_x * psi + bub * m_grads[:, d, 0]
                    py = bub_y * psi + bub * m_grads[:, d, 1]
                    # curl(bub*psi) = (d/dy, -d/dx)
                    D[row, 0:2 * nmod:2] = np.einsum("q,qd->d", wq * py, vvals)
                    D[row, 1:2 * nmod:2] = np.einsum("q,qd->d", wq * (-px), vvals)
                    row += 1
            assert row == self.dim
        self._coeff = _refined_inverse(D)

    # evaluation ----------------------------------------------------------

    def eval(self, points):
        """Scalar families: (vals, grads).  Vector family: (vals, grads, divs)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        mv, mg = modal_basis(pts, self.degree)
        if self.family != "bdm":
            vals = mv @ self._coeff
            grads = np.einsum("pdb,dj->pjb", mg, self._coeff)
            return vals, grads
        nmod = poly_space_dim(self.degree)
        C = self._coeff  # (2*nmod, dim): working index w = 2*d + comp
        Cx = C[0:2 * nmod:2]
        Cy = C[1:2 * nmod:2]
        vals = np.stack([mv @ Cx, mv @ Cy], axis=2)  # (np, dim, comp)
        grads = np.empty((len(pts), self.dim, 2, 2))
        grads[:, :, 0, :] = np.einsum("pdb,dj->pjb", mg, Cx)
        grads[:, :, 1, :] = np.einsum("pdb,dj->pjb", mg, Cy)
        divs = grads[:, :, 0, 0] + grads[:, :, 1, 1]
        return vals, grads, divs

    def dof_matrix(self):
        """Apply the defining functionals to the basis (identity by duality)."""
        if self.family == "bdm":
            return self._bdm_functionals(self.eval)
        vals, _ = self.eval(self.nodes)  # nodal: value of basis j at node i
        return vals

    def _bdm_functionals(self, evaluator):
        k = self.degree
        D = np.zeros((self.dim, self.dim))
        s, w = facet_rule(2 * k + 2)
        for l, (a, b) in enumerate(REF_EDGE_VERTS):
            pa, pb = REF_VERTICES[a], REF_VERTICES[b]
            epts = pa[None, :] + s[:, None] * (pb - pa)[None, :]
            vals, _, _ = evaluator(epts)
            n = REF_EDGE_NORMALS[l]
            vn = vals @ n
            for m in range(k + 1):
                leg = shifted_legendre(m, s)
                D[l * (k + 1) + m] = REF_EDGE_LENGTHS[l] * np.einsum("q,qj->j", w * leg, vn)
        if self.n_interior_dofs:
            rule = quadrature_rule(2 * k + 2)
            vals, _, _ = evaluator(rule.points)
            wq = rule.weights
            row = 3 * (k + 1)
            _, g_lower = modal_basis(rule.points, k - 1)
            for d in range(1, poly_space_dim(k - 1)):
                D[row] = np.einsum("q,qjc,qc->j", wq, vals, g_lower[:, d, :])
                row += 1
            if k >= 2:
                x, y = rule.points[:, 0], rule.points[:, 1]
                bub = x * y * (1.0 - x - y)
                bub_x = y * (1.0 - 2.0 * x - y)
                bub_y = x * (1.0 - x - 2.0 * y)
                m_vals, m_grads = modal_basis(rule.points, k - 2)
                for d in range(poly_space_dim(k - 2)):
                    psi = m_vals[:, d]
                    curl = np.stack([bub_y * psi + bub * m_grads[:, d, 1],
                                     -(bub_x * psi + bub * m_grads[:, d, 0])], axis=1)
                    D[row] = np.einsum("q,qjc,qc->j", wq, vals, curl)
                    row += 1
        return D


def _refined_inverse(D):
    """Inverse of the DOF matrix with one Newton refinement step."""
    C = np.linalg.inv(D)
    C = C + C @ (np.eye(len(D)) - D @ C)
    return C


@lru_cache(maxsize=None)
def ref_basis(family, degree):
    """Cached reference basis; families 'lagrange', 'lagrange-dg', 'bdm'."""
    return RefBasis(family, degree)


# ---------------------------------------------------------------------------
# cell mapping
# ---------------------------------------------------------------------------

class CellMap:
    """Affine map x = v0 + J xhat from the reference triangle to one cell."""

    def __init__(self, cell_vertices):
        V = np.asarray(cell_vertices, dtype=float)
        self.vertices = V
        self.J = np.stack([V[1] - V[0], V[2] - V[0]], axis=1)
        self.detJ = float(np.linalg.det(self.J))
        if self.detJ <= 0:
            raise ValueError("cell map has non-positive Jacobian determinant")
        self.Jinv = np.linalg.inv(self.J)
        self.JinvT = self.Jinv.T

    def apply(self, ref_points):
        pts = np.asarray(ref_points, dtype=float).reshape(-1, 2)
        return self.vertices[0][None, :] + pts @ self.J.T

    def pull_back(self, phys_points):
        pts = np.asarray(phys_points, dtype=float).reshape(-1, 2)
        return (pts - self.vertices[0][None, :]) @ self.Jinv.T


def map_basis(cellmap, basis, rule):
    """Push a reference basis to one physical cell at quadrature points.

    Scalar families return (points, vals, grads); the H(div) family
    returns (points, vals, grads, divs) with the contravariant Piola map
    v = (1/det J) J vhat, for which divergence scales by 1/det J and edge
    normal moments are preserved.
    """
    pts = cellmap.apply(rule.points)
    if basis.family != "bdm":
        vals, grads = basis.eval(rule.points)
        pg = np.einsum("ab,pjb->pja", cellmap.JinvT, grads)
        return pts, vals, pg
    vals, grads, divs = basis.eval(rule.points)
    pv = np.einsum("ab,pjb->pja", cellmap.J, vals) / cellmap.detJ
    pg = np.einsum("ac,pjcd,db->pjab", cellmap.J, grads, cellmap.Jinv) / cellmap.detJ
    pd = divs / cellmap.detJ
    return pts, pv, pg, pd
