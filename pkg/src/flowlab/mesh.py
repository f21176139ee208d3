"""Conforming triangular meshes of planar domains.

Vertices, positively oriented cells, full facet (edge) topology with
normals and lengths, integer boundary markers, and optional periodic
facet identification.  Meshes are immutable after construction; the
refinement routines return new meshes.
"""

import numpy as np

__all__ = [
    "Mesh",
    "MeshStats",
    "MeshFormatError",
    "MeshTopologyError",
    "PeriodicityError",
    "load_mesh",
    "save_mesh",
    "unit_square_mesh",
    "make_periodic",
    "alfeld_split",
    "uniform_refine",
]

PERIODIC_TOL = 1e-8

# local edge l is opposite local vertex l
_LOCAL_EDGES = ((1, 2), (0, 2), (0, 1))


class MeshFormatError(ValueError):
    """Malformed mesh file."""


class MeshTopologyError(ValueError):
    """Inverted cell, hanging node, or inconsistent connectivity."""


class PeriodicityError(ValueError):
    """Periodic facet pairing failed."""


class MeshStats:
    """Summary numbers of a mesh: cell/facet counts, h range, min angle."""

    def __init__(self, n_cells, n_facets, n_interior_facets, h_max, h_min, min_angle):
        self.n_cells = n_cells
        self.n_facets = n_facets
        self.n_interior_facets = n_interior_facets
        self.h_max = h_max
        self.h_min = h_min
        self.min_angle = min_angle

    def as_dict(self):
        return {
            "n_cells": self.n_cells,
            "n_facets": self.n_facets,
            "n_interior_facets": self.n_interior_facets,
            "h_max": self.h_max,
            "h_min": self.h_min,
            "min_angle": self.min_angle,
        }

    def __repr__(self):
        return (
            f"MeshStats(n_cells={self.n_cells}, n_facets={self.n_facets}, "
            f"n_interior_facets={self.n_interior_facets}, h_max={self.h_max:.4g}, "
            f"h_min={self.h_min:.4g}, min_angle={self.min_angle:.4g})"
        )


class Mesh:
    """Triangular mesh with facet topology and optional periodic pairing.

    Parameters
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array
        Vertex triples, counter-clockwise.
    boundary_markers : dict facet index -> int, optional
        Only boundary facets may carry markers; unmarked boundary facets
        default to marker 0.
    periodic_pairs : list of (master, slave) facet index pairs, optional

    Attributes
    ----------
    facet_vertices : (nf, 2) int
        Facet endpoints in canonical order.  For ordinary facets this is
        (lo, hi) by vertex index; for periodic slave facets the order is
        chosen so that endpoint j corresponds to the master's endpoint j
        under the period translation.
    facet_cells : (nf, 2) int
        Adjacent cells of each *logical* facet, -1 when absent.  The
        master facet of a periodic pair lists both cells; the slave facet
        is an alias (see ``facet_alias``).
    facet_side_geo : (nf, 2) int
        Geometric facet carrying each side's trace; differs from the
        facet itself only on periodic masters (side of the slave cell).
    normals : (nf, 2) float
        Unit normal, outward from the lower-index adjacent cell (the
        first entry of ``facet_cells``); boundary facets use the outward
        normal.
    """

    def __init__(self, vertices, cells, boundary_markers=None, periodic_pairs=None,
                 _alfeld=False):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshTopologyError("vertices must be an (nv, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshTopologyError("cells must be an (nc, 3) array")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= len(self.vertices)):
            raise MeshTopologyError("cell vertex index out of range")
        self.alfeld = bool(_alfeld)

        self._check_orientation()
        self._build_facets()
        self._apply_markers(boundary_markers or {})
        self._apply_periodic(list(periodic_pairs or []))
        self._check_hanging_nodes()
        self._geometry()
        for arr in (self.vertices, self.cells, self.facet_vertices, self.facet_cells,
                    self.facet_side_geo, self.normals, self.h_F, self.h_K,
                    self.cell_facets):
            arr.flags.writeable = False

    # -- construction ---------------------------------------------------

    def _check_orientation(self):
        v = self.vertices
        c = self.cells
        d1 = v[c[:, 1]] - v[c[:, 0]]
        d2 = v[c[:, 2]] - v[c[:, 0]]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        bad = np.nonzero(area2 <= 0)[0]
        if bad.size:
            raise MeshTopologyError(
                f"cell {bad[0]} has non-positive area (vertex order must be CCW)")
        self.cell_areas = 0.5 * area2

    def _build_facets(self):
        nc = len(self.cells)
        pairs = np.sort(
            self.cells[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)  # (3*nc, 2)
        # deterministic facet enumeration: lexicographic by (lo, hi)
        uniq, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True)
        if counts.max(initial=0) > 2:
            f = int(np.nonzero(counts > 2)[0][0])
            raise MeshTopologyError(f"facet {tuple(uniq[f])} shared by >2 cells")
        nf = len(uniq)
        self.facet_vertices = uniq.copy()
        self.cell_facets = inverse.reshape(nc, 3).astype(np.int64)
        facet_cells = np.full((nf, 2), -1, dtype=np.int64)
        for c in range(nc):
            for l in range(3):
                f = self.cell_facets[c, l]
                if facet_cells[f, 0] < 0:
                    facet_cells[f, 0] = c
                else:
                    facet_cells[f, 1] = c
        # side 0 = lower-index adjacent cell
        two = facet_cells[:, 1] >= 0
        swap = two & (facet_cells[:, 0] > facet_cells[:, 1])
        facet_cells[swap] = facet_cells[swap][:, ::-1]
        self.facet_cells = facet_cells
        self.facet_side_geo = np.stack(
            [np.arange(nf, dtype=np.int64)] * 2, axis=1)
        self.facet_alias = np.full(nf, -1, dtype=np.int64)

    def _apply_markers(self, markers):
        nf = len(self.facet_vertices)
        geom_boundary = self.facet_cells[:, 1] < 0
        self.boundary_markers = {}
        for f, m in markers.items():
            if not geom_boundary[f]:
                raise MeshTopologyError(f"marker on interior facet {f}")
            self.boundary_markers[int(f)] = int(m)
        for f in np.nonzero(geom_boundary)[0]:
            self.boundary_markers.setdefault(int(f), 0)

    def _apply_periodic(self, pairs):
        v = self.vertices
        fv = self.facet_vertices
        self.periodic_pairs = []
        self.periodic_vertex_map = {}
        for master, slave in pairs:
            master, slave = int(master), int(slave)
            for f in (master, slave):
                if self.facet_cells[f, 1] >= 0:
                    raise PeriodicityError(f"facet {f} in a periodic pair is interior")
                if self.facet_alias[f] >= 0 or self.facet_side_geo[f, 1] != f:
                    raise PeriodicityError(f"facet {f} appears in two periodic pairs")
            mp = v[fv[master]]
            sp = v[fv[slave]]
            shift = sp.mean(axis=0) - mp.mean(axis=0)
            # canonical order on the slave: endpoint j matches master endpoint j
            direct = np.linalg.norm(sp - (mp + shift), axis=1).max()
            crossed = np.linalg.norm(sp[::-1] - (mp + shift), axis=1).max()
            if min(direct, crossed) > PERIODIC_TOL:
                raise PeriodicityError(
                    f"periodic facets {master}/{slave} do not match under translation "
                    f"(mismatch {min(direct, crossed):.3e})")
            slave_order = fv[slave] if direct <= crossed else fv[slave][::-1]
            self.facet_vertices[slave] = slave_order
            for vm, vs in zip(fv[master], slave_order):
                self.periodic_vertex_map[int(vs)] = int(vm)
            cm = self.facet_cells[master, 0]
            cs = self.facet_cells[slave, 0]
            if cm <= cs:
                self.facet_cells[master] = (cm, cs)
                self.facet_side_geo[master] = (master, slave)
            else:
                self.facet_cells[master] = (cs, cm)
                self.facet_side_geo[master] = (slave, master)
            self.facet_alias[slave] = master
            self.boundary_markers.pop(master, None)
            self.boundary_markers.pop(slave, None)
            self.periodic_pairs.append((master, slave))
        alias = self.facet_alias
        geom_boundary = (self.facet_cells[:, 1] < 0)
        self.boundary_facets = np.nonzero(geom_boundary & (alias < 0))[0]
        interior = np.nonzero(self.facet_cells[:, 1] >= 0)[0]
        self.interior_facets = interior  # periodic masters included, slaves excluded

    def _check_hanging_nodes(self):
        # a vertex strictly inside another cell's facet has no facet of its own
        v = self.vertices
        fv = self.facet_vertices
        a, b = v[fv[:, 0]], v[fv[:, 1]]
        t = b - a
        L2 = (t * t).sum(axis=1)
        used = np.unique(fv)
        pts = v[used]
        # distance of every vertex to every facet segment (desk-scale meshes)
        d = pts[:, None, :] - a[None, :, :]
        s = (d * t[None, :, :]).sum(axis=2) / L2[None, :]
        inside = (s > 1e-10) & (s < 1 - 1e-10)
        perp = d - s[:, :, None] * t[None, :, :]
        dist2 = (perp * perp).sum(axis=2)
        on_seg = inside & (dist2 < 1e-20 * L2[None, :])
        if on_seg.any():
            i, f = np.argwhere(on_seg)[0]
            raise MeshTopologyError(
                f"hanging node: vertex {used[i]} lies inside facet {f}")

    def _geometry(self):
        v = self.vertices
        fv = self.facet_vertices
        tang = v[fv[:, 1]] - v[fv[:, 0]]
        self.h_F = np.linalg.norm(tang, axis=1)
        e = self.cells[:, _LOCAL_EDGES]  # (nc, 3, 2)
        el = np.linalg.norm(v[e[:, :, 1]] - v[e[:, :, 0]], axis=2)
        self.h_K = el.max(axis=1)
        # unit normal, outward from side-0 cell on its own geometric facet
        normals = np.empty_like(tang)
        for f in range(len(fv)):
            geo = self.facet_side_geo[f, 0]
            a, b = v[self.facet_vertices[geo, 0]], v[self.facet_vertices[geo, 1]]
            t = b - a
            n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
            c = self.facet_cells[f, 0]
            centroid = v[self.cells[c]].mean(axis=0)
            if n @ (0.5 * (a + b) - centroid) < 0:
                n = -n
            normals[f] = n
        # slave facets mirror their master's normal (translated, so identical)
        for master, slave in self.periodic_pairs:
            normals[slave] = normals[master]
        self.normals = normals

    # -- queries ----------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facet_vertices)

    def stats(self):
        """Return MeshStats; interior count treats each periodic pair once."""
        v = self.vertices
        c = self.cells
        angles = []
        for l in range(3):
            p0 = v[c[:, l]]
            d1 = v[c[:, (l + 1) % 3]] - p0
            d2 = v[c[:, (l + 2) % 3]] - p0
            cosang = (d1 * d2).sum(axis=1) / (
                np.linalg.norm(d1, axis=1) * np.linalg.norm(d2, axis=1))
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return MeshStats(
            n_cells=self.n_cells,
            n_facets=self.n_facets,
            n_interior_facets=len(self.interior_facets),
            h_max=float(self.h_K.max()),
            h_min=float(self.h_K.min()),
            min_angle=float(np.min(angles)),
        )

    def facet_marker(self, f):
        return self.boundary_markers.get(int(f))

    def local_edge(self, cell, facet):
        """Local edge index of ``facet`` (or its alias twin) within ``cell``."""
        for l in range(3):
            if self.cell_facets[cell, l] == facet:
                return l
        raise KeyError(f"facet {facet} not on cell {cell}")


def _parse_counted(lines, i, count, ncols, kind, path):
    rows = []
    for j in range(count):
        if i + j >= len(lines):
            raise MeshFormatError(f"{path}: truncated {kind} block")
        parts = lines[i + j].split()
        if len(parts) != ncols:
            raise MeshFormatError(
                f"{path}: expected {ncols} fields in {kind} line {j}: {lines[i + j]!r}")
        rows.append(parts)
    return rows, i + count


def load_mesh(path):
    """Load a mesh from the line-oriented ASCII format.

    Layout: header ``tri-mesh v1``; ``vertices N`` then N ``x y`` lines;
    ``cells M`` then M ``i j k`` lines (0-based, CCW); optional
    ``boundary B`` with ``v0 v1 marker`` lines; optional ``periodic P``
    with ``masterEdgeIndex slaveEdgeIndex`` lines.  Edge indices refer to
    the loader's facet enumeration (lexicographic by sorted endpoints).
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "tri-mesh v1":
        raise MeshFormatError(f"{path}: missing 'tri-mesh v1' header")
    i = 1
    verts = cells = None
    boundary = []
    periodic = []
    try:
        while i < len(lines):
            key = lines[i].split()
            if key[0] == "vertices":
                rows, i = _parse_counted(lines, i + 1, int(key[1]), 2, "vertex", path)
                verts = np.array(rows, dtype=float)
            elif key[0] == "cells":
                rows, i = _parse_counted(lines, i + 1, int(key[1]), 3, "cell", path)
                cells = np.array(rows, dtype=np.int64)
            elif key[0] == "boundary":
                rows, i = _parse_counted(lines, i + 1, int(key[1]), 3, "boundary", path)
                boundary = [(int(a), int(b), int(m)) for a, b, m in rows]
            elif key[0] == "periodic":
                rows, i = _parse_counted(lines, i + 1, int(key[1]), 2, "periodic", path)
                periodic = [(int(a), int(b)) for a, b in rows]
            else:
                raise MeshFormatError(f"{path}: unknown section {key[0]!r}")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"{path}: {exc}") from exc
    if verts is None or cells is None:
        raise MeshFormatError(f"{path}: vertices/cells section missing")

    probe = Mesh(verts, cells)
    markers = {}
    for v0, v1, m in boundary:
        key = np.sort([v0, v1])
        f = np.nonzero((probe.facet_vertices == key).all(axis=1))[0]
        if not f.size:
            raise MeshFormatError(f"{path}: boundary line names missing facet ({v0},{v1})")
        markers[int(f[0])] = m
    return Mesh(verts, cells, boundary_markers=markers, periodic_pairs=periodic)


def save_mesh(mesh, path):
    """Write a mesh in the ASCII format understood by :func:`load_mesh`."""
    with open(path, "w") as fh:
        fh.write("tri-mesh v1\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for i, j, k in mesh.cells:
            fh.write(f"{i} {j} {k}\n")
        marked = sorted(mesh.boundary_markers.items())
        if marked:
            fh.write(f"boundary {len(marked)}\n")
            for f, m in marked:
                v0, v1 = sorted(mesh.facet_vertices[f])
                fh.write(f"{v0} {v1} {m}\n")
        if mesh.periodic_pairs:
            fh.write(f"periodic {len(mesh.periodic_pairs)}\n")
            for a, b in mesh.periodic_pairs:
                fh.write(f"{a} {b}\n")


def unit_square_mesh(n, diagonal="right"):
    """Structured n-by-n triangulation of the unit square (2 n^2 cells)."""
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if diagonal == "right":
                cells.append((a, b, c))
                cells.append((a, c, d))
            else:
                cells.append((a, b, d))
                cells.append((b, c, d))
    return Mesh(verts, np.array(cells))


def make_periodic(mesh, period_x, period_y):
    """Pair opposite boundary facets translated by (period_x, 0)/(0, period_y).

    Masters are the lower-coordinate sides.  Raises PeriodicityError when a
    boundary facet has no translate within 1e-8.  Idempotent.
    """
    v = mesh.vertices
    fv = mesh.facet_vertices
    boundary = [f for f in range(mesh.n_facets)
                if mesh.facet_cells[f, 1] < 0 and mesh.facet_alias[f] < 0]
    boundary.extend(s for _, s in mesh.periodic_pairs)
    boundary.extend(m for m, _ in mesh.periodic_pairs)
    boundary = sorted(set(boundary))
    mids = {f: v[fv[f]].mean(axis=0) for f in boundary}
    lo_coord = v.min(axis=0)
    hi_coord = v.max(axis=0)
    pairs = []
    used = set()
    for shift in (np.array([period_x, 0.0]), np.array([0.0, period_y])):
        axis = 0 if shift[0] else 1

        def on_line(f, coord):
            return np.abs(v[fv[f], axis] - coord).max() < PERIODIC_TOL

        lows = [f for f in boundary if on_line(f, lo_coord[axis])]
        highs = [f for f in boundary if on_line(f, hi_coord[axis])]
        for m in sorted(lows):
            target = mids[m] + shift
            match = [s for s in highs
                     if np.linalg.norm(mids[s] - target) < PERIODIC_TOL and s not in used]
            if not match:
                raise PeriodicityError(
                    f"boundary facet {m} at {mids[m]} has no periodic partner")
            pairs.append((m, match[0]))
            used.add(match[0])
        unmatched = [s for s in highs if s not in used]
        if unmatched:
            raise PeriodicityError(
                f"boundary facet {unmatched[0]} at {mids[unmatched[0]]} "
                f"has no periodic partner")
    leftovers = [f for f in boundary if f not in used
                 and f not in {m for m, _ in pairs}]
    if leftovers:
        raise PeriodicityError(
            f"boundary facet {leftovers[0]} belongs to neither period direction")
    return Mesh(mesh.vertices, mesh.cells, boundary_markers={},
                periodic_pairs=pairs, _alfeld=mesh.alfeld)


def _inherit_markers(mesh, new_mesh, facet_parent):
    """Copy a parent's marker onto child facets (dict child facet -> parent)."""
    markers = {}
    for f, parent in facet_parent.items():
        if parent in mesh.boundary_markers:
            markers[f] = mesh.boundary_markers[parent]
    return markers


def alfeld_split(mesh):
    """Split every triangle into three at its barycentre.

    Boundary markers and periodic pairs are inherited verbatim: parent
    boundary facets survive as facets of the split mesh.
    """
    v = mesh.vertices
    c = mesh.cells
    bary = v[c].mean(axis=1)
    verts = np.vstack([v, bary])
    nb = len(v)
    cells = []
    for i in range(len(c)):
        a, b, d = c[i]
        m = nb + i
        cells.extend([(a, b, m), (b, d, m), (d, a, m)])
    new = Mesh(verts, np.array(cells), _alfeld=True)
    markers = {}
    for f, mk in mesh.boundary_markers.items():
        key = np.sort(mesh.facet_vertices[f])
        g = np.nonzero((new.facet_vertices == key).all(axis=1))[0]
        markers[int(g[0])] = mk
    pairs = []
    for m, s in mesh.periodic_pairs:
        km = np.sort(mesh.facet_vertices[m])
        ks = np.sort(mesh.facet_vertices[s])
        gm = np.nonzero((new.facet_vertices == km).all(axis=1))[0][0]
        gs = np.nonzero((new.facet_vertices == ks).all(axis=1))[0][0]
        pairs.append((int(gm), int(gs)))
    return Mesh(verts, np.array(cells), boundary_markers=markers,
                periodic_pairs=pairs, _alfeld=True)


def uniform_refine(mesh):
    """Split each triangle into 4 congruent children via edge midpoints."""
    v = mesh.vertices
    c = mesh.cells
    fv = mesh.facet_vertices
    mid = 0.5 * (v[fv[:, 0]] + v[fv[:, 1]])
    verts = np.vstack([v, mid])
    nb = len(v)

    def midv(f):
        return nb + f

    cells = []
    for i in range(len(c)):
        a, b, d = c[i]
        mab = midv(mesh.cell_facets[i, 2])  # edge opposite vertex 2 = (a, b)
        mbd = midv(mesh.cell_facets[i, 0])
        mad = midv(mesh.cell_facets[i, 1])
        cells.extend([(a, mab, mad), (mab, b, mbd), (mad, mbd, d), (mab, mbd, mad)])
    new = Mesh(verts, np.array(cells), _alfeld=False)

    def children(f):
        lo, hi = fv[f]
        m = midv(f)
        out = []
        for key in (np.sort([lo, m]), np.sort([m, hi])):
            g = np.nonzero((new.facet_vertices == key).all(axis=1))[0]
            out.append(int(g[0]))
        return out

    markers = {}
    for f, mk in mesh.boundary_markers.items():
        for g in children(f):
            markers[g] = mk
    pairs = []
    for m, s in mesh.periodic_pairs:
        shift = (v[fv[s]].mean(axis=0) - v[fv[m]].mean(axis=0))
        for gm in children(m):
            pm = verts[new.facet_vertices[gm]].mean(axis=0) + shift
            found = None
            for gs in children(s):
                ps = verts[new.facet_vertices[gs]].mean(axis=0)
                if np.linalg.norm(ps - pm) < PERIODIC_TOL:
                    found = gs
                    break
            if found is None:
                raise PeriodicityError(
                    f"refinement broke periodic pair ({m}, {s})")
            pairs.append((gm, found))
    return Mesh(verts, np.array(cells), boundary_markers=markers,
                periodic_pairs=pairs, _alfeld=False)
