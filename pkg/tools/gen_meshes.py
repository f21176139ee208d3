"""Generate the benchmark meshes shipped as package data.

Structured periodic meshes for the standing-vortex runs; unstructured
(offset-row Delaunay) meshes comparable to the published benchmark
resolutions for the Dirichlet-mode lattice and the potential flow.
Deterministic: fixed jitter seed, written once and committed.
"""

import sys

import numpy as np
from scipy.spatial import Delaunay

sys.path.insert(0, "src")

from flowlab.mesh import Mesh, make_periodic, save_mesh, unit_square_mesh


def unstructured_unit_square(spacing, jitter=0.15, seed=20240):
    """Offset-row point lattice + Delaunay: near-equilateral triangles.

    Even rows carry the full column set, odd rows the midpoints plus the
    two boundary endpoints; interior points get a small deterministic
    jitter so the triangulation is genuinely unstructured.
    """
    rng = np.random.default_rng(seed)
    ncols = int(round(1.0 / spacing))
    dx = 1.0 / ncols
    nrows = int(round(1.0 / (spacing * np.sqrt(3.0) / 2.0)))
    dy = 1.0 / nrows
    pts = []
    for r in range(nrows + 1):
        y = r * dy
        if r % 2 == 0:
            xs = [j * dx for j in range(ncols + 1)]
        else:
            xs = [0.0] + [(j + 0.5) * dx for j in range(ncols)] + [1.0]
        for x in xs:
            on_bnd = r in (0, nrows) or x in (0.0, 1.0)
            if on_bnd:
                pts.append((x, y))
            else:
                pts.append((x + jitter * dx * (rng.random() - 0.5),
                            y + jitter * dy * (rng.random() - 0.5)))
    pts = np.array(pts)
    tri = Delaunay(pts)
    cells = tri.simplices.copy()
    # enforce CCW orientation
    d1 = pts[cells[:, 1]] - pts[cells[:, 0]]
    d2 = pts[cells[:, 2]] - pts[cells[:, 0]]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    return Mesh(pts, cells)


def report(name, mesh):
    s = mesh.stats()
    print(f"{name:32s} cells={s.n_cells:5d} h={s.h_max:.4f} "
          f"hmin={s.h_min:.4f} min_angle={np.degrees(s.min_angle):.1f}deg")


def main(outdir="src/flowlab/meshes"):
    import os

    os.makedirs(outdir, exist_ok=True)

    coarse_p = make_periodic(unit_square_mesh(6), 1.0, 1.0)
    report("lattice-coarse-periodic", coarse_p)
    save_mesh(coarse_p, f"{outdir}/lattice-coarse-periodic.tri")

    fine_p = make_periodic(unit_square_mesh(12), 1.0, 1.0)
    report("lattice-fine-periodic", fine_p)
    save_mesh(fine_p, f"{outdir}/lattice-fine-periodic.tri")

    coarse_u = unstructured_unit_square(0.26)
    report("lattice-coarse-unstructured", coarse_u)
    save_mesh(coarse_u, f"{outdir}/lattice-coarse-unstructured.tri")

    fine_u = unstructured_unit_square(0.052)
    report("lattice-fine-unstructured", fine_u)
    save_mesh(fine_u, f"{outdir}/lattice-fine-unstructured.tri")

    potential = unstructured_unit_square(0.5, jitter=0.12)
    report("potential-h05", potential)
    save_mesh(potential, f"{outdir}/potential-h05.tri")


if __name__ == "__main__":
    main(*sys.argv[1:])
