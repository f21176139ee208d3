"""Reference lattice-probe runs used to freeze desk-scale thresholds."""

import json
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from flowlab.analysis import energy_budget, lattice_flow, measure_coercivity
from flowlab.assembly import build_operators
from flowlab.mesh import alfeld_split, make_periodic, unit_square_mesh
from flowlab.space import MethodConfig, method_spaces
from flowlab.timeloop import run_transient

NU = 1e-5
DT = 1e-3
TEND = 10.0


def main(out_path):
    mesh = make_periodic(unit_square_mesh(6), 1.0, 1.0)
    ex = lattice_flow(NU)
    results = {}
    for method, k, tend, use_alfeld in [
        ("bdm", 4, TEND, False),
        ("gdth", 4, TEND, False),
        ("th", 4, TEND, False),
        ("sv", 4, 1.0, True),
    ]:
        m = alfeld_split(mesh) if use_alfeld else mesh
        cfg = MethodConfig(method, k)
        t0 = time.time()
        series = run_transient(m, cfg, exact=ex, dt=DT, tend=tend)
        wall = time.time() - t0
        err = series.column("errL2")
        divinf = series.column("divLinf")
        ops = build_operators(*method_spaces(m, cfg), NU, cfg.sigma, cfg.delta)
        cmeas = measure_coercivity(ops, n_samples=20)
        budget = energy_budget(series, delta=cfg.delta, coercivity=cmeas)
        sharp = energy_budget(series, delta=cfg.delta, coercivity=cmeas,
                              sharp=True)
        results[f"{method}{k}"] = {
            "tend": tend,
            "wall_s": round(wall, 1),
            "blowup_time": series.blowup_time,
            "final_errL2": float(err[-1]),
            "max_errL2": float(np.nanmax(err)),
            "err_at_1": float(err[min(len(err) - 1, int(1.0 / DT))]),
            "max_divLinf": float(np.nanmax(divinf)),
            "max_divL2": float(np.nanmax(series.column("divL2"))),
            "coercivity": float(cmeas),
            "budget_pass": bool(budget.passed),
            "budget_margin": float(budget.worst_margin),
            "sharp_pass": bool(sharp.passed),
            "sharp_margin": float(sharp.worst_margin),
            "records": len(series),
        }
        print(method, k, json.dumps(results[f"{method}{k}"], indent=1))
        with open(out_path, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "/tmp/probe_calibration.json")
