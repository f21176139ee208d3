"""Command-line front end: benchmarks, CSV/manifest emission.

Benchmarks: ``lattice`` (standing-vortex Gronwall probe), ``potential``
(transient potential flow, the pressure-robustness contrast),
``converge`` (transient refinement study), ``project`` (projection-only
refinement study).  Each run writes ``<label>.csv`` plus
``<label>.manifest.json`` into the output directory; the manifest
determines single-threaded reproducibility of the CSV.
"""

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import (
    compute_norms,
    convergence_rates,
    gradient_forcing,
    lattice_flow,
    potential_flow,
    stokes_projection,
)
from .assembly import build_operators, _quad_default, _volume_tables
from .mesh import alfeld_split, load_mesh, make_periodic, uniform_refine, unit_square_mesh
from .space import MethodConfig, method_spaces
from .timeloop import FlowState, run_transient

__all__ = ["BenchConfig", "RunManifest", "bench_lattice", "bench_potential",
           "bench_converge", "bench_project", "builtin_mesh", "main"]

CSV_HEADER = "t,errL2,errH1broken,errEnergy,divL2,divLinf,kinetic,dissipation,upwind"

BUILTIN_MESHES = (
    "lattice-coarse-periodic",
    "lattice-fine-periodic",
    "lattice-coarse-unstructured",
    "lattice-fine-unstructured",
    "potential-h05",
)

PROFILES = {
    # desk-scale substitutions of the published configuration
    ("lattice", "paperlite"): dict(k=4, nu=1e-5, dt=1e-3, tend=10.0,
                                   mesh="lattice-coarse-periodic"),
    # published parameters; hours-scale runtime
    ("lattice", "paper"): dict(k=8, nu=1e-5, dt=1e-4, tend=26.0,
                               mesh="lattice-coarse-periodic"),
    ("potential", "paperlite"): dict(k=4, nu=1.0, dt=1e-3, tend=1.0,
                                     mesh="potential-h05"),
    ("potential", "paper"): dict(k=4, nu=1.0, dt=1e-3, tend=1.0,
                                 mesh="potential-h05"),
    ("converge", "paperlite"): dict(k=2, nu=1e-2, dt=2e-3, tend=0.25,
                                    mesh="unit-periodic:4", levels=3),
    ("converge", "paper"): dict(k=2, nu=1e-2, dt=1e-3, tend=0.25,
                                mesh="unit-periodic:4", levels=4),
    ("project", "paperlite"): dict(k=2, nu=1.0, mesh="unit-periodic:4",
                                   levels=3),
    ("project", "paper"): dict(k=3, nu=1.0, mesh="unit-periodic:4", levels=4),
}

DEFAULT_METHODS = {
    "lattice": ("th", "gdth", "bdm"),
    "potential": ("gdth", "bdm"),
    "converge": ("bdm",),
    "project": ("bdm",),
}


@dataclass
class BenchConfig:
    """Resolved parameters of one benchmark invocation."""

    benchmark: str
    method: str = None
    k: int = None
    nu: float = None
    sigma: float = None
    delta: float = None
    dt: float = None
    tend: float = None
    mesh: str = None
    out: str = "out"
    profile: str = "paperlite"
    initial: str = "stokes-projection"
    levels: int = 3
    gradient_shift: bool = False

    def resolved(self):
        base = dict(PROFILES.get((self.benchmark, self.profile), {}))
        out = BenchConfig(**{**asdict(self), **{
            k: v for k, v in base.items()
            if getattr(self, k, None) is None}})
        if out.benchmark == "potential" and out.nu != 1.0:
            raise ValueError("the potential-flow solution requires nu = 1")
        return out

    def method_config(self, method=None):
        return MethodConfig(method or self.method, self.k,
                            sigma=self.sigma, delta=self.delta)


@dataclass
class RunManifest:
    """Reproducibility record written beside each CSV."""

    config: dict
    method_label: str
    mesh_stats: dict
    n_velocity_dofs: int
    n_pressure_dofs: int
    wall_clock_s: float
    content_hash: str
    blowup_time: float = None
    summary: dict = field(default_factory=dict)


def builtin_mesh(name):
    """Resolve a mesh id: shipped name, ``unit[:N]``, ``unit-periodic[:N]``,
    or a file path."""
    if name.startswith("unit-periodic"):
        n = int(name.split(":")[1]) if ":" in name else 4
        return make_periodic(unit_square_mesh(n), 1.0, 1.0)
    if name.startswith("unit"):
        n = int(name.split(":")[1]) if ":" in name else 4
        return unit_square_mesh(n)
    if name in BUILTIN_MESHES:
        ref = resources.files("flowlab") / "meshes" / f"{name}.tri"
        with resources.as_file(ref) as path:
            return load_mesh(path)
    return load_mesh(name)


def _mesh_bytes(name):
    if name.startswith("unit"):
        return name.encode()
    if name in BUILTIN_MESHES:
        ref = resources.files("flowlab") / "meshes" / f"{name}.tri"
        return ref.read_bytes()
    return Path(name).read_bytes()


def _content_hash(cfg):
    payload = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(payload + _mesh_bytes(cfg.mesh)).hexdigest()


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def write_series_csv(series, path):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in series.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _gradient_shift_forcing(base):
    # psi = x^2 + y^2 - 2/3 (zero mean): f -> f + grad(psi)
    return gradient_forcing(lambda p: 2.0 * np.atleast_2d(p), base=base)


def _run_one_method(cfg, method, mesh, exact, outdir):
    mcfg = cfg.method_config(method)
    run_mesh = mesh
    if method == "sv" and mcfg.k < 4 and not mesh.alfeld:
        run_mesh = alfeld_split(mesh)
    forcing = exact.forcing
    if cfg.gradient_shift:
        forcing = _gradient_shift_forcing(exact.forcing)
    t0 = time.time()
    series = run_transient(run_mesh, mcfg, exact=exact, dt=cfg.dt,
                           tend=cfg.tend, nu=cfg.nu, forcing=forcing,
                           initial=cfg.initial)
    wall = time.time() - t0
    label = f"{cfg.benchmark}-{mcfg.label()}"
    if cfg.gradient_shift:
        label += "-shifted"
    csv_path = outdir / f"{label}.csv"
    write_series_csv(series, csv_path)
    V, Q = method_spaces(run_mesh, mcfg)
    err = series.column("errL2")
    manifest = RunManifest(
        config={**asdict(cfg), "method": method,
                "sigma": mcfg.sigma, "delta": mcfg.delta},
        method_label=mcfg.label(),
        mesh_stats=run_mesh.stats().as_dict(),
        n_velocity_dofs=V.n_dofs,
        n_pressure_dofs=Q.n_dofs,
        wall_clock_s=round(wall, 3),
        content_hash=_content_hash(cfg),
        blowup_time=series.blowup_time,
        summary={
            "final_t": float(series.column("t")[-1]),
            "final_errL2": float(err[-1]) if len(err) else math.nan,
            "max_divLinf": float(np.nanmax(series.column("divLinf"))),
            "records": len(series),
        },
    )
    _write_manifest(outdir / f"{label}.manifest.json", manifest)
    return series, csv_path


def _methods(cfg):
    if cfg.method in (None, "all"):
        return DEFAULT_METHODS[cfg.benchmark]
    return (cfg.method,)


def bench_lattice(cfg):
    """Standing-vortex probe: f = 0 decaying flow on a periodic mesh
    (or Dirichlet-from-exact on a non-periodic one)."""
    cfg = cfg.resolved()
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = builtin_mesh(cfg.mesh)
    exact = lattice_flow(cfg.nu)
    out = {}
    for method in _methods(cfg):
        out[method] = _run_one_method(cfg, method, mesh, exact, outdir)
    return out


def bench_potential(cfg):
    """Transient potential flow with time-dependent Dirichlet data."""
    cfg = cfg.resolved()
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = builtin_mesh(cfg.mesh)
    exact = potential_flow()
    out = {}
    for method in _methods(cfg):
        out[method] = _run_one_method(cfg, method, mesh, exact, outdir)
    return out


RATE_HEADER = ("h,ndofs,errLinfL2,rateLinfL2,errEnergyInt,rateEnergyInt,"
               "errL2Final,rateL2Final")


def _temporal_floor(mesh, mcfg, exact, dt, tend, nu, initial):
    """Halve dt until the finest-level temporal error is <= 10% of the
    spatial error (compared via the L-infinity-in-time L2 error)."""
    for _ in range(3):
        a = run_transient(mesh, mcfg, exact=exact, dt=dt, tend=tend, nu=nu,
                          initial=initial)
        b = run_transient(mesh, mcfg, exact=exact, dt=dt / 2, tend=tend,
                          nu=nu, initial=initial)
        ea = np.nanmax(a.column("errL2"))
        eb = np.nanmax(b.column("errL2"))
        if abs(ea - eb) <= 0.1 * max(eb, 1e-300):
            return dt
        dt /= 2
    return dt


def bench_converge(cfg):
    """Transient refinement study; emits a rate table CSV."""
    cfg = cfg.resolved()
    if cfg.levels < 2:
        raise ValueError("need at least 2 refinement levels")
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    base = builtin_mesh(cfg.mesh)
    exact = lattice_flow(cfg.nu)
    method = _methods(cfg)[0]
    mcfg = cfg.method_config(method)
    meshes = [base]
    for _ in range(cfg.levels - 1):
        meshes.append(uniform_refine(meshes[-1]))
    if method == "sv":
        meshes = [alfeld_split(m) for m in meshes]
    dt = _temporal_floor(meshes[-1], mcfg, exact, cfg.dt, cfg.tend, cfg.nu,
                         cfg.initial)
    rows = []
    t0 = time.time()
    for mesh in meshes:
        series = run_transient(mesh, mcfg, exact=exact, dt=dt, tend=cfg.tend,
                               nu=cfg.nu, initial=cfg.initial)
        V, _ = method_spaces(mesh, mcfg)
        err_inf = float(np.nanmax(series.column("errL2")))
        # left-endpoint time quadrature of the dissipation-energy error
        e_energy = series.column("errEnergy")
        eint = float(np.sqrt(np.sum(dt * cfg.nu * e_energy[:-1] ** 2)))
        rows.append((mesh.stats().h_max, V.n_dofs,
                     {"LinfL2": err_inf, "energyInt": eint,
                      "L2Final": float(series.column("errL2")[-1])}))
    table = convergence_rates(rows)
    label = f"converge-{mcfg.label()}"
    path = outdir / f"{label}.csv"
    _write_rate_csv(path, RATE_HEADER, rows, table,
                    ("LinfL2", "energyInt", "L2Final"))
    manifest = RunManifest(
        config={**asdict(cfg), "method": method, "dt_floor": dt},
        method_label=mcfg.label(),
        mesh_stats=meshes[0].stats().as_dict(),
        n_velocity_dofs=rows[-1][1],
        n_pressure_dofs=0,
        wall_clock_s=round(time.time() - t0, 3),
        content_hash=_content_hash(cfg),
        summary={name: list(map(float, table.rates[name]))
                 for name in table.rates},
    )
    _write_manifest(outdir / f"{label}.manifest.json", manifest)
    return table, path


PROJECT_HEADER = ("h,ndofs,errL2,rateL2,errEnergy,rateEnergy,"
                  "idempotence,linfGradRatio")


def bench_project(cfg):
    """Projection-only refinement study with the sup-norm stability
    diagnostic (report-only) and an idempotence column."""
    cfg = cfg.resolved()
    if cfg.levels < 2:
        raise ValueError("need at least 2 refinement levels")
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    base = builtin_mesh(cfg.mesh)
    exact = lattice_flow(cfg.nu)
    method = _methods(cfg)[0]
    mcfg = cfg.method_config(method)
    meshes = [base]
    for _ in range(cfg.levels - 1):
        meshes.append(uniform_refine(meshes[-1]))
    if method == "sv":
        meshes = [alfeld_split(m) for m in meshes]
    rows = []
    extras = []
    t0 = time.time()
    for mesh in meshes:
        V, Q = method_spaces(mesh, mcfg)
        ops = build_operators(V, Q, cfg.nu, mcfg.sigma, mcfg.delta,
                              dirichlet=None if not len(mesh.boundary_facets)
                              else exact.velocity)
        proj = stokes_projection(exact.velocity, exact.velocity_gradient,
                                 ops, t=0.0)
        rep = compute_norms(FlowState(proj, None, 0.0, 0.0), ops, exact)
        again = stokes_projection(proj, ops=ops)
        idem = float(np.abs(again.values - proj.values).max()
                     / max(np.abs(proj.values).max(), 1.0))
        vt = _volume_tables(V, _quad_default(V, "norms"))
        g = vt.function_grads(proj.values)
        ginf = float(np.linalg.svd(g.reshape(-1, 2, 2),
                                   compute_uv=False).max())
        ratio = ginf / exact.grad_u_inf(0.0)
        rows.append((mesh.stats().h_max, V.n_dofs,
                     {"L2": rep.errL2, "energy": rep.errEnergy}))
        extras.append((idem, ratio))
    table = convergence_rates(rows)
    label = f"project-{mcfg.label()}"
    path = outdir / f"{label}.csv"
    _write_rate_csv(path, PROJECT_HEADER, rows, table, ("L2", "energy"),
                    extras=extras)
    manifest = RunManifest(
        config={**asdict(cfg), "method": method},
        method_label=mcfg.label(),
        mesh_stats=meshes[0].stats().as_dict(),
        n_velocity_dofs=rows[-1][1],
        n_pressure_dofs=0,
        wall_clock_s=round(time.time() - t0, 3),
        content_hash=_content_hash(cfg),
        summary={**{name: list(map(float, table.rates[name]))
                    for name in table.rates},
                 "linf_grad_ratios": [e[1] for e in extras]},
    )
    _write_manifest(outdir / f"{label}.manifest.json", manifest)
    return table, path


def _write_rate_csv(path, header, rows, table, names, extras=None):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i, (h, nd, errs) in enumerate(rows):
            cells = [repr(float(h)), str(nd)]
            for name in names:
                cells.append(repr(float(errs[name])))
                cells.append("" if i == 0 else
                             repr(float(table.rates[name][i - 1])))
            if extras is not None:
                cells.extend(repr(float(x)) for x in extras[i])
            fh.write(",".join(cells) + "\n")


BENCHES = {
    "lattice": bench_lattice,
    "potential": bench_potential,
    "converge": bench_converge,
    "project": bench_project,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="flowlab",
        description="Incompressible-flow FEM benchmarks (desk scale)")
    sub = ap.add_subparsers(dest="benchmark", required=True)
    for name in BENCHES:
        p = sub.add_parser(name)
        p.add_argument("--method", choices=["th", "gdth", "sv", "bdm", "all"])
        p.add_argument("--order", type=int, dest="k")
        p.add_argument("--nu", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--tend", type=float)
        p.add_argument("--mesh")
        p.add_argument("--profile", choices=["paperlite", "paper"],
                       default=None)
        p.add_argument("--out")
        p.add_argument("--config", help="JSON file mirroring BenchConfig "
                                        "fields; flags override")
        p.add_argument("--initial",
                       choices=["stokes-projection", "interpolation"])
        p.add_argument("--levels", type=int)
        p.add_argument("--gradient-shift", action="store_true", default=None,
                       dest="gradient_shift")
    return ap


def config_from_args(args):
    fields = ("method", "k", "nu", "sigma", "delta", "dt", "tend", "mesh",
              "out", "profile", "initial", "levels", "gradient_shift")
    file_vals = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_vals = json.load(fh)
        unknown = set(file_vals) - set(fields) - {"benchmark"}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
    merged = {}
    for f in fields:
        cli = getattr(args, f, None)
        merged[f] = cli if cli is not None else file_vals.get(f)
    defaults = BenchConfig(benchmark=args.benchmark)
    for f in ("out", "profile", "initial", "levels", "gradient_shift"):
        if merged[f] is None:
            merged[f] = getattr(defaults, f)
    return BenchConfig(benchmark=args.benchmark, **merged)


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    result = BENCHES[args.benchmark](cfg)
    if isinstance(result, dict):
        for method, (series, path) in result.items():
            print(f"{method}: wrote {path}"
                  + (f" (blow-up at t={series.blowup_time})"
                     if series.blowup_time is not None else ""))
    else:
        table, path = result
        print(f"wrote {path}")
        for name, rates in table.rates.items():
            print(f"  {name}: rates {np.round(rates, 3).tolist()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
