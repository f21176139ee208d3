import json
import math

import numpy as np
import pytest

from flowlab.benchcli import (
    BenchConfig,
    builtin_mesh,
    bench_converge,
    bench_lattice,
    bench_project,
    CSV_HEADER,
    config_from_args,
    build_parser,
    main,
)


def tiny_lattice_cfg(tmp_path, **kw):
    base = dict(benchmark="lattice", method="bdm", k=1, nu=1e-2, dt=0.02,
                tend=0.1, mesh="unit-periodic:2", out=str(tmp_path))
    base.update(kw)
    return BenchConfig(**base)


class TestBuiltinMeshes:
    @pytest.mark.parametrize("name,cells", [
        ("lattice-coarse-periodic", 72),
        ("lattice-coarse-unstructured", 36),
        ("potential-h05", 10),
    ])
    def test_shipped(self, name, cells):
        mesh = builtin_mesh(name)
        assert mesh.n_cells == cells
        assert abs(mesh.cell_areas.sum() - 1.0) < 1e-10

    def test_periodic_shipped_has_no_boundary(self):
        mesh = builtin_mesh("lattice-coarse-periodic")
        assert len(mesh.boundary_facets) == 0

    def test_unit_patterns(self):
        assert builtin_mesh("unit:3").n_cells == 18
        assert len(builtin_mesh("unit-periodic:3").periodic_pairs) == 6

    def test_missing_file(self):
        with pytest.raises(OSError):
            builtin_mesh("/nonexistent/mesh.tri")


class TestLatticeBench:
    def test_csv_schema_and_manifest(self, tmp_path):
        out = bench_lattice(tiny_lattice_cfg(tmp_path))
        series, path = out["bdm"]
        lines = path.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 6  # header + records
        manifest = json.loads(
            (tmp_path / "lattice-BDM1.manifest.json").read_text())
        assert manifest["method_label"] == "BDM1"
        assert manifest["mesh_stats"]["n_cells"] == 8
        assert manifest["n_velocity_dofs"] > 0
        assert manifest["content_hash"]
        assert manifest["blowup_time"] is None

    def test_deterministic_rerun(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        bench_lattice(tiny_lattice_cfg(tmp_path, out=str(a)))
        bench_lattice(tiny_lattice_cfg(tmp_path, out=str(b)))
        csv_a = (a / "lattice-BDM1.csv").read_bytes()
        csv_b = (b / "lattice-BDM1.csv").read_bytes()
        assert csv_a == csv_b

    def test_method_all_runs_roster(self, tmp_path):
        cfg = tiny_lattice_cfg(tmp_path, method="all", k=2)
        out = bench_lattice(cfg)
        assert set(out) == {"th", "gdth", "bdm"}

    def test_sv_gets_split_mesh(self, tmp_path):
        cfg = tiny_lattice_cfg(tmp_path, method="sv", k=2)
        out = bench_lattice(cfg)
        manifest = json.loads(
            (tmp_path / "lattice-SV2.manifest.json").read_text())
        assert manifest["mesh_stats"]["n_cells"] == 24  # 8 cells split


class TestRateBenches:
    def test_project_csv(self, tmp_path):
        cfg = BenchConfig(benchmark="project", method="bdm", k=1, nu=1.0,
                          mesh="unit-periodic:2", levels=2, out=str(tmp_path))
        table, path = bench_project(cfg)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("h,ndofs,errL2,rateL2")
        assert len(lines) == 3
        # diagnostic ratio column present and finite
        last = lines[-1].split(",")
        assert math.isfinite(float(last[-1]))
        # idempotence column near zero
        assert float(last[-2]) < 1e-9

    def test_converge_insufficient_levels(self, tmp_path):
        cfg = BenchConfig(benchmark="converge", method="bdm", k=1, nu=1e-2,
                          dt=0.05, tend=0.1, mesh="unit-periodic:2", levels=1,
                          out=str(tmp_path))
        with pytest.raises(ValueError):
            bench_converge(cfg)


class TestConfigResolution:
    def test_profile_defaults(self):
        cfg = BenchConfig(benchmark="lattice", profile="paperlite").resolved()
        assert cfg.k == 4 and cfg.nu == 1e-5 and cfg.dt == 1e-3
        assert cfg.tend == 10.0 and cfg.mesh == "lattice-coarse-periodic"
        paper = BenchConfig(benchmark="lattice", profile="paper").resolved()
        assert paper.k == 8 and paper.dt == 1e-4 and paper.tend == 26.0

    def test_explicit_overrides_profile(self):
        cfg = BenchConfig(benchmark="lattice", profile="paperlite",
                          k=2, tend=1.0).resolved()
        assert cfg.k == 2 and cfg.tend == 1.0 and cfg.nu == 1e-5

    def test_potential_requires_unit_viscosity(self):
        with pytest.raises(ValueError):
            BenchConfig(benchmark="potential", nu=0.5).resolved()

    def test_cli_flags_override_config_file(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps(
            {"method": "bdm", "k": 1, "nu": 0.5, "dt": 0.02, "tend": 0.04,
             "mesh": "unit-periodic:2"}))
        parser = build_parser()
        args = parser.parse_args(
            ["lattice", "--config", str(cfg_file), "--nu", "0.25"])
        cfg = config_from_args(args)
        assert cfg.nu == 0.25 and cfg.k == 1 and cfg.method == "bdm"

    def test_unknown_config_field_rejected(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"viscosity": 1.0}))
        parser = build_parser()
        args = parser.parse_args(["lattice", "--config", str(cfg_file)])
        with pytest.raises(ValueError):
            config_from_args(args)


class TestCliMain:
    def test_end_to_end(self, tmp_path, capsys):
        rc = main(["lattice", "--method", "bdm", "--order", "1",
                   "--nu", "0.01", "--dt", "0.02", "--tend", "0.06",
                   "--mesh", "unit-periodic:2", "--out", str(tmp_path)])
        assert rc == 0
        assert "wrote" in capsys.readouterr().out
        assert (tmp_path / "lattice-BDM1.csv").exists()

    def test_gradient_shift_label(self, tmp_path):
        main(["lattice", "--method", "bdm", "--order", "1", "--nu", "0.01",
              "--dt", "0.02", "--tend", "0.04", "--mesh", "unit-periodic:2",
              "--out", str(tmp_path), "--gradient-shift"])
        assert (tmp_path / "lattice-BDM1-shifted.csv").exists()
