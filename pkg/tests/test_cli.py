import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cavmem import closed_form as cf
from cavmem import config as C
from cavmem import validation
from cavmem.cli import main
from cavmem.errors import ConfigError
from cavmem.scenarios import sweep_point


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest_hash=")
    rows = list(csv.reader(lines[1:]))
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


class TestConfig:
    def test_sections_and_comments(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("seed = 3\n[beam]\nlambda = 0.8  # dense\nvelocity_dist = gaussian\n"
                     "[integrator]\ndt_max = none\n")
        cfg = C.resolve(C.load_file(f))
        assert cfg["seed"] == 3 and cfg["beam.lambda"] == 0.8
        assert cfg["beam.velocity_dist"] == "gaussian" and cfg["integrator.dt_max"] is None

    def test_override_precedence(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("beam.lambda = 0.8\n")
        cfg = C.resolve(C.load_file(f), C.parse_overrides(["beam.lambda=0.3"]), seed=9)
        assert cfg["beam.lambda"] == 0.3 and cfg["seed"] == 9

    @pytest.mark.parametrize("override, field", [
        ("physics.kappa=-1", "physics.kappa"),
        ("beam.lambda=1.5", "beam.lambda"),
        ("protocol.kind=teleport", "protocol.kind"),
        ("physics.fock_cutoff=1", "physics.fock_cutoff"),
        ("grid.lambda=a:b", "grid.lambda"),
        ("no.such.key=1", "no.such.key"),
    ])
    def test_errors_name_the_field(self, override, field):
        with pytest.raises(ConfigError) as info:
            C.resolve(C.parse_overrides([override]))
        assert info.value.field == field

    def test_grids(self):
        np.testing.assert_array_equal(C.parse_grid("0:1:3"), [0, 0.5, 1])
        np.testing.assert_array_equal(C.parse_grid("1, 2,5"), [1, 2, 5])
        assert C.parse_grid("").size == 0

    def test_preset(self):
        cfg = C.resolve()
        p = C.physical_params(cfg)
        assert p.kappa == pytest.approx(3.846, abs=1e-3)
        assert p.Omega == pytest.approx(2 * np.pi / 1.96e-5)
        assert p.tau_dispersive == pytest.approx(3 * 1.96e-5)


class TestRun:
    def test_fig3(self, tmp_path):
        assert main(["run", "fig3", "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "fig3.csv")
        assert header == ["lambda", "gain"]
        assert len(rows) == 101 and rows[1][0] == pytest.approx(0.01)
        assert rows[-1][1] == pytest.approx(1.0, rel=0.01)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        first = (tmp_path / "fig3.csv").read_text().splitlines()[0]
        assert first == f"# manifest_hash={manifest['config_hash']}"

    def test_fig5(self, tmp_path):
        assert main(["run", "fig5", "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "fig5.csv")
        assert rows[-1][1] == pytest.approx(7.0, rel=0.02)

    def test_fig6_columns(self, tmp_path):
        assert main(["run", "fig6", "--out", str(tmp_path), "--set", "grid.lambda=0.5,1"]) == 0
        header, rows = read_csv(tmp_path / "fig6.csv")
        assert header[:3] == ["lambda", "dv", "gain_prime"]
        assert len(rows) == 2 * 21

    def test_fig8_endpoint(self, tmp_path):
        assert main(["run", "fig8", "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "fig8.csv")
        assert header == ["dv", "n_atoms", "time", "kappa_bar", "F_bar", "fidelity"]
        assert rows[0][:2] == [0.0, 0.0] and rows[0][-1] == 1.0
        assert max(r[1] for r in rows) == 3000

    @pytest.mark.parametrize("scenario", ["fig8", "fig9", "custom"])
    def test_bitwise_reproducible(self, tmp_path, scenario):
        args = ["run", scenario, "--seed", "7", "--set", "beam.dv=1", "--set", "beam.n_atoms=50"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        name = f"{scenario}.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_reload(self, tmp_path):
        assert main(["run", "custom", "--out", str(tmp_path / "a"), "--set", "beam.lambda=0.6",
                     "--set", "beam.n_atoms=30"]) == 0
        assert main(["run", "custom", "--config", str(tmp_path / "a" / "manifest.json"),
                     "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "custom.csv").read_bytes() == (tmp_path / "b" / "custom.csv").read_bytes()

    def test_custom_ensemble(self, tmp_path):
        assert main(["run", "custom", "--out", str(tmp_path), "--set", "run.n_realizations=20",
                     "--set", "beam.lambda=0.5", "--set", "run.engine=analytic"]) == 0
        header, rows = read_csv(tmp_path / "custom.csv")
        assert "coherence_se" in header and len(rows) == 101
        results = json.loads((tmp_path / "manifest.json").read_text())["results"]
        assert results["coherence_rate"] > 0

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["validate", "--out", str(tmp_path), "--set", "physics.kappa=-1"]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["field"] == "physics.kappa" and err["exit_code"] == 2
        assert json.loads((tmp_path / "error.json").read_text()) == err

    def test_numerical_failure_exit(self, tmp_path, capsys):
        # a fixed step far above the stability guard of the resonant segments
        code = main(["run", "custom", "--out", str(tmp_path), "--set", "integrator.dt_max=1e-3"])
        assert code == 3
        assert json.loads(capsys.readouterr().err)["error"] == "UnstableStep"

    def test_success_clears_stale_error(self, tmp_path):
        (tmp_path / "error.json").write_text("{}")
        assert main(["run", "fig3", "--out", str(tmp_path)]) == 0
        assert not (tmp_path / "error.json").exists()

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "cavmem", "run", "fig5", "--out", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "fig5.csv").exists()


class TestSweep:
    def test_empty_grid_header_only(self, tmp_path):
        assert main(["sweep", "--out", str(tmp_path), "--set", "sweep.x_values="]) == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[1] == "beam.lambda,gain"

    def test_single_point(self, tmp_path):
        assert main(["sweep", "--out", str(tmp_path), "--set", "sweep.x_values=0.37",
                     "--set", "sweep.quantity=Tr_c", "--set", "sweep.protocol=dispersive"]) == 0
        _, rows = read_csv(tmp_path / "sweep.csv")
        p = C.closed_form_params(C.resolve(), "dispersive", lam=0.37, dv=0.0)
        assert rows == [[0.37, cf.dwell_dispersive_dispersion(p).Tr_c]]

    def test_zero_dispersion_column_equals_fig3(self, tmp_path):
        assert main(["run", "fig3", "--out", str(tmp_path / "f")]) == 0
        assert main(["sweep", "--out", str(tmp_path / "s"), "--set", "sweep.x_values=0:1:101",
                     "--set", "sweep.y=beam.dv", "--set", "sweep.y_values=0,1",
                     "--set", "sweep.quantity=gain_prime"]) == 0
        _, fig = read_csv(tmp_path / "f" / "fig3.csv")
        _, sweep = read_csv(tmp_path / "s" / "sweep.csv")
        at_zero = [r for r in sweep if r[1] == 0.0]
        np.testing.assert_allclose([r[2] for r in at_zero], [r[1] for r in fig], rtol=1e-12, atol=1e-15)

    def test_fidelity_quantity(self):
        cfg = C.resolve(C.parse_overrides(["sweep.quantity=fidelity", "beam.n_atoms=0"]))
        assert sweep_point(cfg) == 1.0


class TestValidateCommand:
    def _stub(self, monkeypatch, statuses):
        def make(i, status):
            return lambda cfg: validation.Check(i, f"stub {i}", 0.0, 0.0, "n/a", status)
        monkeypatch.setattr(validation, "CRITERIA", tuple(make(i, s) for i, s in enumerate(statuses, 1)))

    def test_reported_checks_never_fail(self, tmp_path, monkeypatch):
        self._stub(monkeypatch, ["pass", "reported"])
        assert main(["validate", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "validation.json").read_text())
        assert [c["status"] for c in report["checks"]] == ["pass", "reported"]
        assert report["environment"]["fock_cutoff"] == 3
        assert "validation.json" in json.loads((tmp_path / "manifest.json").read_text())["files"]

    def test_failure_exit(self, tmp_path, monkeypatch):
        self._stub(monkeypatch, ["pass", "fail"])
        assert main(["run", "validate", "--out", str(tmp_path)]) == 1

    def test_doubled_step_keeps_order(self):
        cfg = C.resolve(C.parse_overrides(["integrator.dt_max=0.01"]))
        check = validation.criterion_solver_hygiene(cfg)
        assert check.status == "pass" and check.details["order_dt"] == 0.01

    def test_rerun_on_own_manifest(self, tmp_path, monkeypatch):
        fast = tuple(f for f in validation.CRITERIA if f is not validation.criterion_monte_carlo)
        monkeypatch.setattr(validation, "CRITERIA", fast)
        args = ["validate", "--seed", "4", "--set", "beam.lambda=0.7"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(["validate", "--config", str(tmp_path / "a" / "manifest.json"),
                     "--out", str(tmp_path / "b")]) == 0
        first = json.loads((tmp_path / "a" / "validation.json").read_text())
        second = json.loads((tmp_path / "b" / "validation.json").read_text())
        assert first["checks"] == second["checks"]
        assert first["environment"] == second["environment"]
