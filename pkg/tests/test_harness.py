"""Config parsing, fitting, scenario runs, output files and the command line."""
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from divesim import cli, harness
from divesim.errors import ConfigError, FitError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
scenario = "{scenario}"
[model]
tau = {tau}
[model.measure]
family = "{family}"
{measure_extra}
[schedule]
E_lo = -1.0
E_m = 0.5
{extra}
"""


def write_config(tmp_path, scenario, tau=0.5, family="power_law", measure_extra="", extra=""):
    path = tmp_path / f"{scenario}.toml"
    path.write_text(BASE.format(scenario=scenario, tau=tau, family=family,
                                measure_extra=measure_extra, extra=extra))
    return path


# -- fitting ------------------------------------------------------------------


def test_fit_exact_power_laws():
    x = np.geomspace(1.0, 10.0, 7)
    slope, err = harness.fit_exponent(zip(x, x))
    assert slope == pytest.approx(1.0, abs=1e-12) and err < 1e-12
    x = np.geomspace(1e-1, 1e3, 9)
    slope, _ = harness.fit_exponent(zip(x, x**-2.5))
    assert slope == pytest.approx(-2.5, abs=1e-10)


def test_fit_rejects_bad_input():
    with pytest.raises(FitError):
        harness.fit_exponent([(1.0, 1.0), (2.0, 2.0)])
    with pytest.raises(FitError):
        harness.fit_exponent([(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)])


def test_fit_on_dispersion_data(tmp_path):
    cfg = harness.load_config(write_config(tmp_path, "dispersion"))
    rec = harness.run_scenario(cfg)
    assert rec.fits["decay"]["slope"] == pytest.approx(-2.5, abs=0.15)


# -- configuration --------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = harness.load_config(path)
    assert cfg.scenario == path.stem
    assert list(cfg.etas) == sorted(cfg.etas, reverse=True)


@pytest.mark.parametrize("extra, message", [
    ("[sweep]\netas = [0.1, 0.2, 0.05]", "sorted"),
    ("[sweep]\netas = [0.1, -0.05]", "positive"),
    ("[sweep]\netas = [0.1]\nsteps = 3", "unknown"),
    ("[sweep]\netas = [0.1]\n[output]\nworkers = 0", "workers"),
    ("[sweep]\netas = [0.1]\n[tolerances]\nbreakdown_ration = 0.5", "unknown"),
    ("[sweep]\netas = [0.1]\n[plotting]\nstyle = 1", "unknown"),
    ("", "etas"),
])
def test_config_errors(tmp_path, extra, message):
    path = write_config(tmp_path, "breakdown", extra=extra)
    with pytest.raises(ConfigError, match=message):
        harness.load_config(path)


def test_config_requires_model_block(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('scenario = "spectral"\n')
    with pytest.raises(ConfigError, match="model"):
        harness.load_config(path)


def test_config_scenario_mismatch_and_syntax(tmp_path):
    path = write_config(tmp_path, "spectral")
    with pytest.raises(ConfigError):
        harness.load_config(path, "breakdown")
    bad = tmp_path / "bad.toml"
    bad.write_text("scenario = [")
    with pytest.raises(ConfigError):
        harness.load_config(bad)
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "missing.toml")


def test_breakdown_requires_dispersive_model(tmp_path):
    from divesim.errors import ModelInvalidError
    path = write_config(tmp_path, "breakdown", extra="[sweep]\netas = [0.1]\n")
    cfg = harness.load_config(path)
    strong = harness.parse_config({**cfg.raw, "model": {"tau": 0.9}})
    with pytest.raises(ModelInvalidError):
        harness.run_scenario(strong)


# -- scenarios --------------------------------------------------------------------


def test_spectral_decoupled_table(tmp_path):
    path = write_config(tmp_path, "spectral", tau=0.0, extra="[spectral]\nenergies = [-1.0, -0.5, -0.01]")
    rec = harness.run_scenario(harness.load_config(path))
    assert rec.passed
    for row in rec.rows:
        assert row["E_c"] == 0.0 and row["lam"] == row["E"] and row["dot_weight_sq"] == 1.0


def test_spectral_report(tmp_path):
    rec = harness.run_scenario(harness.load_config(write_config(tmp_path, "spectral")))
    assert rec.passed, rec.checks
    assert all(abs(r["sum_rule_residual"]) <= 1e-6 for r in rec.rows)


def test_gap_case_scenario(tmp_path):
    path = write_config(tmp_path, "gap_case", family="ir_cutoff", measure_extra="delta = 1.0",
                        extra="[sweep]\netas = [0.05, 0.02]")
    rec = harness.run_scenario(harness.load_config(path))
    assert rec.passed and all(r["survival"] >= 0.99 for r in rec.rows)


def test_gap_case_needs_gap(tmp_path):
    from divesim.errors import ModelInvalidError
    path = write_config(tmp_path, "gap_case", family="ir_cutoff", measure_extra="delta = 0.5",
                        extra="[sweep]\netas = [0.05]")
    with pytest.raises(ModelInvalidError):
        harness.run_scenario(harness.load_config(path))


def test_failed_rows_are_flagged(tmp_path):
    path = write_config(tmp_path, "microscopic",
                        extra="[sweep]\netas = [0.01]\n[microscopic]\nalphas = [0.05, 50.0]")
    rec = harness.run_scenario(harness.load_config(path))
    statuses = [r["status"] for r in rec.rows]
    assert statuses == ["ok", "failed"]
    assert rec.failed and "DomainError" in rec.failed[0]["reason"]
    assert not rec.passed


def test_breakdown_rows_and_workers_agree(tmp_path):
    extra = "[sweep]\netas = [0.2, 0.1, 0.05]"
    cfg = harness.load_config(write_config(tmp_path, "breakdown", extra=extra))
    one = harness.run_scenario(cfg)
    many = harness.run_scenario(harness.parse_config({**cfg.raw, "output": {"workers": 3}}))
    assert harness.csv_text(one) == harness.csv_text(many)
    surv = [r["survival"] for r in one.rows]
    assert surv[0] > surv[1] > surv[2]
    assert [r["eta"] for r in one.rows] == [0.2, 0.1, 0.05]


def test_row_reproducible_in_isolation(tmp_path):
    extra = "[sweep]\netas = [0.2, 0.1, 0.05]"
    cfg = harness.load_config(write_config(tmp_path, "threshold_adiabatic", extra=extra))
    full = harness.run_scenario(cfg)
    alone = harness.run_scenario(harness.parse_config({**cfg.raw, "sweep": {"etas": [0.1]}}))
    assert alone.rows[0] == full.rows[1]


# -- outputs and command line ------------------------------------------------------


def test_outputs_are_deterministic(tmp_path):
    path = write_config(tmp_path, "breakdown", extra="[sweep]\netas = [0.2, 0.1]")
    cfg = harness.load_config(path)
    a = harness.write_outputs(harness.run_scenario(cfg), cfg, tmp_path / "a")
    b = harness.write_outputs(harness.run_scenario(cfg), cfg, tmp_path / "b")
    assert a[0].read_bytes() == b[0].read_bytes()
    header = a[0].read_text().splitlines()[0].split(",")
    assert header == ["eta", "survival", "E_c", "lam_lo", "inf_abs_F", "status"]
    summary = json.loads(a[1].read_text())
    assert {"passed", "checks", "fits", "runtime_s", "row_runtimes"} <= set(summary)
    assert "breakdown.csv" in a[2].read_text()


def test_csv_floats_round_trip(tmp_path):
    path = write_config(tmp_path, "breakdown", extra="[sweep]\netas = [0.2]")
    cfg = harness.load_config(path)
    rec = harness.run_scenario(cfg)
    line = harness.csv_text(rec).splitlines()[1].split(",")
    assert float(line[1]) == rec.rows[0]["survival"]


def test_cli_exit_codes(tmp_path):
    ok = write_config(tmp_path, "gap_case", family="ir_cutoff", measure_extra="delta = 1.0",
                      extra="[sweep]\netas = [0.05]")
    assert cli.main(["gap_case", "--config", str(ok), "--out", str(tmp_path / "o"), "--check"]) == 0
    strict = write_config(tmp_path, "gap_case", family="ir_cutoff", measure_extra="delta = 1.0",
                          extra="[sweep]\netas = [0.05]\n[tolerances]\ngap_survival_min = 0.9999999")
    assert cli.main(["gap_case", "--config", str(strict), "--out", str(tmp_path / "o")]) == 0
    assert cli.main(["gap_case", "--config", str(strict), "--out", str(tmp_path / "o"), "--check"]) == 2
    assert cli.main(["breakdown", "--config", str(strict)]) == 1
    assert cli.main(["gap_case", "--config", str(tmp_path / "nope.toml")]) == 1
    assert cli.main(["gap_case", "--config", str(ok), "--workers", "0"]) == 1
    assert (tmp_path / "o" / "gap_case.csv").exists()


def test_console_script(tmp_path):
    path = write_config(tmp_path, "spectral", tau=0.0, extra="[spectral]\nenergies = [-1.0]")
    out = tmp_path / "cli"
    proc = subprocess.run([sys.executable, "-m", "divesim.cli", "spectral", "--config", str(path),
                           "--out", str(out), "--check"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
    assert sorted(p.name for p in out.iterdir()) == ["spectral.csv", "spectral.gp", "spectral.json"]
