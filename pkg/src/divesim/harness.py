"""Scenario runner: configuration, sweeps, fits and output files.

A scenario is described by a TOML file::

    scenario = "breakdown"

    [model]
    tau = 0.5

    [model.measure]
    family = "power_law"
    nu = 1
    p = 4.0

    [schedule]
    E_lo = -1.0
    E_m = 0.5

    [sweep]
    etas = [0.2, 0.1, 0.05, 0.025]

    [output]
    dir = "out"
    workers = 2

Each run writes ``<scenario>.csv`` (one row per sweep point, floats in
round-trip precision), ``<scenario>.json`` (fits, checks, runtime) and
``<scenario>.gp`` (a gnuplot script plotting the CSV).  CSV content depends
only on the configuration.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
from scipy import stats

from . import dynamics as dy
from . import formfactor as ff
from . import spectral as sp
from .errors import ConfigError, DivesimError, FitError, ModelInvalidError

__all__ = [
    "SCENARIOS",
    "ScenarioConfig",
    "SweepRecord",
    "load_config",
    "parse_config",
    "fit_exponent",
    "run_scenario",
    "write_outputs",
]

SCENARIOS = ("spectral", "dispersion", "threshold_adiabatic", "breakdown", "gap_case",
             "microscopic", "dyson")

_SWEEP_SCENARIOS = ("threshold_adiabatic", "breakdown", "gap_case", "microscopic", "dyson")

_DEFAULT_TOLERANCES = {
    "sum_rule": 1e-6,
    "threshold_slope_rel": 0.05,
    "derivative_variation": 3.0,
    "dispersion_slope": -2.5,
    "dispersion_slope_tol": 0.15,
    "threshold_exponent_min": 1.0 / 13.0 - 0.02,
    "breakdown_ratio": 0.5,
    "gap_survival_min": 0.99,
    "microscopic_ratio_factor": 1.8,
    "dyson_i1_slope_min": 2.0,
}

_TOP_KEYS = {"scenario", "model", "schedule", "sweep", "tolerances", "output", "spectral",
             "dispersion", "microscopic", "dyson"}
_SWEEP_KEYS = {"etas", "dt"}
_OUTPUT_KEYS = {"dir", "workers"}
_SECTION_KEYS = {
    "spectral": {"energies", "eps"},
    "dispersion": {"E_a", "t_min", "t_max", "n_t"},
    "microscopic": {"alphas", "nu"},
    "dyson": {"E_a", "band"},
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description (see module docstring for the file layout)."""

    scenario: str
    model: sp.Model
    schedule: dy.PulseSchedule
    etas: tuple = ()
    dt: float | None = None
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    out_dir: str = "out"
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False)


@dataclass
class SweepRecord:
    """Rows of one scenario plus fitted exponents and acceptance checks.

    Wall-clock times live in ``runtime`` and ``row_runtimes`` and are written
    to the JSON summary only, so the CSV stays byte-identical between runs.
    """

    scenario: str
    columns: list
    rows: list
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    failed: list = field(default_factory=list)
    row_runtimes: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values()) and not self.failed


# ---------------------------------------------------------------------------
# configuration


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")


def load_config(path, scenario=None):
    """Read and validate a TOML scenario file."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(raw, scenario)


def parse_config(raw, scenario=None):
    """Validate a configuration mapping; ``scenario`` overrides or must match the file."""
    _check_keys(raw, _TOP_KEYS, "top level")
    name = raw.get("scenario", scenario)
    if scenario is not None and name != scenario:
        raise ConfigError(f"config is for scenario {name!r}, not {scenario!r}")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")

    if "model" not in raw:
        raise ConfigError("missing required [model] block")
    if name in _SWEEP_SCENARIOS and "etas" not in raw.get("sweep", {}):
        raise ConfigError(f"scenario {name!r} needs [sweep] etas")
    model_block = raw["model"]
    _check_keys(model_block, {"tau", "measure"}, "model")
    measure = ff.measure_from_config(model_block.get("measure", {"family": "power_law"}))
    try:
        model = sp.Model(measure, float(model_block.get("tau", 0.5)))
    except ModelInvalidError as exc:
        raise ConfigError(str(exc)) from None
    schedule = dy.schedule_from_config(raw.get("schedule", {}))

    sweep = raw.get("sweep", {})
    _check_keys(sweep, _SWEEP_KEYS, "sweep")
    etas = [float(e) for e in sweep.get("etas", [])]
    if name in _SWEEP_SCENARIOS and not etas:
        raise ConfigError("eta list is empty")
    if any(e <= 0 for e in etas):
        raise ConfigError("eta values must be positive")
    if etas != sorted(etas, reverse=True) or len(set(etas)) != len(etas):
        raise ConfigError("eta values must be distinct and sorted descending")
    dt = sweep.get("dt")
    if dt is not None and not float(dt) > 0:
        raise ConfigError("dt must be positive")

    tol = dict(_DEFAULT_TOLERANCES)
    user_tol = raw.get("tolerances", {})
    _check_keys(user_tol, _DEFAULT_TOLERANCES, "tolerances")
    tol.update({k: float(v) for k, v in user_tol.items()})

    options = {}
    for section, keys in _SECTION_KEYS.items():
        block = raw.get(section, {})
        _check_keys(block, keys, section)
        options[section] = dict(block)

    out = raw.get("output", {})
    _check_keys(out, _OUTPUT_KEYS, "output")
    workers = int(out.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return ScenarioConfig(scenario=name, model=model, schedule=schedule, etas=tuple(etas),
                          dt=None if dt is None else float(dt), tolerances=tol, options=options,
                          out_dir=str(out.get("dir", "out")), workers=workers, raw=raw)


# ---------------------------------------------------------------------------
# fitting


def fit_exponent(pairs):
    """Least-squares slope of ``ln y`` against ``ln x`` and its standard error."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise FitError(f"need at least 3 points, got {len(pairs)}")
    x, y = np.asarray(pairs, dtype=float).T
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
        raise FitError("log-log fit needs finite positive data")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.stderr)


def _check(value, threshold, passed, **extra):
    return {"value": value, "threshold": threshold, "passed": bool(passed), **extra}


# ---------------------------------------------------------------------------
# per-eta workers (module level so they can be pickled)


def _row_breakdown(cfg, eta):
    run = dy.evolve(cfg.model, cfg.schedule, eta, dt=cfg.dt, probes=("final",))
    return {"survival": dy.survival_probability(run, "final")}


def _row_threshold(cfg, eta):
    fwd = dy.threshold_run(cfg.model, cfg.schedule, eta, "forward", dt=cfg.dt)
    bwd = dy.threshold_run(cfg.model, cfg.schedule, eta, "backward", dt=cfg.dt)
    return {"distance_sc": dy.threshold_distance(fwd), "distance_sc_prime": dy.threshold_distance(bwd)}


def _row_gap(cfg, eta):
    run = dy.evolve(cfg.model, cfg.schedule, eta, dt=cfg.dt, probes=("final",))
    return {"survival": dy.survival_probability(run, "final")}


def _row_microscopic(cfg, eta, alpha, nu):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        surv = dy.microscopic_survival(cfg.model, cfg.schedule, eta, alpha, nu=nu, dt=cfg.dt)
    return {"survival": surv, "loss": 1.0 - surv,
            "below_eta0": float(eta < dy.microscopic_eta_limit(alpha, nu))}


def _row_dyson(cfg, eta):
    opts = cfg.options.get("dyson", {})
    kw = {}
    if "E_a" in opts:
        kw["E_a"] = float(opts["E_a"])
    if "band" in opts:
        kw["band"] = tuple(float(b) for b in opts["band"])
    d = dy.dyson_diagnostics(cfg.model, cfg.schedule, eta, **kw)
    return {"I1": d["I1"], "I2": d["I2"], "I3": d["I3"], "I4": d["I4"],
            "I4_scaled": d["I4"] / math.sqrt(eta), "I4_envelope": d["I4_envelope"],
            "A_sup": d["A_sup"]}


_ROW_FUNCS = {
    "breakdown": _row_breakdown,
    "threshold_adiabatic": _row_threshold,
    "gap_case": _row_gap,
    "microscopic": _row_microscopic,
    "dyson": _row_dyson,
}


def _run_task(cfg, task):
    """Evaluate one sweep point; errors are reported, not raised."""
    func = _ROW_FUNCS[cfg.scenario]
    start = time.perf_counter()
    try:
        values, err = func(cfg, *task), None
    except DivesimError as exc:
        values, err = None, f"{type(exc).__name__}: {exc}"
    return task, values, err, time.perf_counter() - start


def _run_chunk(cfg, tasks):
    return [_run_task(cfg, t) for t in tasks]


def _map_tasks(cfg, tasks):
    """Static round-robin partition of ``tasks`` over ``cfg.workers`` processes."""
    if cfg.workers == 1 or len(tasks) <= 1:
        results = _run_chunk(cfg, tasks)
    else:
        n = min(cfg.workers, len(tasks))
        chunks = [tasks[i::n] for i in range(n)]
        with ProcessPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(_run_chunk, [cfg] * n, chunks))
        results = [r for part in parts for r in part]
    order = {t: i for i, t in enumerate(tasks)}
    return sorted(results, key=lambda r: order[r[0]])


# ---------------------------------------------------------------------------
# scenarios


def _sweep_rows(cfg, tasks, keys, extra):
    rows, failed, runtimes = [], [], []
    for task, values, err, elapsed in _map_tasks(cfg, tasks):
        runtimes.append({**dict(zip(keys, task)), "runtime_s": elapsed})
        row = dict(zip(keys, task))
        row.update(extra)
        if err is None:
            row.update(values)
            row["status"] = "ok"
        else:
            row["status"] = "failed"
            failed.append({**dict(zip(keys, task)), "reason": err})
        rows.append(row)
    return rows, failed, runtimes


def _scenario_spectral(cfg):
    model, tol = cfg.model, cfg.tolerances
    opts = cfg.options["spectral"]
    crit = sp.critical_energy(model)
    if "energies" in opts:
        energies = [float(e) for e in opts["energies"]]
    else:
        top = crit.E_c if model.tau > 0 else 0.0
        energies = list(np.linspace(cfg.schedule.E_lo, top - 0.05 * (top - cfg.schedule.E_lo), 9))
    rows = []
    worst = 0.0
    for E in energies:
        bs = sp.instantaneous_state(model, E)
        cont = sp.density_integral(model, E)
        resid = cont + bs.dot_weight_sq - 1.0
        worst = max(worst, abs(resid))
        rows.append({"E": E, "E_c": crit.E_c, "lam": bs.lam, "dot_weight_sq": bs.dot_weight_sq,
                     "dot_weight_sq_c": crit.dot_weight_sq_c, "continuum_weight": cont,
                     "sum_rule_residual": resid})
    checks = {"sum_rule_below": _check(worst, tol["sum_rule"], worst <= tol["sum_rule"])}
    fits = {}
    if model.tau > 0:
        E_a = cfg.schedule.E_m
        above = sp.density_integral(model, E_a) - 1.0
        checks["sum_rule_above"] = _check(abs(above), tol["sum_rule"], abs(above) <= tol["sum_rule"])
        eps = float(opts.get("eps", 1e-3))
        lam = sp.bound_state(model, crit.E_c - eps).lam
        slope = lam / (-eps)
        rel = abs(slope / crit.dot_weight_sq_c - 1.0)
        checks["threshold_slope"] = _check(rel, tol["threshold_slope_rel"],
                                           rel <= tol["threshold_slope_rel"],
                                           measured=slope, expected=crit.dot_weight_sq_c)
        gaps = np.geomspace(1e-4, 1e-1, 7)
        scaled = [sp.projection_derivative_norm(model, crit.E_c - g) * g**0.75 for g in gaps]
        var = max(scaled) / min(scaled)
        checks["derivative_rate"] = _check(var, tol["derivative_variation"],
                                           var < tol["derivative_variation"])
        fits["derivative_norm"] = dict(zip(("slope", "stderr"), fit_exponent(
            [(g, s / g**0.75) for g, s in zip(gaps, scaled)])))
    else:
        ok = all(r["lam"] == r["E"] for r in rows) and crit.E_c == 0.0
        checks["decoupled_table"] = _check(float(ok), 1.0, ok)
    cols = ["E", "E_c", "lam", "dot_weight_sq", "dot_weight_sq_c", "continuum_weight",
            "sum_rule_residual"]
    return SweepRecord("spectral", cols, rows, fits, checks)


def _scenario_dispersion(cfg):
    model, tol = cfg.model, cfg.tolerances
    opts = cfg.options["dispersion"]
    E_a = float(opts.get("E_a", cfg.schedule.E_m))
    t = np.geomspace(float(opts.get("t_min", 1e2)), float(opts.get("t_max", 1e4)),
                     int(opts.get("n_t", 40)))
    amp = sp.static_survival(model, E_a, t)
    rows = [{"t": float(ti), "re": float(a.real), "im": float(a.imag), "abs": float(abs(a))}
            for ti, a in zip(t, amp)]
    slope, err = fit_exponent(zip(t, np.abs(amp)))
    target, width = tol["dispersion_slope"], tol["dispersion_slope_tol"]
    checks = {"decay_slope": _check(slope, [target - width, target + width],
                                    abs(slope - target) <= width)}
    return SweepRecord("dispersion", ["t", "re", "im", "abs"], rows,
                       {"decay": {"slope": slope, "stderr": err}}, checks)


def _scenario_eta_sweep(cfg):
    model, tol, name = cfg.model, cfg.tolerances, cfg.scenario
    if name == "gap_case":
        gap = model.measure.support_lower
        if not cfg.schedule.E_m < gap:
            raise ModelInvalidError(f"gap case needs E_m < delta^2 = {gap}")
        crit = sp.critical_energy(model)
    else:
        crit = sp.check_subcritical(model, cfg.schedule.E_m)
    lam_lo = sp.instantaneous_state(model, cfg.schedule.E_lo).lam
    extra = {"E_c": crit.E_c, "lam_lo": lam_lo}
    checks, fits = {}, {}
    if name == "breakdown":
        holds, c = sp.assumption3_check(model, cfg.schedule.E_m)
        if not holds:
            raise ModelInvalidError(f"dispersive assumption fails at E_m (inf |F| = {c:.3g})")
        extra["inf_abs_F"] = c
    rows, failed, runtimes = _sweep_rows(cfg, [(e,) for e in cfg.etas], ["eta"], extra)
    ok = [r for r in rows if r["status"] == "ok"]
    if name == "breakdown":
        surv = [r["survival"] for r in ok]
        dec = len(ok) == len(rows) and all(b < a for a, b in zip(surv, surv[1:]))
        checks["strictly_decreasing"] = _check(surv, "decreasing", dec)
        if len(surv) >= 2:
            ratio = surv[-1] / surv[0]
            checks["halving"] = _check(ratio, tol["breakdown_ratio"], ratio < tol["breakdown_ratio"])
        cols = ["eta", "survival", "E_c", "lam_lo", "inf_abs_F", "status"]
    elif name == "threshold_adiabatic":
        dist = [r["distance_sc"] for r in ok]
        dec = len(ok) == len(rows) and all(b < a for a, b in zip(dist, dist[1:]))
        checks["decreasing"] = _check(dist, "decreasing", dec)
        if len(ok) >= 3:
            slope, err = fit_exponent([(r["eta"], r["distance_sc"]) for r in ok])
            fits["distance_sc"] = {"slope": slope, "stderr": err}
            fits["distance_sc_prime"] = dict(zip(("slope", "stderr"), fit_exponent(
                [(r["eta"], r["distance_sc_prime"]) for r in ok])))
            thr = tol["threshold_exponent_min"]
            checks["exponent"] = _check(slope, thr, slope >= thr)
        cols = ["eta", "distance_sc", "distance_sc_prime", "E_c", "lam_lo", "status"]
    else:
        thr = tol["gap_survival_min"]
        surv = [r.get("survival", float("nan")) for r in rows]
        checks["survival"] = _check(surv, thr, bool(ok) and len(ok) == len(rows)
                                    and min(surv) >= thr)
        cols = ["eta", "survival", "E_c", "lam_lo", "status"]
    return SweepRecord(name, cols, rows, fits, checks, failed, runtimes)


def _measure_nu(model, opts):
    if "nu" in opts:
        return int(opts["nu"])
    m = model.measure
    for cand in (m, getattr(m, "base", None)):
        if cand is not None and hasattr(cand, "nu"):
            return int(cand.nu)
    return 1


def _scenario_microscopic(cfg):
    model, tol = cfg.model, cfg.tolerances
    opts = cfg.options["microscopic"]
    alphas = [float(a) for a in opts.get("alphas", [0.05, 0.1, 0.2])]
    nu = _measure_nu(model, opts)
    crit = sp.check_subcritical(model, cfg.schedule.E_m)
    tasks = [(eta, a, nu) for eta in cfg.etas for a in alphas]
    rows, failed, runtimes = _sweep_rows(cfg, tasks, ["eta", "alpha", "nu"], {"E_c": crit.E_c})
    checks, fits = {}, {}
    fac = tol["microscopic_ratio_factor"]
    for eta in cfg.etas:
        sel = [r for r in rows if r["eta"] == eta and r["status"] == "ok"]
        ratios = []
        ok = len(sel) == len(alphas) and len(sel) >= 2
        for r0, r1 in zip(sel, sel[1:]):
            a_ratio = r1["alpha"] / r0["alpha"]
            l_ratio = r1["loss"] / r0["loss"] if r0["loss"] > 0 else float("inf")
            ratios.append(l_ratio / a_ratio)
            ok = ok and (1.0 / fac) <= l_ratio / a_ratio <= fac
        checks[f"linear_loss_eta_{eta!r}"] = _check(ratios, [1.0 / fac, fac], ok)
        if len(sel) >= 3 and all(r["loss"] > 0 for r in sel):
            fits[f"loss_vs_alpha_eta_{eta!r}"] = dict(zip(("slope", "stderr"), fit_exponent(
                [(r["alpha"], r["loss"]) for r in sel])))
    cols = ["eta", "alpha", "nu", "survival", "loss", "below_eta0", "E_c", "status"]
    return SweepRecord("microscopic", cols, rows, fits, checks, failed, runtimes)


def _scenario_dyson(cfg):
    model, tol = cfg.model, cfg.tolerances
    crit = sp.check_subcritical(model, cfg.schedule.E_m)
    rows, failed, runtimes = _sweep_rows(cfg, [(e,) for e in cfg.etas], ["eta"], {"E_c": crit.E_c})
    ok = [r for r in rows if r["status"] == "ok"]
    checks, fits = {}, {}
    complete = len(ok) == len(rows) and bool(ok)
    if complete and model.tau > 0:
        worst = max(r["I4_scaled"] / r["I4_envelope"] for r in ok)
        checks["I4_sqrt_eta_bounded"] = _check(worst, 1.0, worst <= 1.0)
    if complete and len(ok) >= 3:
        slope, err = fit_exponent([(r["eta"], r["I1"]) for r in ok])
        fits["I1"] = {"slope": slope, "stderr": err}
        thr = tol["dyson_i1_slope_min"]
        checks["I1_faster_than_eta2"] = _check(slope, thr, slope > thr)
    cols = ["eta", "I1", "I2", "I3", "I4", "I4_scaled", "I4_envelope", "A_sup", "E_c", "status"]
    return SweepRecord("dyson", cols, rows, fits, checks, failed, runtimes)


_SCENARIO_FUNCS = {
    "spectral": _scenario_spectral,
    "dispersion": _scenario_dispersion,
    "threshold_adiabatic": _scenario_eta_sweep,
    "breakdown": _scenario_eta_sweep,
    "gap_case": _scenario_eta_sweep,
    "microscopic": _scenario_microscopic,
    "dyson": _scenario_dyson,
}


def run_scenario(cfg):
    """Run the configured scenario and return its :class:`SweepRecord`."""
    start = time.perf_counter()
    record = _SCENARIO_FUNCS[cfg.scenario](cfg)
    record.runtime = time.perf_counter() - start
    return record


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(record):
    """CSV rendering of ``record`` (header plus one line per row)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(record.columns)
    for row in record.rows:
        writer.writerow([_fmt(row.get(c, "")) for c in record.columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _plot_script(record, csv_name):
    x = record.columns[0]
    logxy = record.scenario in ("dispersion", "threshold_adiabatic", "dyson", "microscopic")
    ys = [c for c in record.columns[1:] if c not in ("status", "E_c", "lam_lo", "nu",
                                                       "below_eta0", "inf_abs_F", "eta")]
    lines = [
        f"# {record.scenario}: plot {', '.join(ys)} against {x}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{record.scenario}.png'",
        f"set xlabel '{x}'",
    ]
    if logxy:
        lines.append("set logscale xy")
    plots = [f"'{csv_name}' using '{x}':'{y}' with linespoints" for y in ys]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def write_outputs(record, cfg, out_dir=None):
    """Write CSV, JSON summary and gnuplot script; returns the three paths."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = record.scenario
    csv_path = out / f"{base}.csv"
    csv_path.write_text(csv_text(record))
    summary = {
        "scenario": base,
        "passed": record.passed,
        "checks": record.checks,
        "fits": record.fits,
        "failed_rows": record.failed,
        "runtime_s": record.runtime,
        "row_runtimes": record.row_runtimes,
        "config": cfg.raw,
    }
    json_path = out / f"{base}.json"
    json_path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    gp_path = out / f"{base}.gp"
    gp_path.write_text(_plot_script(record, csv_path.name))
    return csv_path, json_path, gp_path
