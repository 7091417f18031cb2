"""Density sweeps over the analytic and Monte Carlo engines.

A sweep is described by a YAML mapping (see README for every key). Lengths
in a config are meters, powers dBm, thresholds dB; ``parse_config`` converts
them to km, mW and linear ratios.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import analytic, simulation
from .analytic import NetworkParams
from .channel import (
    CASE1_A_LOS,
    CASE1_A_NLOS,
    CASE1_ALPHA_LOS,
    CASE1_ALPHA_NLOS,
    FadingKind,
    LosProbabilityPiece,
    PathLossModel,
    PathLossPiece,
    preset_3gpp_case1,
    preset_single_slope,
)
from .errors import ConfigError, DomainError
from .quadrature import QuadratureSpec
from .units import db_to_linear, dbm_to_mw

ENGINES = ("analytic", "montecarlo")
METRICS = ("coverage", "ase")
COLUMNS = ("scenario", "engine", "lambda_per_km2", "gamma_db", "p_cov", "ase_bps_hz_km2",
           "ci_half_width", "error")
THREADS_ENV = "UDN_ASE_THREADS"

log = logging.getLogger("udn_ase")


@dataclass(frozen=True)
class SweepSpec:
    name: str
    model: PathLossModel
    height_km: float
    tx_power_mw: float
    noise_mw: float
    fading: FadingKind
    threshold_db: float
    metric: str
    densities: tuple
    engines: tuple = ("analytic",)
    mc_trials: int = 10000
    mc_seed: int = 0
    mc_max_density: float = 1e4
    mc_eps: float = 0.005
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    output_path: str | None = None
    output_format: str = "csv"

    @property
    def threshold(self):
        return float(db_to_linear(self.threshold_db))

    def params(self, density):
        return NetworkParams(float(density), self.tx_power_mw, self.noise_mw, self.height_km, self.fading)


@dataclass(frozen=True)
class Row:
    scenario: str
    engine: str
    lambda_per_km2: float
    gamma_db: float
    p_cov: float = math.nan
    ase_bps_hz_km2: float = math.nan
    ci_half_width: float = math.nan
    error: str = ""


# ---------------------------------------------------------------------------
# config parsing

_TOP_KEYS = {"name", "model", "height_m", "tx_power_dbm", "noise_dbm", "fading", "threshold_db",
             "metric", "density", "engines", "mc", "quadrature", "output"}
_REQUIRED = ("model", "height_m", "threshold_db")


def _number(key, value, positive=False, non_negative=False):
    if isinstance(value, bool):
        raise ConfigError(key, "expected a number")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if math.isnan(x):
        raise ConfigError(key, "NaN is not allowed")
    if positive and not x > 0:
        raise ConfigError(key, f"must be positive, got {value!r}")
    if non_negative and not x >= 0:
        raise ConfigError(key, f"must be non-negative, got {value!r}")
    return x


def _mapping(key, value, allowed):
    if not isinstance(value, dict):
        raise ConfigError(key, "expected a mapping")
    unknown = set(value) - set(allowed)
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
    return value


def _parse_los_form(key, form, upper_km):
    if form == "zero":
        return LosProbabilityPiece.zero(upper_km)
    if form == "ramp":
        if math.isinf(upper_km):
            raise ConfigError(key, "ramp needs a finite breakpoint")
        return LosProbabilityPiece.ramp(upper_km)
    if isinstance(form, (int, float)) and not isinstance(form, bool):
        value = _number(key, form)
        if not 0 <= value <= 1:
            raise ConfigError(key, "constant LoS probability must lie in [0, 1]")
        return LosProbabilityPiece.zero(upper_km) if value == 0 else LosProbabilityPiece.constant(upper_km, value)
    if isinstance(form, dict):
        form = _mapping(key, form, {"intercept", "slope_per_m"})
        intercept = _number(f"{key}.intercept", form.get("intercept", 1.0))
        slope = _number(f"{key}.slope_per_m", form.get("slope_per_m", 0.0)) * 1000.0
        return LosProbabilityPiece.linear(upper_km, intercept, slope)
    raise ConfigError(key, f"unknown LoS probability form {form!r}")


def _parse_model(value):
    if isinstance(value, str):
        value = {"preset": value}
    value = _mapping("model", value, {"preset", "pieces", "d1_m", "a_los", "alpha_los", "a_nlos",
                                      "alpha_nlos", "amplitude", "exponent"})
    if "pieces" in value:
        if "preset" in value:
            raise ConfigError("model", "give either a preset or pieces, not both")
        return _parse_pieces(value["pieces"])
    preset = value.get("preset")
    if preset == "3gpp-case1":
        extra = set(value) - {"preset", "d1_m", "a_los", "alpha_los", "a_nlos", "alpha_nlos"}
        if extra:
            raise ConfigError(f"model.{sorted(extra)[0]}", "not a 3gpp-case1 parameter")
        model = preset_3gpp_case1(
            d1=_number("model.d1_m", value.get("d1_m", 300.0), positive=True) / 1000.0,
            a_los=_number("model.a_los", value.get("a_los", CASE1_A_LOS), positive=True),
            alpha_los=_number("model.alpha_los", value.get("alpha_los", CASE1_ALPHA_LOS), positive=True),
            a_nlos=_number("model.a_nlos", value.get("a_nlos", CASE1_A_NLOS), positive=True),
            alpha_nlos=_number("model.alpha_nlos", value.get("alpha_nlos", CASE1_ALPHA_NLOS), positive=True),
        )
        if "alpha_los" in value:
            model = replace(model, name=f"3gpp-case1(alpha_los={model.pieces[0].los_exponent:g})")
        return model
    if preset == "single-slope":
        extra = set(value) - {"preset", "amplitude", "exponent"}
        if extra:
            raise ConfigError(f"model.{sorted(extra)[0]}", "not a single-slope parameter")
        return preset_single_slope(
            _number("model.amplitude", value.get("amplitude", CASE1_A_NLOS), positive=True),
            _number("model.exponent", value.get("exponent", CASE1_ALPHA_NLOS), positive=True),
        )
    raise ConfigError("model", f"unknown preset {preset!r}")


def _parse_pieces(pieces):
    if not isinstance(pieces, list) or not pieces:
        raise ConfigError("model.pieces", "expected a non-empty list")
    pl, lp = [], []
    for i, item in enumerate(pieces):
        key = f"model.pieces[{i}]"
        item = _mapping(key, item, {"d_n_m", "a_los", "alpha_los", "a_nlos", "alpha_nlos", "los_prob_form"})
        for name in ("d_n_m", "a_los", "alpha_los", "a_nlos", "alpha_nlos"):
            if name not in item:
                raise ConfigError(f"{key}.{name}", "missing required key")
        d = item["d_n_m"]
        upper = math.inf if d in (None, "inf", "Infinity") else _number(f"{key}.d_n_m", d, positive=True) / 1000.0
        try:
            pl.append(PathLossPiece(
                upper,
                _number(f"{key}.a_los", item["a_los"], positive=True),
                _number(f"{key}.alpha_los", item["alpha_los"], positive=True),
                _number(f"{key}.a_nlos", item["a_nlos"], positive=True),
                _number(f"{key}.alpha_nlos", item["alpha_nlos"], positive=True),
            ))
        except DomainError as exc:
            raise ConfigError(key, str(exc)) from None
        lp.append(_parse_los_form(f"{key}.los_prob_form", item.get("los_prob_form", "zero"), upper))
    try:
        return PathLossModel(tuple(pl), tuple(lp))
    except DomainError as exc:
        raise ConfigError("model.pieces", str(exc)) from None


def _parse_fading(value):
    if value == "rayleigh":
        return FadingKind.rayleigh()
    if value == "rician":
        return FadingKind.rician()
    if isinstance(value, dict) and set(value) == {"rician"}:
        opts = _mapping("fading.rician", value["rician"] or {}, {"k_intercept_db", "k_slope_db_per_m"})
        return FadingKind.rician(
            _number("fading.rician.k_intercept_db", opts.get("k_intercept_db", 13.0)),
            _number("fading.rician.k_slope_db_per_m", opts.get("k_slope_db_per_m", -0.03)),
        )
    raise ConfigError("fading", f"expected rayleigh or rician, got {value!r}")


def density_grid(start=0.1, stop=1e5, per_decade=8):
    """Log-spaced densities including both endpoints."""
    decades = math.log10(stop / start)
    n = int(round(decades * per_decade))
    return tuple(float(x) for x in np.logspace(math.log10(start), math.log10(stop), n + 1))


def _parse_density(value):
    if isinstance(value, list):
        grid = tuple(_number("density", v, positive=True) for v in value)
    else:
        value = _mapping("density", value, {"start", "stop", "per_decade"})
        start = _number("density.start", value.get("start", 0.1), positive=True)
        stop = _number("density.stop", value.get("stop", 1e5), positive=True)
        per = value.get("per_decade", 8)
        if isinstance(per, bool) or not isinstance(per, int) or per < 1:
            raise ConfigError("density.per_decade", "expected a positive integer")
        if not stop > start:
            raise ConfigError("density.stop", "must exceed density.start")
        grid = density_grid(start, stop, per)
    if not grid:
        raise ConfigError("density", "empty grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("density", "grid must be strictly increasing")
    return grid


def _parse_engines(value):
    if value == "both":
        return ENGINES
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError("engines", "expected a non-empty list")
    for v in value:
        if v not in ENGINES:
            raise ConfigError("engines", f"unknown engine {v!r}")
    return tuple(e for e in ENGINES if e in value)


def parse_config(text) -> SweepSpec:
    """Validate a YAML sweep description and convert it to internal units."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"invalid YAML: {exc}") from None
    return spec_from_mapping(raw)


def spec_from_mapping(raw) -> SweepSpec:
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "expected a mapping at the top level")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(key, "missing required key")

    mc = _mapping("mc", raw.get("mc", {}) or {}, {"trials", "seed", "max_density", "eps"})
    trials = mc.get("trials", 10000)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 100:
        raise ConfigError("mc.trials", "expected an integer of at least 100")
    seed = mc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("mc.seed", "expected a non-negative integer")
    eps = _number("mc.eps", mc.get("eps", 0.005), positive=True)
    if eps >= 1:
        raise ConfigError("mc.eps", "must be below 1")

    quad = _mapping("quadrature", raw.get("quadrature", {}) or {},
                    {"rel_tol", "abs_tol", "max_depth", "tail_cut"})
    defaults = QuadratureSpec()
    depth = quad.get("max_depth", defaults.max_depth)
    if isinstance(depth, bool) or not isinstance(depth, int) or depth < 1:
        raise ConfigError("quadrature.max_depth", "expected a positive integer")
    quadrature = QuadratureSpec(
        rel_tol=_number("quadrature.rel_tol", quad.get("rel_tol", defaults.rel_tol), positive=True),
        abs_tol=_number("quadrature.abs_tol", quad.get("abs_tol", defaults.abs_tol), positive=True),
        max_depth=depth,
        tail_cut=_number("quadrature.tail_cut", quad.get("tail_cut", defaults.tail_cut), positive=True),
    )

    out = _mapping("output", raw.get("output", {}) or {}, {"path", "format"})
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output.format", f"expected csv or json, got {fmt!r}")

    metric = raw.get("metric", "ase")
    if metric not in METRICS:
        raise ConfigError("metric", f"expected one of {METRICS}, got {metric!r}")

    noise = raw.get("noise_dbm", -95.0)
    noise_mw = 0.0 if noise is None else float(dbm_to_mw(_number("noise_dbm", noise)))

    name = raw.get("name", "custom")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "expected a non-empty string")

    return SweepSpec(
        name=name,
        model=_parse_model(raw["model"]),
        height_km=_number("height_m", raw["height_m"], non_negative=True) / 1000.0,
        tx_power_mw=float(dbm_to_mw(_number("tx_power_dbm", raw.get("tx_power_dbm", 24.0)))),
        noise_mw=noise_mw,
        fading=_parse_fading(raw.get("fading", "rayleigh")),
        threshold_db=_number("threshold_db", raw["threshold_db"]),
        metric=metric,
        densities=_parse_density(raw.get("density", {}) or {}),
        engines=_parse_engines(raw.get("engines", ["analytic"])),
        mc_trials=trials,
        mc_seed=seed,
        mc_max_density=_number("mc.max_density", mc.get("max_density", 1e4), positive=True),
        mc_eps=eps,
        quadrature=quadrature,
        output_path=out.get("path"),
        output_format=fmt,
    )


# ---------------------------------------------------------------------------
# bundled scenarios

def _curve(name, model, height_m, metric, engines=("analytic",), fading=None, **kw):
    return SweepSpec(
        name=name,
        model=model,
        height_km=height_m / 1000.0,
        tx_power_mw=float(dbm_to_mw(24.0)),
        noise_mw=float(dbm_to_mw(-95.0)),
        fading=fading or FadingKind.rayleigh(),
        threshold_db=0.0,
        metric=metric,
        densities=density_grid(),
        engines=engines,
        **kw,
    )


def _four_curves(prefix, metric, engines):
    single = preset_single_slope()
    case1 = preset_3gpp_case1()
    return [
        _curve(f"{prefix}/single-slope/L=0m", single, 0.0, metric, engines),
        _curve(f"{prefix}/single-slope/L=8.5m", single, 8.5, metric, engines),
        _curve(f"{prefix}/3gpp-case1/L=0m", case1, 0.0, metric, engines),
        _curve(f"{prefix}/3gpp-case1/L=8.5m", case1, 8.5, metric, engines),
    ]


def scenario_specs(name):
    """The curves making up a bundled scenario, in plotting order."""
    case1 = preset_3gpp_case1()
    if name == "fig1-ase-overview":
        return [
            _curve(f"{name}/single-slope/L=0m", preset_single_slope(), 0.0, "ase"),
            _curve(f"{name}/3gpp-case1/L=0m", case1, 0.0, "ase"),
            _curve(f"{name}/3gpp-case1/L=8.5m", case1, 8.5, "ase"),
        ]
    if name == "fig3-coverage":
        return _four_curves(name, "coverage", ENGINES)
    if name == "fig4-ase":
        return _four_curves(name, "ase", ("analytic",))
    if name == "fig5-variants":
        return [
            _curve(f"{name}/3gpp-case1/L=0m", case1, 0.0, "ase"),
            _curve(f"{name}/3gpp-case1/L=8.5m", case1, 8.5, "ase"),
            _curve(f"{name}/3gpp-case1/L=3.5m", case1, 3.5, "ase"),
            _curve(f"{name}/3gpp-case1-alpha_los=1.09/L=8.5m", case1.with_los_exponent(1.09), 8.5, "ase"),
            _curve(f"{name}/3gpp-case1-rician/L=8.5m", case1, 8.5, "ase", ("montecarlo",),
                   fading=FadingKind.rician()),
        ]
    raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


SCENARIOS = ("fig1-ase-overview", "fig3-coverage", "fig4-ase", "fig5-variants")


# ---------------------------------------------------------------------------
# execution

def _evaluate(spec: SweepSpec, density: float, engine: str) -> Row:
    base = Row(spec.name, engine, density, spec.threshold_db)
    try:
        params = spec.params(density)
        gamma = spec.threshold
        if engine == "analytic":
            if spec.metric == "coverage":
                p = analytic.coverage_probability(spec.model, params, gamma, spec.quadrature)
                return replace(base, p_cov=p, ci_half_width=0.0)
            a = analytic.ase(spec.model, params, gamma, spec.quadrature)
            return replace(base, ase_bps_hz_km2=a, ci_half_width=0.0)
        cfg = simulation.make_config(spec.model, params, spec.mc_trials, spec.mc_seed, eps=spec.mc_eps)
        result = simulation.run_trials(cfg)
        if spec.metric == "coverage":
            p, ci = result.coverage(gamma)
            return replace(base, p_cov=p, ci_half_width=ci)
        a, ci = result.ase(gamma)
        return replace(base, ase_bps_hz_km2=a, ci_half_width=ci)
    except Exception as exc:  # one failed point must not sink the sweep
        return replace(base, error=f"{type(exc).__name__}: {exc}")


def _evaluate_task(task):
    return _evaluate(*task)


def sweep_tasks(spec: SweepSpec):
    """(spec, density, engine) in output order; Monte Carlo stops at ``mc_max_density``."""
    tasks = []
    for density in spec.densities:
        for engine in spec.engines:
            if engine == "montecarlo" and density > spec.mc_max_density:
                continue
            tasks.append((spec, density, engine))
    return tasks


def resolve_workers(workers=None):
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else 1
    return max(1, int(workers))


def _progress(rows, total, start):
    for i, row in enumerate(rows, 1):
        log.info("[%d/%d] %s %s lambda=%.6g %s (%.1f s)", i, total, row.scenario, row.engine,
                 row.lambda_per_km2, "failed" if row.error else "ok", time.perf_counter() - start)
        yield row


def run_tasks(tasks, workers=None):
    workers = resolve_workers(workers)
    start = time.perf_counter()
    if workers == 1 or len(tasks) < 2:
        return list(_progress(map(_evaluate_task, tasks), len(tasks), start))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so rows come back in grid order.
        return list(_progress(pool.map(_evaluate_task, tasks, chunksize=1), len(tasks), start))


def run_sweep(spec: SweepSpec, workers=None):
    """One row per (density, engine), ordered by density then engine."""
    return run_tasks(sweep_tasks(spec), workers)


def run_scenario(name, workers=None, densities=None, mc_trials=None):
    specs = scenario_specs(name)
    if densities is not None:
        specs = [replace(s, densities=tuple(densities)) for s in specs]
    if mc_trials is not None:
        specs = [replace(s, mc_trials=int(mc_trials)) for s in specs]
    tasks = [t for s in specs for t in sweep_tasks(s)]
    return run_tasks(tasks, workers)


# ---------------------------------------------------------------------------
# output

def _fmt(value):
    if isinstance(value, str):
        return value
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), ".9g")


def _json_value(value):
    if isinstance(value, str):
        return value
    if value is None or math.isnan(value):
        return None
    return float(format(float(value), ".9g"))


def render(rows, fmt="csv"):
    if not rows:
        raise ValueError("cannot emit an empty table")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            d = asdict(row)
            writer.writerow([_fmt(d[c]) for c in COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        records = [{c: _json_value(asdict(row)[c]) for c in COLUMNS} for row in rows]
        return json.dumps(records, indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(rows, path, fmt="csv"):
    """Write ``rows`` to ``path`` as CSV or JSON with 9 significant digits."""
    text = render(rows, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def load_table(path, fmt=None):
    """Read a table written by ``emit`` back into rows."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    with open(path, encoding="utf-8") as fh:
        if fmt == "json":
            records = json.load(fh)
        else:
            records = list(csv.DictReader(fh))
    rows = []
    for rec in records:
        values = {}
        for c in COLUMNS:
            v = rec[c]
            if c in ("scenario", "engine", "error"):
                values[c] = v or ""
            else:
                values[c] = math.nan if v in ("", None) else float(v)
        rows.append(Row(**values))
    return rows


def cross_check(rows, sigmas=3.0, trials=None):
    """Pair analytic and Monte Carlo rows of the same curve and density.

    Returns ``(scenario, density, analytic, empirical, ci_half_width, agrees)``
    where ``agrees`` means the gap is within ``sigmas`` standard errors
    (the CI half-width is 1.96 of them). Given the trial count, coverage rows
    also allow the binomial error implied by the analytic value, so a rare
    event with zero simulated hits (and hence a zero-width CI) is not flagged.
    """
    analytic_rows = {(r.scenario, r.lambda_per_km2): r for r in rows if r.engine == "analytic" and not r.error}
    out = []
    for r in rows:
        if r.engine != "montecarlo" or r.error:
            continue
        a = analytic_rows.get((r.scenario, r.lambda_per_km2))
        if a is None:
            continue
        col = "p_cov" if not math.isnan(r.p_cov) else "ase_bps_hz_km2"
        exact, est = getattr(a, col), getattr(r, col)
        se = r.ci_half_width / 1.96
        if trials and col == "p_cov":
            se = max(se, math.sqrt(exact * (1.0 - exact) / trials))
        bound = sigmas * se
        out.append((r.scenario, r.lambda_per_km2, exact, est, r.ci_half_width, abs(exact - est) <= bound))
    return out
