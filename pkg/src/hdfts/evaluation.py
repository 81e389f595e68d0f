"""Expanding-window backtests and point/interval accuracy metrics.

All metrics work on original-scale arrays whose last two axes are
(target year, grid point); leading axes are kept, so ``rmsfe`` of a
(G, N, n, p) pair returns a (G, N) array of per-unit values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conformal import (
    QUANTILE,
    SD,
    ConformalError,
    IntervalSet,
    calibrate_split,
    residuals_at_horizon,
    sequential_test_intervals,
    split_intervals,
    validation_origins,
)
from .factor import FactorSelectConfig
from .panel import FunctionalPanel, make_split
from .pipeline import TWA_OWA_FFM, OriginForecaster, PipelineConfig

log = logging.getLogger(__name__)

PI_MODES = ("split-sd", "split-quantile", "sequential", "none")


class MetricError(ValueError):
    pass


def _pair(actual, forecast):
    a = np.asarray(actual, dtype=float)
    f = np.asarray(forecast, dtype=float)
    if a.shape != f.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {f.shape}")
    if a.ndim < 1 or a.size == 0 or a.shape[-1] == 0:
        raise MetricError("empty sample")
    return a, f


def _axes(a):
    return tuple(range(max(a.ndim - 2, 0), a.ndim))


def rmsfe(actual, forecast):
    a, f = _pair(actual, forecast)
    return np.sqrt(np.mean((a - f) ** 2, axis=_axes(a)))


def mafe(actual, forecast):
    a, f = _pair(actual, forecast)
    return np.mean(np.abs(a - f), axis=_axes(a))


def _bounds(actual, lower, upper):
    a, lo = _pair(actual, lower)
    _, up = _pair(actual, upper)
    return a, lo, up


def ecp(actual, lower, upper):
    a, lo, up = _bounds(actual, lower, upper)
    return np.mean((lo <= a) & (a <= up), axis=_axes(a))


def cpd(actual, lower, upper, alpha: float = 0.05):
    """|share above the upper bound + share below the lower bound - alpha|."""
    a, lo, up = _bounds(actual, lower, upper)
    outside = (a > up).astype(float) + (a < lo).astype(float)
    return np.abs(np.mean(outside, axis=_axes(a)) - alpha)


def interval_score(lower, upper, actual, alpha: float = 0.05):
    """Pointwise interval score; accepts scalars or arrays of equal shape."""
    a, lo, up = (np.asarray(x, dtype=float) for x in (actual, lower, upper))
    if not a.shape == lo.shape == up.shape:
        raise MetricError(f"shape mismatch {a.shape}, {lo.shape}, {up.shape}")
    if np.any(lo > up):
        raise MetricError("lower bound exceeds upper bound")
    penalty = 2.0 / alpha
    return ((up - lo)
            + penalty * (lo - a) * (a < lo)
            + penalty * (a - up) * (a > up))


def mean_interval_score(lower, upper, actual, alpha: float = 0.05):
    _bounds(actual, lower, upper)
    s = interval_score(lower, upper, actual, alpha)
    return np.mean(s, axis=_axes(s))


# --- backtest ---------------------------------------------------------------

@dataclass(frozen=True)
class BacktestConfig:
    first_train_end: Optional[int] = None        # year; default = end of validation block
    horizons: tuple = tuple(range(1, 11))
    method: str = TWA_OWA_FFM
    engine: str = "ets"
    pi_mode: str = "none"
    alpha: float = 0.05
    proportions: tuple = (0.6, 0.2, 0.2)
    factor: FactorSelectConfig = field(default_factory=FactorSelectConfig)
    ar_p_max: int = 3
    quantile_p_max: int = 2

    def __post_init__(self):
        if self.pi_mode not in PI_MODES:
            raise ValueError(f"pi_mode must be one of {PI_MODES}, got {self.pi_mode!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        hs = tuple(int(h) for h in self.horizons)
        if not hs or min(hs) < 1:
            raise ValueError("horizons must be positive integers")
        object.__setattr__(self, "horizons", tuple(sorted(set(hs))))
        object.__setattr__(self, "proportions", tuple(float(x) for x in self.proportions))

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.method, self.engine, self.factor, self.ar_p_max)


@dataclass(frozen=True)
class HorizonForecast:
    horizon: int
    origins: tuple          # origin counts (years used)
    target_years: tuple
    log_forecast: np.ndarray  # (G, N, n, p)
    forecast: np.ndarray      # original scale
    actual: np.ndarray        # original scale


@dataclass(frozen=True)
class BacktestResult:
    config: BacktestConfig
    groups: tuple
    units: tuple
    ages: np.ndarray
    forecasts: dict           # h -> HorizonForecast
    intervals: Optional[dict]  # h -> IntervalSet (targets are years)
    skipped: tuple            # (h, reason)


def expanding_backtest(panel: FunctionalPanel, cfg: BacktestConfig = BacktestConfig(),
                       actual=None, forecaster: OriginForecaster | None = None) -> BacktestResult:
    """Refit on growing windows and forecast every feasible horizon from each origin.

    ``panel`` must be a fully valid (smoothed) log panel.  ``actual`` holds the
    original-scale holdout values; it defaults to exp(panel).  A forecaster
    built on the same panel and pipeline settings may be passed in to reuse
    its refits.
    """
    panel.require_fully_valid()
    values = np.asarray(panel.values)
    years = panel.index.years
    T = len(years)
    actual = np.exp(values) if actual is None else np.asarray(actual, dtype=float)
    if actual.shape != values.shape:
        raise ValueError("actual must match the panel shape")

    split = make_split(years, cfg.proportions) if cfg.pi_mode.startswith("split") or \
        cfg.first_train_end is None else None
    end_year = cfg.first_train_end if cfg.first_train_end is not None else split.validation_years[-1]
    if end_year not in years or end_year == years[-1]:
        raise ValueError(f"first_train_end {end_year} must be a panel year before {years[-1]}")
    o0 = years.index(end_year) + 1
    n_test = T - o0

    feasible, skipped = [], []
    for h in cfg.horizons:
        if h > n_test:
            skipped.append((h, f"horizon exceeds the {n_test}-year test window"))
        else:
            feasible.append(h)
    for h, why in skipped:
        log.info("skipping h=%d: %s", h, why)
    if not feasible:
        raise ValueError("no feasible horizon")
    H = max(feasible)
    if forecaster is None or forecaster.horizon < H or forecaster.config != cfg.pipeline:
        forecaster = OriginForecaster(values, panel.grid.points, cfg.pipeline, H)

    forecasts = {}
    for h in feasible:
        origins = list(range(o0, T - h + 1))
        fc = forecaster.many(origins)[:, :, :, h - 1, :]          # (n, G, N, p)
        log_fc = np.moveaxis(fc, 0, 2)
        targets = [o + h - 1 for o in origins]
        forecasts[h] = HorizonForecast(
            h, tuple(origins), tuple(years[t] for t in targets),
            log_fc, np.exp(log_fc), actual[:, :, targets, :])

    intervals = None
    if cfg.pi_mode.startswith("split"):
        mode = SD if cfg.pi_mode == "split-sd" else QUANTILE
        n_train, n_val, _ = split.counts
        if n_train + n_val > o0:
            raise ValueError("validation block overlaps the test window; move first_train_end")
        intervals = {}
        for h in list(feasible):
            try:
                origins = validation_origins(n_train, n_val, h)
                res = residuals_at_horizon(forecaster, actual, origins, h)
                cal = calibrate_split(res, mode, cfg.alpha, h)
            except ConformalError as exc:
                skipped.append((h, f"split calibration: {exc}"))
                continue
            iv = split_intervals(forecasts[h].forecast, cal)
            intervals[h] = IntervalSet(iv.lower, iv.upper, forecasts[h].target_years, h)
    elif cfg.pi_mode == "sequential":
        intervals = {}
        for h in feasible:
            try:
                iv = sequential_test_intervals(forecaster, actual, n_test, h, cfg.alpha, cfg.quantile_p_max)
            except ConformalError as exc:
                skipped.append((h, f"sequential intervals: {exc}"))
                continue
            intervals[h] = IntervalSet(iv.lower, iv.upper, tuple(years[t] for t in iv.targets), h)

    return BacktestResult(cfg, panel.index.groups, panel.index.units, panel.grid.points.copy(),
                          forecasts, intervals, tuple(skipped))


# --- reports ----------------------------------------------------------------

POINT_METRICS = ("RMSFE", "MAFE")
INTERVAL_METRICS = ("ECP", "CPD", "IS")


@dataclass
class EvalReport:
    """Per-horizon values keyed by (metric, method, engine, pi_mode, group, horizon).

    Values are per-unit metrics averaged across units.
    """

    rows: list = field(default_factory=list)
    per_unit: dict = field(default_factory=dict)

    def add(self, metric, method, engine, pi_mode, group, horizon, value):
        self.rows.append(dict(metric=metric, method=method, engine=engine, pi_mode=pi_mode,
                              group=group, horizon=horizon, value=float(value)))

    def extend(self, other: "EvalReport") -> "EvalReport":
        self.rows.extend(other.rows)
        self.per_unit.update(other.per_unit)
        return self

    def value(self, metric, method, engine, pi_mode, group, horizon):
        for r in self.rows:
            if (r["metric"], r["method"], r["engine"], r["pi_mode"], r["group"], r["horizon"]) == \
                    (metric, method, engine, pi_mode, group, horizon):
                return r["value"]
        raise KeyError((metric, method, engine, pi_mode, group, horizon))

    def summary(self, metric, method, engine, pi_mode, group, horizons=None):
        vals = [r["value"] for r in self.rows
                if (r["metric"], r["method"], r["engine"], r["pi_mode"], r["group"]) ==
                (metric, method, engine, pi_mode, group)
                and (horizons is None or r["horizon"] in horizons)]
        if not vals:
            return float("nan"), float("nan")
        return float(np.mean(vals)), float(np.median(vals))


def evaluate(result: BacktestResult) -> EvalReport:
    cfg = result.config
    rep = EvalReport()
    for h, fc in sorted(result.forecasts.items()):
        unit_rmsfe = rmsfe(fc.actual, fc.forecast)
        unit_mafe = mafe(fc.actual, fc.forecast)
        for g, group in enumerate(result.groups):
            for name, arr in (("RMSFE", unit_rmsfe), ("MAFE", unit_mafe)):
                rep.add(name, cfg.method, cfg.engine, "none", group, h, arr[g].mean())
                rep.per_unit[(name, cfg.method, cfg.engine, "none", group, h)] = arr[g].copy()
    if result.intervals:
        for h, iv in sorted(result.intervals.items()):
            a = result.forecasts[h].actual
            parts = {
                "ECP": ecp(a, iv.lower, iv.upper),
                "CPD": cpd(a, iv.lower, iv.upper, cfg.alpha),
                "IS": mean_interval_score(iv.lower, iv.upper, a, cfg.alpha),
            }
            for g, group in enumerate(result.groups):
                for name, arr in parts.items():
                    rep.add(name, cfg.method, cfg.engine, cfg.pi_mode, group, h, arr[g].mean())
                    rep.per_unit[(name, cfg.method, cfg.engine, cfg.pi_mode, group, h)] = arr[g].copy()
    return rep


def run_backtest(panel: FunctionalPanel, configs: Sequence[BacktestConfig], actual=None):
    """Evaluate several configurations on one panel; returns (results, merged report)."""
    results, report = [], EvalReport()
    shared: dict = {}
    for cfg in configs:
        key = cfg.pipeline
        if key not in shared:
            H = max(c.horizons[-1] for c in configs if c.pipeline == key)
            shared[key] = OriginForecaster(np.asarray(panel.values), panel.grid.points, key, H)
        res = expanding_backtest(panel, cfg, actual, shared[key])
        results.append(res)
        report.extend(evaluate(res))
    return results, report
