"""Split and sequential conformal prediction intervals on the original rate scale.

Year positions are 0-based indices into the panel.  A forecast from origin
``o`` uses years ``0..o-1``; its step ``h`` targets index ``o + h - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import FunctionalPanel, SplitPlan
from .pipeline import OriginForecaster, PipelineConfig
from .tsforecast import fit_quantile_ar_batch, predict_quantile_batch

SD = "sd"
QUANTILE = "quantile"


class ConformalError(ValueError):
    pass


@dataclass(frozen=True)
class SplitCalibration:
    """Scale curves and tuning scalars for one horizon.

    ``gamma`` has shape (G, N, p) and ``xi`` shape (G, N).
    """

    gamma: np.ndarray
    xi: np.ndarray
    mode: str
    alpha: float
    horizon: int = 1


@dataclass(frozen=True)
class IntervalSet:
    """Bounds for one horizon: arrays of shape (G, N, n, p) over target indices."""

    lower: np.ndarray
    upper: np.ndarray
    targets: tuple
    horizon: int

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise ConformalError("lower/upper shapes differ")
        if np.any(self.lower > self.upper):
            raise ConformalError("lower bound above upper bound")


def _actual(values, actual):
    return np.exp(np.asarray(values, dtype=float)) if actual is None else np.asarray(actual, dtype=float)


def _resolve_panel(panel):
    if isinstance(panel, FunctionalPanel):
        panel.require_fully_valid()
        return np.asarray(panel.values), panel.grid.points
    raise TypeError("expected a FunctionalPanel; use the array-level helpers otherwise")


def validation_origins(n_train: int, n_val: int, h: int) -> list[int]:
    """Origins whose step-``h`` targets fall inside the validation block."""
    M = n_val - h + 1
    if M < 1:
        raise ConformalError(f"horizon {h} exceeds validation window of {n_val} years")
    return list(range(n_train, n_train + M))


def residuals_at_horizon(forecaster: OriginForecaster, actual, origins, h: int) -> np.ndarray:
    """Original-scale residuals actual - exp(forecast), shape (G, N, len(origins), p)."""
    fc = forecaster.many(origins)                     # (M, G, N, H, p)
    point = np.exp(fc[:, :, :, h - 1, :])
    targets = np.asarray(origins) + h - 1
    obs = np.moveaxis(np.asarray(actual)[:, :, targets, :], 2, 0)
    return np.moveaxis(obs - point, 0, 2)


def validation_residuals(panel: FunctionalPanel, split: SplitPlan, h: int,
                         config: PipelineConfig = PipelineConfig(), actual=None,
                         forecaster: OriginForecaster | None = None) -> np.ndarray:
    """Expanding-window h-step residual curves over the validation block.

    Returns shape (G, N, M, p) with M = len(validation) - h + 1.
    """
    values, points = _resolve_panel(panel)
    n_train, n_val, _ = split.counts
    origins = validation_origins(n_train, n_val, h)
    forecaster = forecaster or OriginForecaster(values, points, config, h)
    if forecaster.horizon < h:
        raise ConformalError("forecaster horizon shorter than h")
    return residuals_at_horizon(forecaster, _actual(values, actual), origins, h)


def ratios(residuals, gamma) -> np.ndarray:
    """|residual| / gamma with 0/0 -> 0 and x/0 -> inf; residuals (..., M, p), gamma (..., p)."""
    r = np.abs(np.asarray(residuals, dtype=float))
    g = np.broadcast_to(np.asarray(gamma, dtype=float)[..., None, :], r.shape)
    out = np.full(r.shape, np.inf)
    pos = g > 0
    np.divide(r, g, out=out, where=pos)
    out[~pos & (r == 0)] = 0.0
    return out


def _best_xi(r: np.ndarray, target: float) -> float:
    r = np.sort(r.ravel())
    n = r.size
    finite = r[np.isfinite(r)]
    cands = np.unique(np.concatenate([[0.0], finite]))
    cover = np.searchsorted(r, cands, side="right") / n
    gap = np.abs(cover - target)
    best = gap.min()
    # among minimal gaps prefer the higher coverage, then the smaller xi
    tied = np.flatnonzero(gap <= best)
    k = tied[np.argmax(cover[tied])]
    xi = float(cands[k])
    if xi == 0.0:
        pos = finite[finite > 0]
        xi = float(pos[0]) / 2 if pos.size else 1.0
    return xi


def calibrate_split(residuals, mode: str = SD, alpha: float = 0.05, horizon: int = 1) -> SplitCalibration:
    """Pointwise scale curves and the coverage-matching scalar per (group, unit).

    ``residuals`` has shape (G, N, M, p) (or (M, p) for a single series).
    ``xi`` minimises |coverage - (1 - alpha)| over all scalars, where coverage
    is the fraction of validation points with |residual| <= xi * gamma.
    """
    res = np.asarray(residuals, dtype=float)
    single = res.ndim == 2
    if single:
        res = res[None, None]
    if res.ndim != 4:
        raise ConformalError(f"residuals must be (G, N, M, p), got {res.shape}")
    if not 0 < alpha < 1:
        raise ConformalError("alpha must lie in (0, 1)")
    M = res.shape[2]
    if mode == SD:
        if M < 2:
            raise ConformalError("sd scaling needs at least 2 validation curves")
        gamma = res.std(axis=2, ddof=1)
    elif mode == QUANTILE:
        if M < 1:
            raise ConformalError("quantile scaling needs at least 1 validation curve")
        gamma = np.quantile(np.abs(res), 1 - alpha, axis=2, method="inverted_cdf")
    else:
        raise ConformalError(f"unknown mode {mode!r}")
    r = ratios(res, gamma)
    G, N = res.shape[:2]
    xi = np.empty((G, N))
    for g in range(G):
        for i in range(N):
            if not np.any(np.isfinite(r[g, i]) & (r[g, i] > 0)) and np.any(np.isinf(r[g, i])):
                raise ConformalError("degenerate scale: gamma is zero where residuals are not")
            xi[g, i] = _best_xi(r[g, i], 1 - alpha)
    if single:
        return SplitCalibration(gamma[0, 0], xi[0, 0], mode, alpha, horizon)
    return SplitCalibration(gamma, xi, mode, alpha, horizon)


def split_coverage(residuals, cal: SplitCalibration) -> np.ndarray:
    """Fraction of validation points inside +-xi*gamma, per (group, unit)."""
    r = ratios(residuals, cal.gamma)
    xi = np.asarray(cal.xi, dtype=float)
    return np.mean(r <= xi[..., None, None], axis=(-2, -1))


def split_intervals(point_forecasts, cal: SplitCalibration, targets=()) -> IntervalSet:
    """forecast -+ xi * gamma with the lower bound clamped at zero.

    ``point_forecasts`` are original-scale, shape (G, N, n, p).
    """
    f = np.asarray(point_forecasts, dtype=float)
    gamma = np.asarray(cal.gamma, dtype=float)
    xi = np.asarray(cal.xi, dtype=float)
    if f.ndim != 4 or f.shape[:2] != gamma.shape[:2] or f.shape[-1] != gamma.shape[-1]:
        raise ConformalError(f"forecast shape {f.shape} does not match calibration {gamma.shape}")
    half = (xi[..., None] * gamma)[:, :, None, :]
    return IntervalSet(np.maximum(f - half, 0.0), f + half, tuple(targets), cal.horizon)


def sequential_quantiles(history, alpha: float = 0.05, p_max: int = 2) -> np.ndarray:
    """Next-step (1 - alpha) quantile of each absolute-residual history row.

    ``history`` has shape (K, L), chronological.  The AR order cap is reduced
    when the history is too short for it.
    """
    history = np.asarray(history, dtype=float)
    L = history.shape[1]
    pm = min(p_max, L - 3)
    if pm < 0:
        raise ConformalError(f"need at least 3 residuals for the quantile regression, got {L}")
    orders, coefs, _, _ = fit_quantile_ar_batch(history, 1 - alpha, pm)
    return predict_quantile_batch(orders, coefs, history)


def sequential_test_intervals(forecaster: OriginForecaster, actual, n_test: int, h: int,
                              alpha: float = 0.05, p_max: int = 2) -> IntervalSet:
    """Intervals for the step-``h`` forecasts whose targets lie in the last ``n_test`` years.

    For each test origin the absolute h-step residual history of every
    (group, unit, grid point) is rebuilt from all earlier origins (the first
    usable origin has two years of data), a quantile autoregression is refit,
    and the predicted quantile is added and subtracted around the forecast.
    """
    actual = np.asarray(actual, dtype=float)
    G, N, T, p = actual.shape
    first = T - n_test
    if first < p_max + 5:
        raise ConformalError(f"training window of {first} years is shorter than p_max + 5 = {p_max + 5}")
    test_origins = list(range(first, T - h + 1))
    if not test_origins:
        raise ConformalError(f"horizon {h} exceeds the test window")
    hist_origins = list(range(2, test_origins[-1] - h + 1))
    resid = np.abs(residuals_at_horizon(forecaster, actual, hist_origins, h)) if hist_origins else \
        np.empty((G, N, 0, p))
    flat = np.moveaxis(resid, 2, -1).reshape(G * N * p, -1)   # (K, len(hist_origins))
    fc = forecaster.many(test_origins)
    lower, upper = [], []
    for k, o in enumerate(test_origins):
        # residuals observed by the end of year o-1: targets o' + h - 1 <= o - 1
        n_hist = o - h + 1 - 2
        qhat = sequential_quantiles(flat[:, :n_hist], alpha, p_max).reshape(G, N, p)
        point = np.exp(fc[k, :, :, h - 1, :])
        lower.append(np.maximum(point - qhat, 0.0))
        upper.append(point + qhat)
    targets = tuple(o + h - 1 for o in test_origins)
    return IntervalSet(np.stack(lower, axis=2), np.stack(upper, axis=2), targets, h)


def sequential_intervals(panel: FunctionalPanel, n_test: int, h: int = 1, alpha: float = 0.05,
                         p_max: int = 2, config: PipelineConfig = PipelineConfig(),
                         actual=None) -> IntervalSet:
    values, points = _resolve_panel(panel)
    forecaster = OriginForecaster(values, points, config, h)
    return sequential_test_intervals(forecaster, _actual(values, actual), n_test, h, alpha, p_max)
