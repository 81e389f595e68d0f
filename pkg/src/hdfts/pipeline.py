"""Point-forecast assembly: FANOVA mean structure plus factor-model dynamics."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .factor import FactorFit, FactorSelectConfig, fit_factors
from .fanova import TWA_ONLY, TWA_OWA, Decomposition, decompose
from .tsforecast import forecast_series

TWA_OWA_FFM = "TWA_OWA_FFM"
TWA_FFM = "TWA_FFM"
METHODS = (TWA_OWA_FFM, TWA_FFM)
ENGINES = ("ets", "arima")

_MODE = {TWA_OWA_FFM: TWA_OWA, TWA_FFM: TWA_ONLY}


def thread_count() -> int:
    """Worker threads from ``HDFTS_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("HDFTS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PipelineConfig:
    method: str = TWA_OWA_FFM
    engine: str = "ets"
    factor: FactorSelectConfig = field(default_factory=FactorSelectConfig)
    ar_p_max: int = 3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")


@dataclass(frozen=True)
class FittedPipeline:
    config: PipelineConfig
    decomposition: Decomposition
    factors: tuple[FactorFit, ...]

    def forecast(self, horizon: int) -> np.ndarray:
        """Log-scale forecasts for steps 1..horizon, shape (G, N, horizon, p)."""
        det = self.decomposition.deterministic()
        G, N, p = det.shape
        out = np.empty((G, N, horizon, p))
        for g, fit in enumerate(self.factors):
            future = np.column_stack([
                forecast_series(fit.scores[:, k], horizon, self.config.engine, self.config.ar_p_max)
                for k in range(fit.q)
            ])
            stochastic = np.einsum("ikp,hk->ihp", fit.loadings, future)
            out[g] = det[g][:, None, :] + stochastic
        return out


def fit_pipeline(values, points, config: PipelineConfig = PipelineConfig(), groups=None) -> FittedPipeline:
    """Decompose a fully valid log panel ``(G, N, T, p)`` and fit one factor model per group."""
    dec = decompose(values, _MODE[config.method])
    labels = groups if groups is not None else range(dec.stochastic.shape[0])
    fits = tuple(
        fit_factors(dec.stochastic[g], points, config.factor, group=label)
        for g, label in enumerate(labels)
    )
    return FittedPipeline(config, dec, fits)


class OriginForecaster:
    """Memoised refits of the pipeline on expanding windows of one panel.

    An origin ``o`` means the first ``o`` years are used; the stored forecast
    has shape (G, N, horizon, p) and step ``h`` targets year index ``o + h - 1``.
    """

    def __init__(self, values, points, config: PipelineConfig = PipelineConfig(), horizon: int = 1):
        self.values = np.asarray(values, dtype=float)
        self.points = np.asarray(points, dtype=float)
        self.config = config
        self.horizon = int(horizon)
        self._cache: dict[int, np.ndarray] = {}

    def _fit(self, o: int) -> np.ndarray:
        if not 2 <= o <= self.values.shape[2]:
            raise ValueError(f"origin {o} outside 2..{self.values.shape[2]}")
        return fit_pipeline(self.values[:, :, :o], self.points, self.config).forecast(self.horizon)

    def get(self, o: int) -> np.ndarray:
        o = int(o)
        if o not in self._cache:
            self._cache[o] = self._fit(o)
        return self._cache[o]

    def many(self, origins) -> np.ndarray:
        origins = [int(o) for o in origins]
        todo = sorted(set(o for o in origins if o not in self._cache))
        workers = min(thread_count(), max(1, len(todo)))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                for o, res in zip(todo, pool.map(self._fit, todo)):
                    self._cache[o] = res
        else:
            for o in todo:
                self._cache[o] = self._fit(o)
        G, N, _, p = self.values.shape
        if not origins:
            return np.empty((0, G, N, self.horizon, p))
        return np.stack([self._cache[o] for o in origins])


def forecast_from_origins(values, points, origins, horizon: int,
                          config: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Refit on the first ``o`` years for each origin and forecast ``horizon`` steps.

    Returns log-scale forecasts of shape (len(origins), G, N, horizon, p).
    """
    return OriginForecaster(values, points, config, horizon).many(origins)
