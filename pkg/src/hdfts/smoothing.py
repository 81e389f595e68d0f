"""Discrete penalized smoothing of log-rate curves with a monotone upper tail.

Each curve is fitted by Whittaker-Henderson graduation (weighted squared error
plus ``lam`` times squared k-th order differences) and then projected onto
non-decreasing sequences at grid points at or beyond ``monotone_from`` with
the pool-adjacent-violators algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .panel import LOG, AgeGrid, FunctionalPanel, PanelError

AUTO_LAMBDAS = np.logspace(-4, 4, 25)


class SmoothingError(ValueError):
    pass


@dataclass(frozen=True)
class SmootherConfig:
    lam: Union[float, str] = "auto"
    penalty_order: int = 2
    monotone_from: float | None = 65.0
    weight_mode: str = "uniform"

    def __post_init__(self):
        if isinstance(self.lam, str):
            if self.lam != "auto":
                raise SmoothingError(f"lam must be a non-negative number or 'auto', got {self.lam!r}")
        elif not (self.lam >= 0 and np.isfinite(self.lam)):
            raise SmoothingError(f"lam must be >= 0, got {self.lam}")
        if self.penalty_order not in (1, 2, 3):
            raise SmoothingError("penalty_order must be 1, 2 or 3")
        if self.weight_mode not in ("uniform", "inverse-variance-proxy"):
            raise SmoothingError(f"unknown weight_mode {self.weight_mode!r}")

    def check_grid(self, grid: AgeGrid) -> None:
        if self.monotone_from is None:
            return
        lo, hi = grid.points[0], grid.points[-1]
        if not lo <= self.monotone_from <= hi:
            raise SmoothingError(f"monotone_from={self.monotone_from} outside grid range [{lo}, {hi}]")


def pava(y: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Weighted least-squares projection of ``y`` onto non-decreasing sequences."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    means, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), weights.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), weights.pop(), sizes.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt if wt > 0 else 0.5 * (m1 + m2))
            weights.append(wt)
            sizes.append(s1 + s2)
    return np.repeat(means, sizes)


@lru_cache(maxsize=8)
def _penalty(p: int, order: int) -> np.ndarray:
    D = np.diff(np.eye(p), n=order, axis=0)
    P = D.T @ D
    P.flags.writeable = False
    return P


def difference_roughness(z: np.ndarray, order: int) -> float:
    return float(np.sum(np.diff(z, n=order) ** 2))


def _interpolate_exact(y: np.ndarray, valid: np.ndarray, order: int) -> np.ndarray:
    """lam -> 0 limit: keep valid points, fill gaps with the smoothest completion."""
    z = np.where(valid, y, 0.0)
    if valid.all():
        return z
    D = np.diff(np.eye(y.size), n=order, axis=0)
    miss = ~valid
    sol, *_ = np.linalg.lstsq(D[:, miss], -D[:, valid] @ y[valid], rcond=None)
    z[miss] = sol
    return z


class _HatCache:
    """Hat matrices ``(W + lam P)^-1 W`` keyed on the mask pattern."""

    def __init__(self, p: int, order: int):
        self.P = _penalty(p, order)
        self._store: dict[tuple[bytes, float], np.ndarray] = {}

    def hat(self, valid: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
        """Return the hat matrix and its effective degrees of freedom on valid cells."""
        key = (valid.tobytes(), float(lam))
        hit = self._store.get(key)
        if hit is None:
            W = np.diag(valid.astype(float))
            H = np.linalg.solve(W + lam * self.P, W)
            if len(self._store) > 4096:
                self._store.clear()
            hit = self._store[key] = (H, float(np.trace(H[np.ix_(valid, valid)])))
        return hit


def _gcv_lambda(y, valid, cache: _HatCache) -> float:
    n = int(valid.sum())
    best, best_score = AUTO_LAMBDAS[0], np.inf
    yv = np.where(valid, y, 0.0)
    for lam in AUTO_LAMBDAS:
        H, df = cache.hat(valid, lam)
        rss = float(np.sum((yv - H @ yv)[valid] ** 2))
        if n - df <= 1e-8:
            continue
        score = n * rss / (n - df) ** 2
        if score < best_score - 1e-15 * max(1.0, abs(best_score)):
            best, best_score = lam, score
    return float(best)


def smooth_curve(y, grid: AgeGrid, cfg: SmootherConfig = SmootherConfig(), mask=None,
                 _cache: _HatCache | None = None) -> np.ndarray:
    """Smooth one log-rate curve over ``grid``; masked cells are imputed by the fit."""
    y = np.asarray(y, dtype=float)
    if y.shape != (grid.p,):
        raise SmoothingError(f"curve length {y.shape} does not match grid size {grid.p}")
    valid = np.ones(grid.p, bool) if mask is None else np.asarray(mask, dtype=bool).copy()
    if np.any(~np.isfinite(y[valid])):
        raise SmoothingError("non-finite value in a valid cell")
    k = cfg.penalty_order
    if valid.sum() < k + 1:
        raise SmoothingError(f"need at least {k + 1} valid points, got {int(valid.sum())}")
    cfg.check_grid(grid)

    cache = _cache or _HatCache(grid.p, k)
    lam = _gcv_lambda(y, valid, cache) if cfg.lam == "auto" else float(cfg.lam)
    if lam == 0.0:
        z = _interpolate_exact(y, valid, k)
    else:
        z = cache.hat(valid, lam)[0] @ np.where(valid, y, 0.0)

    if cfg.monotone_from is not None:
        tail = grid.points >= cfg.monotone_from
        z[tail] = pava(z[tail])
    return z


def smooth_panel(panel: FunctionalPanel, cfg: SmootherConfig = SmootherConfig()) -> FunctionalPanel:
    if panel.scale != LOG:
        raise SmoothingError("smooth_panel expects a log-rate panel")
    cfg.check_grid(panel.grid)
    G, N, T, p = panel.shape
    out = np.empty((G, N, T, p))
    cache = _HatCache(p, cfg.penalty_order)
    idx = panel.index
    for g in range(G):
        for i in range(N):
            for t in range(T):
                try:
                    out[g, i, t] = smooth_curve(panel.values[g, i, t], panel.grid, cfg,
                                                panel.mask[g, i, t], _cache=cache)
                except (SmoothingError, PanelError, np.linalg.LinAlgError) as exc:
                    raise SmoothingError(
                        f"group={idx.groups[g]!r} unit={idx.units[i]!r} year={idx.years[t]}: {exc}"
                    ) from exc
    return FunctionalPanel(idx, panel.grid, out, LOG, np.ones_like(out, dtype=bool))
