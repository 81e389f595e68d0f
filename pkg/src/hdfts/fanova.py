"""Two-way and nested one-way functional ANOVA by sample means.

Arrays follow the panel layout ``(G, N, T, p)``: group, unit, year, grid point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .panel import FunctionalPanel, PanelError

TWA_OWA = "TWA_OWA"
TWA_ONLY = "TWA_only"


def _as_values(panel) -> np.ndarray:
    if isinstance(panel, FunctionalPanel):
        panel.require_fully_valid()
        return np.asarray(panel.values)
    values = np.asarray(panel, dtype=float)
    if values.ndim != 4:
        raise PanelError(f"expected a (G, N, T, p) array, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise PanelError("FANOVA needs a fully valid panel (found non-finite cells)")
    return values


@dataclass(frozen=True)
class TwoWayEffects:
    mu: np.ndarray               # (p,)
    alpha: np.ndarray            # (N, p) unit effects
    delta: np.ndarray            # (G, p) group effects
    residual_dagger: np.ndarray  # (G, N, T, p)

    def deterministic(self) -> np.ndarray:
        """mu + alpha_i + delta^g as a (G, N, p) array."""
        return self.mu[None, None, :] + self.alpha[None, :, :] + self.delta[:, None, :]


class OneWayGroup(NamedTuple):
    theta: np.ndarray      # (p,)
    eta: np.ndarray        # (N, p)
    remainder: np.ndarray  # (N, T, p)


@dataclass(frozen=True)
class OneWayEffects:
    theta: np.ndarray      # (G, p)
    eta: np.ndarray        # (G, N, p)
    remainder: np.ndarray  # (G, N, T, p)

    def deterministic(self) -> np.ndarray:
        return self.theta[:, None, :] + self.eta


def estimate_two_way(panel) -> TwoWayEffects:
    """Grand, unit and group mean curves, and the residual panel they leave."""
    Y = _as_values(panel)
    G, N, T, _ = Y.shape
    if G < 2 or N < 2:
        raise PanelError(f"two-way FANOVA needs G >= 2 and N >= 2, got G={G}, N={N}")
    mu = Y.mean(axis=(0, 1, 2))
    alpha = Y.mean(axis=(0, 2)) - mu
    delta = Y.mean(axis=(1, 2)) - mu
    resid = Y - mu - alpha[None, :, None, :] - delta[:, None, None, :]
    return TwoWayEffects(mu, alpha, delta, resid)


def _one_way(X: np.ndarray) -> OneWayGroup:
    theta = X.mean(axis=(0, 1))
    eta = X.mean(axis=1) - theta
    return OneWayGroup(theta, eta, X - theta - eta[:, None, :])


def estimate_one_way(residual, group, groups=None) -> OneWayGroup:
    """One-way decomposition of a single group's residual slice.

    ``residual`` is a ``(G, N, T, p)`` array, a :class:`TwoWayEffects`, or a
    :class:`FunctionalPanel`.  ``group`` is a label (looked up in ``groups`` or
    the panel index) or an integer position.
    """
    labels = groups
    if isinstance(residual, TwoWayEffects):
        residual = residual.residual_dagger
    elif isinstance(residual, FunctionalPanel):
        labels = residual.index.groups if labels is None else labels
    X = _as_values(residual)
    if labels is not None:
        labels = tuple(labels)
        if group not in labels:
            raise KeyError(f"unknown group {group!r}; known: {labels}")
        g = labels.index(group)
    elif isinstance(group, (int, np.integer)) and 0 <= group < X.shape[0]:
        g = int(group)
    else:
        raise KeyError(f"unknown group {group!r}")
    return _one_way(X[g])


def estimate_one_way_all(residual) -> OneWayEffects:
    if isinstance(residual, TwoWayEffects):
        residual = residual.residual_dagger
    X = _as_values(residual)
    parts = [_one_way(X[g]) for g in range(X.shape[0])]
    return OneWayEffects(
        np.stack([p.theta for p in parts]),
        np.stack([p.eta for p in parts]),
        np.stack([p.remainder for p in parts]),
    )


@dataclass(frozen=True)
class Decomposition:
    mode: str
    two_way: TwoWayEffects
    one_way: Optional[OneWayEffects]
    stochastic: np.ndarray  # R under TWA_OWA, X-dagger under TWA_only

    def deterministic(self) -> np.ndarray:
        """Time-invariant part of the fit, shape (G, N, p)."""
        det = self.two_way.deterministic()
        if self.one_way is not None:
            det = det + self.one_way.deterministic()
        return det

    def reconstruct(self) -> np.ndarray:
        return self.deterministic()[:, :, None, :] + self.stochastic


def decompose(panel, mode: str = TWA_OWA) -> Decomposition:
    if mode not in (TWA_OWA, TWA_ONLY):
        raise ValueError(f"mode must be {TWA_OWA!r} or {TWA_ONLY!r}, got {mode!r}")
    two = estimate_two_way(panel)
    if mode == TWA_ONLY:
        return Decomposition(mode, two, None, two.residual_dagger)
    one = estimate_one_way_all(two.residual_dagger)
    return Decomposition(mode, two, one, one.remainder)
