"""Synthetic log-rate panels with known FANOVA effects and a rank-1 factor part.

Used by the tests and the ``simulate`` CLI subcommand.  Curves are built on
the log scale as

    mu + alpha_i + delta_g + eta_ig + lambda_ig(u) * s_t + noise

with double-centred ``eta`` (zero sums over units and over groups) and AR(1)
scores ``s_t = rho * s_{t-1} + sigma * e_t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import LOG, AgeGrid, FunctionalPanel, PanelIndex


@dataclass(frozen=True)
class SyntheticPanel:
    panel: FunctionalPanel          # log scale
    mu: np.ndarray                  # (p,)
    alpha: np.ndarray               # (N, p)
    delta: np.ndarray               # (G, p)
    eta: np.ndarray                 # (G, N, p)
    loadings: np.ndarray            # (G, N, p)
    scores: np.ndarray              # (G, T)
    noise: np.ndarray               # (G, N, T, p)


def _smooth_curves(rng, n: int, u: np.ndarray, scale: float) -> np.ndarray:
    """n random smooth curves from a low-order cosine basis."""
    x = (u - u[0]) / max(u[-1] - u[0], 1e-12)
    basis = np.stack([np.cos(np.pi * k * x) for k in range(1, 4)])      # (3, p)
    coef = rng.normal(size=(n, 3)) / np.arange(1, 4)
    return scale * coef @ basis


def _centre(a: np.ndarray, axis: int) -> np.ndarray:
    return a - a.mean(axis=axis, keepdims=True)


def simulate_panel(G: int = 2, N: int = 10, T: int = 40, p: int = 30, sigma: float = 0.01,
                   rho: float = 0.9, s0: float = 2.0, eta_scale: float = 0.2,
                   effect_scale: float = 0.3, loading_scale: float = 0.1,
                   additive_loadings: bool = False, shared_scores: bool = False,
                   observation_noise: bool = True, first_year: int = 1975,
                   seed: int | None = 0) -> SyntheticPanel:
    """Draw one synthetic panel.

    ``sigma`` scales both the score innovations and the observation noise, so
    ``sigma -> 0`` approaches a noiseless, exactly forecastable panel.  With
    ``additive_loadings`` the factor loadings are ``a_i + b_g`` and the scores
    are shared across groups, which leaves no unit-by-group interaction in the
    time means; combined with ``eta_scale=0`` and ``observation_noise=False``
    the one-way step then has nothing to remove.
    """
    if min(G, N) < 2 or T < 5 or p < 3:
        raise ValueError("need G >= 2, N >= 2, T >= 5 and p >= 3")
    rng = np.random.default_rng(seed)
    u = np.arange(p, dtype=float)
    x = u / (p - 1)

    mu = -4.0 + 3.0 * x + 0.5 * np.cos(np.pi * x)
    alpha = _centre(_smooth_curves(rng, N, u, effect_scale), 0)
    delta = _centre(_smooth_curves(rng, G, u, effect_scale), 0)
    eta_raw = _smooth_curves(rng, G * N, u, eta_scale).reshape(G, N, p)
    eta = _centre(_centre(eta_raw, 0), 1)

    if additive_loadings:
        a = _smooth_curves(rng, N, u, loading_scale)
        b = _smooth_curves(rng, G, u, loading_scale)
        loadings = a[None] + b[:, None]
        shared_scores = True
    else:
        loadings = loading_scale * (1.0 + _smooth_curves(rng, G * N, u, 0.5).reshape(G, N, p))

    n_paths = 1 if shared_scores else G
    e = rng.normal(size=(n_paths, T))
    scores = np.empty((n_paths, T))
    prev = np.full(n_paths, s0)
    for t in range(T):
        prev = rho * prev + sigma * e[:, t]
        scores[:, t] = prev
    if shared_scores:
        scores = np.repeat(scores, G, axis=0)

    noise = rng.normal(size=(G, N, T, p)) * sigma if observation_noise else np.zeros((G, N, T, p))
    values = (mu[None, None, None]
              + alpha[None, :, None]
              + delta[:, None, None]
              + eta[:, :, None]
              + loadings[:, :, None, :] * scores[:, None, :, None]
              + noise)

    index = PanelIndex(tuple(f"G{g + 1}" for g in range(G)),
                       tuple(f"U{i + 1:02d}" for i in range(N)),
                       tuple(range(first_year, first_year + T)))
    panel = FunctionalPanel(index, AgeGrid(u), values, LOG)
    return SyntheticPanel(panel, mu, alpha, delta, eta, loadings, scores, noise)
