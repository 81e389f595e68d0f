"""Functional factor model for one group's residual curves.

The residual process ``R`` of a group is an ``(N, T, p)`` array.  Scores come
from the eigenvectors of the T x T inner-product matrix (scaled by sqrt(T)),
loadings from projecting the curves on those scores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_QMAX_CAP = 25


class FactorModelError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FactorSelectConfig:
    """Factor-count criterion settings.

    ``q_max`` defaults to ``min(T, 25)`` and ``phi`` to ``max(T, N) ** -0.5``
    when left as None.
    """

    q_max: Optional[int] = None
    phi: Optional[float] = None
    q_override: Optional[int] = None

    def __post_init__(self):
        if self.q_max is not None and self.q_max < 1:
            raise ValueError("q_max must be >= 1")
        if self.phi is not None and not self.phi > 0:
            raise ValueError("phi must be > 0")
        if self.q_override is not None and self.q_override < 1:
            raise ValueError("q_override must be >= 1")

    def resolve(self, N: int, T: int) -> tuple[int, float]:
        q_max = min(T, DEFAULT_QMAX_CAP) if self.q_max is None else min(self.q_max, T)
        phi = max(T, N) ** -0.5 if self.phi is None else float(self.phi)
        return q_max, phi


def trapezoid_weights(points) -> np.ndarray:
    u = np.asarray(points, dtype=float)
    if u.size < 2:
        raise FactorModelError("quadrature needs at least 2 grid points")
    du = np.diff(u)
    w = np.zeros_like(u)
    w[:-1] += du / 2
    w[1:] += du / 2
    return w


def inner_product_matrix(R, points) -> np.ndarray:
    """Delta[t, t'] = (1/N) sum_i integral R_it(u) R_it'(u) du, trapezoidal in u."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 3:
        raise ValueError(f"expected an (N, T, p) residual array, got shape {R.shape}")
    N, T, p = R.shape
    w = trapezoid_weights(points)
    if w.size != p:
        raise ValueError(f"grid has {w.size} points but curves have {p}")
    if not np.all(np.isfinite(R)):
        raise FactorModelError("residual curves contain non-finite values")
    delta = np.einsum("itj,isj,j->ts", R, R, w, optimize=True) / N
    upper = np.triu(delta)
    return upper + np.triu(delta, 1).T


def select_q(eigs, cfg: FactorSelectConfig = FactorSelectConfig(), N: int | None = None,
             T: int | None = None) -> int:
    """argmin over l in 1..q_max of nu_l + l * phi, minus one, clamped to >= 1."""
    if cfg.q_override is not None:
        return int(cfg.q_override)
    eigs = np.asarray(eigs, dtype=float)
    if cfg.q_max is None or cfg.phi is None:
        if N is None or T is None:
            raise ValueError("N and T are needed to resolve default q_max/phi")
        q_max, phi = cfg.resolve(N, T)
    else:
        q_max, phi = cfg.q_max, cfg.phi
    if eigs.size < q_max:
        raise ValueError(f"need at least q_max={q_max} eigenvalues, got {eigs.size}")
    ell = np.arange(1, q_max + 1)
    obj = eigs[:q_max] + ell * phi
    best = int(np.argmin(obj)) + 1  # argmin returns the first minimum: ties go to the smaller l
    q = best - 1
    if q < 1:
        log.warning("factor-count criterion selected 0 factors; using 1")
        q = 1
    return q


def _fix_signs(V: np.ndarray) -> np.ndarray:
    if V.size == 0:
        return V
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


@dataclass(frozen=True)
class FactorFit:
    group: object
    q: int
    scores: np.ndarray       # (T, q)
    loadings: np.ndarray     # (N, q, p)
    eigenvalues: np.ndarray  # leading q_max eigenvalues of Delta / T
    delta: np.ndarray        # (T, T)

    def reconstruct(self, scores_t) -> np.ndarray:
        """Curves sum_k loading_ik(u) * scores_k for all units, shape (N, p)."""
        s = np.asarray(scores_t, dtype=float).ravel()
        if s.size != self.q:
            raise ValueError(f"expected {self.q} scores, got {s.size}")
        return np.einsum("ikp,k->ip", self.loadings, s)

    def fitted(self) -> np.ndarray:
        """In-sample reconstruction, shape (N, T, p)."""
        return np.einsum("ikp,tk->itp", self.loadings, self.scores)


def fit_factors(R, points, cfg: FactorSelectConfig = FactorSelectConfig(), group=None) -> FactorFit:
    R = np.asarray(R, dtype=float)
    N, T, p = R.shape
    if T < 2:
        raise FactorModelError(f"factor model needs T >= 2, got {T}")
    delta = inner_product_matrix(R, points)
    try:
        evals, evecs = np.linalg.eigh(delta)
    except np.linalg.LinAlgError as exc:
        raise FactorModelError(f"eigendecomposition failed for group {group!r}: {exc}") from exc
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    q_max, phi = cfg.resolve(N, T)
    eig_scaled = evals / T
    q = select_q(eig_scaled, FactorSelectConfig(q_max, phi, cfg.q_override))
    if q > T:
        raise ValueError(f"q={q} exceeds T={T}")
    scores = _fix_signs(evecs[:, :q]) * np.sqrt(T)
    loadings = np.einsum("itp,tk->ikp", R, scores) / T
    return FactorFit(group, q, scores, loadings, eig_scaled[:q_max].copy(), delta)
