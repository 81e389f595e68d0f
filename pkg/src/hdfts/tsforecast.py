"""Univariate forecasting engines for factor scores and residual quantiles.

* ``fit_ets``: additive non-seasonal exponential smoothing (SES, Holt, damped
  Holt) chosen by AICc.
* ``fit_ar``: AR(p) with intercept by conditional least squares, order by AIC.
* ``fit_quantile_ar``: linear quantile autoregression solved by an MM
  (majorise-minimise) iteratively reweighted least-squares scheme.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

ETS_BOUNDS = (1e-4, 1 - 1e-4)
DAMPING_BOUNDS = (0.8, 0.98)
DIFFERENCE_THRESHOLD = 0.98


def _loss_floor(y: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(y))) if y.size else 0.0, 1e-300)
    return max((1e-10 * scale) ** 2, 1e-300)


# --- exponential smoothing ---------------------------------------------------

@dataclass(frozen=True)
class EtsModel:
    variant: str                 # "SES", "Holt" or "DampedHolt"
    alpha: float
    beta: float | None
    phi: float | None
    level: float
    trend: float | None
    aicc: float
    sse: float

    def forecast(self, h: int) -> np.ndarray:
        steps = np.arange(1, h + 1)
        if self.variant == "SES":
            return np.full(h, self.level)
        if self.variant == "Holt":
            return self.level + steps * self.trend
        damp = np.cumsum(self.phi ** steps)
        return self.level + damp * self.trend


_N_PARAMS = {"SES": 1, "Holt": 2, "DampedHolt": 3}
_N_STATES = {"SES": 1, "Holt": 2, "DampedHolt": 2}


def _ets_run(y, alpha, beta, phi, trend: bool):
    """Run the error-correction recursions for K parameter sets at once.

    The one-step errors and final states are affine in the initial state, so
    the recursion is run for the data (zero initial state) and for each unit
    initial state (zero data).  Returns errors (S, K, n) and final states
    (S, K, 2) with S = 2 or 3 channels.
    """
    n = y.size
    K = alpha.size
    S = 3 if trend else 2
    level = np.zeros((S, K))
    slope = np.zeros((S, K))
    level[1] = 1.0
    if trend:
        slope[2] = 1.0
    data = np.zeros((S, 1))
    errors = np.empty((S, K, n))
    for t in range(n):
        data[0, 0] = y[t]
        pred = level + phi * slope if trend else level
        e = data - pred
        errors[:, :, t] = e
        if trend:
            level = pred + alpha * e
            slope = phi * slope + alpha * beta * e
        else:
            level = level + alpha * e
    return errors, np.stack([level, slope], axis=-1)


def _concentrated(y, alpha, beta, phi, trend: bool):
    """SSE with the initial state chosen by least squares, plus final states."""
    errors, final = _ets_run(y, alpha, beta, phi, trend)
    e0 = errors[0]
    A = np.moveaxis(errors[1:], 0, -1)                # (K, n, s)
    AtA = np.einsum("kns,knr->ksr", A, A)
    Ate = np.einsum("kns,kn->ks", A, e0)
    s = AtA.shape[-1]
    ridge = 1e-12 * (np.trace(AtA, axis1=1, axis2=2)[:, None, None] + 1e-300) * np.eye(s)
    x0 = -np.linalg.solve(AtA + ridge, Ate[..., None])[..., 0]
    resid = e0 + np.einsum("kns,ks->kn", A, x0)
    sse = np.sum(resid ** 2, axis=1)
    state = final[0] + np.einsum("sk,skc->kc", x0.T, final[1:])
    return sse, state


def _ets_variant(y: np.ndarray, variant: str):
    trend = variant != "SES"
    lo, hi = ETS_BOUNDS
    grid_a = np.linspace(0.05, 0.95, 19)
    if variant == "SES":
        combos = [(a, 0.0, 1.0) for a in grid_a]
    elif variant == "Holt":
        combos = list(itertools.product(grid_a[::2], np.linspace(0.05, 0.95, 10), [1.0]))
    else:
        combos = list(itertools.product(grid_a[::2], np.linspace(0.05, 0.95, 10),
                                        np.linspace(*DAMPING_BOUNDS, 4)))
    P = np.array(combos)
    sse, _ = _concentrated(y, P[:, 0], P[:, 1], P[:, 2], trend)
    start = P[int(np.argmin(sse))]

    free = {"SES": [0], "Holt": [0, 1], "DampedHolt": [0, 1, 2]}[variant]
    bounds = [ETS_BOUNDS, ETS_BOUNDS, DAMPING_BOUNDS]

    def unpack(theta):
        full = start.copy()
        full[free] = theta
        return full

    def objective(theta):
        a, b, f = unpack(theta)
        return float(_concentrated(y, np.array([a]), np.array([b]), np.array([f]), trend)[0][0])

    res = minimize(objective, start[free], method="L-BFGS-B", bounds=[bounds[i] for i in free])
    best = unpack(res.x) if res.fun <= objective(start[free]) else start
    best = np.clip(best, [lo, lo, DAMPING_BOUNDS[0]], [hi, hi, 1.0])
    a, b, f = best
    sse, state = _concentrated(y, np.array([a]), np.array([b]), np.array([f]), trend)
    return float(a), float(b), float(f), float(sse[0]), state[0]


def fit_ets(series, h: int):
    """Fit SES, Holt and damped Holt, keep the lowest AICc, forecast ``h`` steps."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < 4:
        raise ValueError("fit_ets needs a 1-d series of length >= 4")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    n = y.size
    floor = _loss_floor(y)

    def aicc(sse, k):
        if n - k - 1 <= 0:
            return math.inf
        return n * math.log(max(sse, n * floor) / n) + 2 * k + 2 * k * (k + 1) / (n - k - 1)

    if np.ptp(y) == 0:
        model = EtsModel("SES", ETS_BOUNDS[0], None, None, float(y[0]), None, aicc(0.0, 2), 0.0)
        return model, model.forecast(h)

    best = None
    for variant in ("SES", "Holt", "DampedHolt"):
        k = _N_PARAMS[variant] + _N_STATES[variant]
        if n - k - 1 <= 0:
            continue
        a, b, f, sse, state = _ets_variant(y, variant)
        score = aicc(sse, k)
        if variant == "SES":
            m = EtsModel(variant, a, None, None, float(state[0]), None, score, sse)
        else:
            m = EtsModel(variant, a, b, f if variant == "DampedHolt" else None,
                         float(state[0]), float(state[1]), score, sse)
        if best is None or m.aicc < best.aicc - 1e-9:
            best = m
    return best, best.forecast(h)


# --- autoregression ----------------------------------------------------------

@dataclass(frozen=True)
class ArModel:
    order: int
    intercept: float
    coefficients: np.ndarray
    sigma2: float
    aic: float

    def forecast(self, history, h: int) -> np.ndarray:
        buf = list(np.asarray(history, dtype=float))
        out = np.empty(h)
        for step in range(h):
            val = self.intercept
            for k, c in enumerate(self.coefficients, start=1):
                val += c * buf[-k]
            out[step] = val
            buf.append(val)
        return out


def _lag_matrix(y: np.ndarray, p: int, start: int) -> np.ndarray:
    n = y.size - start
    cols = [np.ones(n)] + [y[start - k:y.size - k] for k in range(1, p + 1)]
    return np.column_stack(cols)


def _stationary(coefs) -> bool:
    """All roots of the AR characteristic polynomial inside the unit circle."""
    roots = np.roots(np.concatenate([[1.0], -np.asarray(coefs, dtype=float)]))
    return bool(np.all(np.abs(roots) < 1.0))


def _order_cap(n: int, p_max: int) -> int:
    # keep >= 2 residual degrees of freedom for the largest candidate
    return max(0, min(p_max, (n - 3) // 2))


def fit_ar(series, p_max: int, h: int):
    """AR(p) with intercept for p = 0..p_max on a common sample; AIC selects p."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < p_max + 2:
        raise ValueError(f"fit_ar needs length >= p_max + 2 = {p_max + 2}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    target = y[p_max:]
    n = target.size
    floor = _loss_floor(y)
    best = None
    for p in range(p_max + 1):
        X = _lag_matrix(y, p, p_max)
        beta, _, rank, sv = np.linalg.lstsq(X, target, rcond=None)
        if rank < p + 1 or (p > 0 and sv[-1] <= 1e-10 * sv[0]):
            continue
        if p > 0 and not _stationary(beta[1:]):
            continue
        rss = float(np.sum((target - X @ beta) ** 2))
        aic = n * math.log(max(rss, n * floor) / n) + 2 * (p + 1)
        if best is None or aic < best.aic - 1e-9:
            best = ArModel(p, float(beta[0]), beta[1:].copy(), rss / n, aic)
    return best, best.forecast(y, h)


def ar1_coefficient(series) -> float:
    y = np.asarray(series, dtype=float)
    X = _lag_matrix(y, 1, 1)
    beta, *_ = np.linalg.lstsq(X, y[1:], rcond=None)
    return float(beta[1])


def forecast_series(series, h: int, engine: str = "ets", p_max: int = 3) -> np.ndarray:
    """Forecast one score series ``h`` steps ahead with the chosen engine.

    Series too short for the engine fall back to their mean.  The ``"arima"``
    engine fits AR(p) with intercept, differencing once first when the raw
    lag-one coefficient exceeds 0.98.
    """
    y = np.asarray(series, dtype=float)
    if engine == "ets":
        if y.size < 4:
            return np.full(h, y.mean())
        return fit_ets(y, h)[1]
    if engine != "arima":
        raise ValueError(f"unknown engine {engine!r}; use 'ets' or 'arima'")
    if y.size < 3 or np.ptp(y) == 0:
        return np.full(h, y.mean())
    if ar1_coefficient(y) > DIFFERENCE_THRESHOLD and y.size >= 4:
        d = np.diff(y)
        pm = _order_cap(d.size, p_max)
        steps = fit_ar(d, pm, h)[1]
        return y[-1] + np.cumsum(steps)
    pm = _order_cap(y.size, p_max)
    return fit_ar(y, pm, h)[1]


# --- quantile autoregression -------------------------------------------------

@dataclass(frozen=True)
class QuantileAr:
    tau: float
    order: int
    intercept: float
    coefficients: np.ndarray
    pinball_loss: float
    converged: bool = True

    def predict(self, recent) -> float:
        return predict_quantile(self, recent)


def pinball_loss(resid, tau: float, axis=-1):
    r = np.asarray(resid, dtype=float)
    return np.mean(np.where(r >= 0, tau * r, (tau - 1) * r), axis=axis)


def _quantile_fit_batch(X: np.ndarray, y: np.ndarray, tau: float, max_iter: int = 200,
                        eps_floor: float = 1e-6):
    """Minimise the mean check loss for K independent regressions.

    X is (K, n, d), y is (K, n).  The check loss is written as
    |r|/2 + (tau - 1/2) r and |r| is majorised by a quadratic around the
    current residual, smoothed by eps which shrinks geometrically to
    ``eps_floor``.  The result is then compared against the exact fits
    through the d observations nearest the fitted hyperplane.
    """
    K, n, d = X.shape
    eye = np.eye(d)
    Xt = X.transpose(0, 2, 1)
    XtX = Xt @ X
    ridge = 1e-12 * (np.trace(XtX, axis1=1, axis2=2)[:, None, None] + 1e-300) * eye
    beta = np.linalg.solve(XtX + ridge, (Xt @ y[..., None]))[..., 0]
    Xt1 = X.sum(axis=1)
    r = y - (X @ beta[..., None])[..., 0]
    eps = max(eps_floor, 0.1 * float(np.mean(np.abs(r))) if r.size else eps_floor)
    converged = np.zeros(K, bool)
    live = np.arange(K)
    for _ in range(max_iter):
        Xl, Xtl, yl, rl = X[live], Xt[live], y[live], r[live]
        w = 0.5 / np.maximum(np.abs(rl), eps)
        A = (Xtl * w[:, None, :]) @ Xl
        b = (Xtl @ (w * yl)[..., None])[..., 0] + (tau - 0.5) * Xt1[live]
        scale = np.trace(A, axis1=1, axis2=2)[:, None, None]
        new = np.linalg.solve(A + 1e-13 * scale * eye, b[..., None])[..., 0]
        step = np.max(np.abs(new - beta[live]), axis=1)
        beta[live] = new
        r[live] = yl - (Xl @ new[..., None])[..., 0]
        if eps <= eps_floor:
            done = step <= 1e-10 * (1 + np.max(np.abs(new), axis=1))
            converged[live[done]] = True
            live = live[~done]
            if live.size == 0:
                break
        eps = max(eps_floor, eps * 0.5)
    loss = pinball_loss(r, tau)

    # exact basic solutions near the MM optimum
    nearest = np.argsort(np.abs(r), axis=1)[:, :min(n, d + 1)]
    for subset in itertools.combinations(range(nearest.shape[1]), d):
        rows = nearest[:, list(subset)]
        Xs = np.take_along_axis(X, rows[..., None], axis=1)
        ys = np.take_along_axis(y, rows, axis=1)
        det_ok = np.abs(np.linalg.det(Xs)) > 1e-12 * (1 + np.abs(Xs).max(axis=(1, 2)) ** d)
        if not det_ok.any():
            continue
        Xs_safe = np.where(det_ok[:, None, None], Xs, eye)
        cand = np.linalg.solve(Xs_safe, ys[..., None])[..., 0]
        cand_loss = pinball_loss(y - (X @ cand[..., None])[..., 0], tau)
        better = det_ok & (cand_loss < loss - 1e-15)
        beta = np.where(better[:, None], cand, beta)
        loss = np.where(better, cand_loss, loss)
    return beta, loss, converged


def quantile_regression(X, y, tau: float = 0.5, max_iter: int = 200):
    """Linear quantile regression for one design; returns (beta, mean check loss, converged)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) and y (n,)")
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    beta, loss, ok = _quantile_fit_batch(X[None], y[None], tau, max_iter=max_iter)
    return beta[0], float(loss[0]), bool(ok[0])


def fit_quantile_ar_batch(Y, tau: float = 0.95, p_max: int = 1, max_iter: int = 200):
    """Fit quantile autoregressions to each row of ``Y`` (K series of equal length).

    Returns ``(orders, coefs, losses, converged)`` where ``coefs[k]`` holds the
    intercept followed by ``p_max`` lag coefficients (zero beyond the order).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    K, length = Y.shape
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if length < p_max + 3:
        raise ValueError(f"quantile AR needs length >= p_max + 3 = {p_max + 3}")
    if np.any(Y < 0) or not np.all(np.isfinite(Y)):
        raise ValueError("quantile AR expects finite non-negative series")
    target = Y[:, p_max:]
    n = target.size // K
    floor = np.array([_loss_floor(row) for row in Y])
    best_aic = np.full(K, np.inf)
    orders = np.zeros(K, int)
    coefs = np.zeros((K, p_max + 1))
    losses = np.zeros(K)
    conv = np.ones(K, bool)
    for p in range(p_max + 1):
        lags = [Y[:, p_max - k:length - k] for k in range(1, p + 1)]
        X = np.stack([np.ones_like(target)] + lags, axis=-1)
        beta, loss, ok = _quantile_fit_batch(X, target, tau, max_iter=max_iter)
        aic = n * np.log(np.maximum(loss, floor)) + 2 * (p + 1)
        take = aic < best_aic - 1e-9
        best_aic = np.where(take, aic, best_aic)
        orders = np.where(take, p, orders)
        padded = np.zeros((K, p_max + 1))
        padded[:, :p + 1] = beta
        coefs = np.where(take[:, None], padded, coefs)
        losses = np.where(take, loss, losses)
        conv = np.where(take, ok, conv)
    return orders, coefs, losses, conv


def fit_quantile_ar(series, tau: float = 0.95, p_max: int = 1, max_iter: int = 200) -> QuantileAr:
    orders, coefs, losses, conv = fit_quantile_ar_batch(np.asarray(series, float)[None, :],
                                                        tau, p_max, max_iter)
    p = int(orders[0])
    return QuantileAr(tau, p, float(coefs[0, 0]), coefs[0, 1:p + 1].copy(),
                      float(losses[0]), bool(conv[0]))


def predict_quantile(model: QuantileAr, recent) -> float:
    """intercept + sum_k coef_k * recent[-k], floored at zero.

    ``recent`` is in chronological order (most recent last).
    """
    recent = np.asarray(recent, dtype=float).ravel()
    if recent.size != model.order:
        raise ValueError(f"model has order {model.order} but got {recent.size} recent values")
    val = model.intercept + sum(c * recent[-k] for k, c in enumerate(model.coefficients, start=1))
    return max(float(val), 0.0)


def predict_quantile_batch(orders, coefs, history) -> np.ndarray:
    """Vectorised one-step predictions from ``fit_quantile_ar_batch`` output."""
    history = np.asarray(history, dtype=float)
    p_max = coefs.shape[1] - 1
    pred = coefs[:, 0].copy()
    for k in range(1, p_max + 1):
        active = orders >= k
        pred += np.where(active, coefs[:, k] * history[:, -k], 0.0)
    return np.maximum(pred, 0.0)
