"""Independent reference implementations used only by the tests.

None of these import from the package; they are deliberately slow and
simple so that agreement with the production code is meaningful.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_isotonic(y, w=None):
    """Isotonic least squares by trying every partition into contiguous blocks.

    The optimum is piecewise constant on some contiguous partition with
    non-decreasing block means, so the best feasible partition is the answer.
    """
    y = [float(v) for v in y]
    n = len(y)
    w = [1.0] * n if w is None else [float(v) for v in w]
    best, best_sse = None, math.inf
    for cuts in itertools.product((0, 1), repeat=n - 1):
        blocks, start = [], 0
        for k, c in enumerate(cuts, start=1):
            if c:
                blocks.append((start, k))
                start = k
        blocks.append((start, n))
        means = [sum(w[i] * y[i] for i in range(a, b)) / sum(w[a:b]) for a, b in blocks]
        if any(m2 < m1 - 1e-15 for m1, m2 in zip(means, means[1:])):
            continue
        fit = [m for (a, b), m in zip(blocks, means) for _ in range(a, b)]
        sse = sum(wi * (yi - fi) ** 2 for wi, yi, fi in zip(w, y, fit))
        if sse < best_sse:
            best, best_sse = fit, sse
    return np.array(best)


def jacobi_eigenvalues(A, tol=1e-14, sweeps=100):
    """Cyclic Jacobi rotations on a small symmetric matrix (pure Python lists)."""
    a = [list(map(float, row)) for row in A]
    n = len(a)
    for _ in range(sweeps):
        off = sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j)
        if off < tol ** 2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p][q]) < 1e-300:
                    continue
                theta = (a[q][q] - a[p][p]) / (2 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
    return sorted((a[i][i] for i in range(n)), reverse=True)


def check_loss(r, tau):
    r = np.asarray(r, dtype=float)
    return np.mean(np.maximum(tau * r, (tau - 1) * r), axis=-1)


def grid_pinball(X, y, tau, half_width=None, steps=801):
    """Smallest mean check loss over a dense grid of coefficient vectors (d <= 2)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    span = half_width if half_width is not None else 2 * (np.abs(y).max() + 1)
    axes = [np.linspace(-span, span, steps) for _ in range(d)]
    if d == 1:
        B = axes[0][:, None]
    elif d == 2:
        b0, b1 = np.meshgrid(*axes, indexing="ij")
        B = np.column_stack([b0.ravel(), b1.ravel()])
    else:
        raise ValueError("grid oracle supports d <= 2")
    best = math.inf
    for chunk in np.array_split(B, max(1, len(B) // 20000)):
        resid = y[None, :] - chunk @ X.T
        best = min(best, float(check_loss(resid, tau).min()))
    return best


def brute_coverage_gap(residuals, gamma, target):
    """Minimal |coverage - target| over every scalar xi, by enumeration.

    Coverage of xi counts points with |res| <= xi * gamma; it only changes
    at the ratio values, so those (plus 0) are the complete candidate set.
    """
    res = np.abs(np.asarray(residuals, dtype=float)).ravel()
    gam = np.broadcast_to(np.asarray(gamma, dtype=float), np.asarray(residuals).shape).ravel()
    ratios = []
    for r, g in zip(res, gam):
        if g > 0:
            ratios.append(r / g)
        else:
            ratios.append(0.0 if r == 0 else math.inf)
    best = math.inf
    for xi in [0.0] + [x for x in ratios if math.isfinite(x)]:
        covered = sum(1 for x in ratios if x <= xi)
        best = min(best, abs(covered / len(ratios) - target))
    return best
