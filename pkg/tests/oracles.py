"""Independent reference computations used only by the tests.

Nothing here imports the solver or the indicator batch code.
"""

from __future__ import annotations

import numpy as np


def project_box_hyperplane(z, y, upper):
    """Euclidean projection of each row of ``z`` onto {0 <= a <= upper, y.a = 0}.

    Batched over the leading axis. ``a(lam) = clip(z - lam*y, 0, upper)`` and
    ``y.a(lam)`` is piecewise linear and non-increasing in ``lam``; its root is
    located exactly from the sorted breakpoints.
    """
    bp = np.concatenate([z / y, (z - upper) / y], axis=1)  # (B, 2n)
    bp.sort(axis=1)
    a_bp = np.clip(z[:, None, :] - bp[:, :, None] * y[:, None, :], 0.0, upper[:, None, :])
    g = (a_bp * y[:, None, :]).sum(axis=2)  # non-increasing along axis 1
    B, m = g.shape
    rows = np.arange(B)
    k = (g > 0).sum(axis=1)  # first breakpoint index with g <= 0
    k0 = np.clip(k - 1, 0, m - 1)
    k1 = np.clip(k, 0, m - 1)
    g0, g1 = g[rows, k0], g[rows, k1]
    l0, l1 = bp[rows, k0], bp[rows, k1]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(g0 != g1, g0 / (g0 - g1), 0.0)
    lam = np.where(k == 0, bp[:, 0], np.where(k >= m, bp[:, -1], l0 + frac * (l1 - l0)))
    return np.clip(z - lam[:, None] * y, 0.0, upper)


def qp_dual_oracle(Q, y, upper, iters=20000):
    """Maximise sum(a) - a^T Q a / 2 over the box/hyperplane by restarted FISTA.

    ``Q`` (B, n, n), ``y`` and ``upper`` (B, n). Returns (alpha, objective).
    """
    Q = np.asarray(Q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    L = np.linalg.eigvalsh(Q)[:, -1].clip(min=1e-12)
    step = (1.0 / L)[:, None]
    a = np.zeros_like(y)
    z = a.copy()
    t = np.ones(len(y))

    def obj(x):
        return x.sum(axis=1) - 0.5 * np.einsum("bi,bij,bj->b", x, Q, x)

    best = obj(a)
    stall = 0
    for _ in range(iters):
        grad = 1.0 - np.einsum("bij,bj->bi", Q, z)
        a_new = project_box_hyperplane(z + step * grad, y, upper)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = ((t - 1.0) / t_new)[:, None]
        z = a_new + mom * (a_new - a)
        # restart momentum where the objective went down
        bad = obj(a_new) < obj(a)
        if bad.any():
            z[bad] = a_new[bad]
            t_new[bad] = 1.0
        a, t = a_new, t_new
        cur = obj(a)
        improved = (cur - best > 1e-15 * np.abs(cur)).any()
        best = np.maximum(best, cur)
        stall = 0 if improved else stall + 1
        if stall >= 200:
            break
    return a, obj(a)


def sma_direct(closes, window, t):
    return sum(closes[t - window + 1:t + 1]) / window


def impetus_direct(closes, n, t):
    return closes[t] - closes[t - n]


def addition_delivery_direct(high, low, close):
    return (high - close) / (high - low) * 100.0
