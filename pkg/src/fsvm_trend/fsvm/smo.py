"""Pairwise coordinate ascent (SMO) for the box-weighted soft-margin dual.

Maximise ``W(a) = sum(a) - 1/2 a^T Q a`` with ``Q_ij = y_i y_j K_ij`` subject to
``0 <= a_i <= upper_i`` and ``y^T a = 0``.

Internally the gradient ``G = Q a - 1`` of the equivalent minimisation is kept
up to date. With ``v_i = -y_i G_i`` the optimality condition reads
``max_{I_up} v <= min_{I_low} v`` and any ``b`` between the two sides makes
every training point KKT-feasible, so the gap between them bounds the KKT
residual measured in margin units.

The loop is compiled with numba. Kernel rows come from a dense Gram cache
when ``n <= cache_limit`` and are recomputed from the feature matrix otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

DENSE_CACHE_LIMIT = 4096
ETA_MIN = 1e-12
SNAP = 1e-12

LINEAR, RBF = 0, 1

# status codes from the compiled loop
CONVERGED, MAX_ITER, STALLED = 0, 1, 2


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float
    objective: float
    converged: bool
    skipped_pairs: int = 0
    trace: list[float] = field(default_factory=list)


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ya = alpha * y
    return float(alpha.sum() - 0.5 * ya @ K @ ya)


@nb.njit(cache=True)
def _kernel_row(X, i, kind, gamma, out):
    n, d = X.shape
    for k in range(n):
        acc = 0.0
        if kind == LINEAR:
            for c in range(d):
                acc += X[i, c] * X[k, c]
            out[k] = acc
        else:
            for c in range(d):
                t = X[i, c] - X[k, c]
                acc += t * t
            out[k] = np.exp(-gamma * acc)


@nb.njit(cache=True)
def _row(K, X, i, kind, gamma, buf):
    if K.shape[0] > 0:
        return K[i]
    _kernel_row(X, i, kind, gamma, buf)
    return buf


@nb.njit(cache=True)
def _snap(a, U):
    if a <= SNAP * U:
        return 0.0
    if a >= U * (1.0 - SNAP):
        return U
    return a


@nb.njit(cache=True)
def _pair_step(i, j, Ki, diag, y, alpha, upper, v):
    """Closed-form update of ``(alpha_i, alpha_j)``; ok=False when the pair cannot move."""
    eta = diag[i] + diag[j] - 2.0 * Ki[j]
    if eta <= ETA_MIN:
        return False, 0.0, 0.0
    yi, yj = y[i], y[j]
    ai, aj = alpha[i], alpha[j]
    Ui, Uj = upper[i], upper[j]
    # i_at_L / i_at_H: which bound of alpha_i the clip limit L / H corresponds to
    if yi != yj:
        L, H = max(0.0, aj - ai), min(Uj, Ui + aj - ai)
        i_at_L, i_at_H = 0.0, Ui
    else:
        L, H = max(0.0, ai + aj - Ui), min(Uj, ai + aj)
        i_at_L, i_at_H = Ui, 0.0
    if H - L < 0.0:
        return False, 0.0, 0.0
    # E_i - E_j = v_j - v_i
    aj_new = aj + yj * (v[j] - v[i]) / eta
    ai_bound = -1.0
    if aj_new <= L:
        aj_new = L
        if L > 0.0:
            ai_bound = i_at_L
    elif aj_new >= H:
        aj_new = H
        if H < Uj:
            ai_bound = i_at_H
    if ai_bound >= 0.0:
        # the clip is alpha_i's bound: place it there exactly, not up to rounding
        ai_new = ai_bound
    else:
        ai_new = _snap(ai + yi * yj * (aj - aj_new), Ui)
    aj_new = _snap(aj_new, Uj)
    if aj_new == aj:
        # a zero step still counts if it moves a variable onto a bound
        changed = ((ai_new == 0.0 or ai_new == Ui) and not (ai == 0.0 or ai == Ui)) or \
                  ((aj_new == 0.0 or aj_new == Uj) and not (aj == 0.0 or aj == Uj))
        if not changed:
            return False, 0.0, 0.0
    return True, ai_new, aj_new


@nb.njit(cache=True)
def _smo_loop(K, X, kind, gamma, diag, y, upper, tol, max_iter, seed, record, trace):
    n = y.shape[0]
    np.random.seed(seed)
    alpha = np.zeros(n)
    G = -np.ones(n)
    v = np.ones(n) * 0.0
    buf_i = np.empty(n)
    buf_j = np.empty(n)
    it = 0
    skipped = 0
    status = MAX_ITER
    gap = np.inf
    n_trace = 0
    if record:
        trace[0] = 0.0
        n_trace = 1
    while True:
        # selection: i = top violator on the increasing side
        i = -1
        vmax = -np.inf
        vmin = np.inf
        for k in range(n):
            v[k] = -y[k] * G[k]
            if (y[k] > 0 and alpha[k] < upper[k]) or (y[k] < 0 and alpha[k] > 0):
                if v[k] > vmax:
                    vmax = v[k]
                    i = k
            if (y[k] > 0 and alpha[k] > 0) or (y[k] < 0 and alpha[k] < upper[k]):
                if v[k] < vmin:
                    vmin = v[k]
        if i < 0 or vmin == np.inf:
            gap = 0.0
            status = CONVERGED
            break
        gap = vmax - vmin
        if gap <= tol:
            status = CONVERGED
            break
        if it >= max_iter:
            status = MAX_ITER
            break
        it += 1

        Ki = _row(K, X, i, kind, gamma, buf_i)
        # partner: largest second-order gain (v_i - v_j)^2 / eta_ij among violators
        j = -1
        best = -np.inf
        for k in range(n):
            if (y[k] > 0 and alpha[k] > 0) or (y[k] < 0 and alpha[k] < upper[k]):
                dv = vmax - v[k]
                if dv > 0:
                    eta = diag[i] + diag[k] - 2.0 * Ki[k]
                    if eta < ETA_MIN:
                        eta = ETA_MIN
                    g = dv * dv / eta
                    if g > best:
                        best = g
                        j = k
        ok, a_i, a_j = _pair_step(i, j, Ki, diag, y, alpha, upper, v)
        if not ok:
            skipped += 1
            cands = np.empty(n, dtype=np.int64)
            m = 0
            for k in range(n):
                if k != j and v[k] < vmax and (
                        (y[k] > 0 and alpha[k] > 0) or (y[k] < 0 and alpha[k] < upper[k])):
                    cands[m] = k
                    m += 1
            order = np.random.permutation(m)
            for q in range(m):
                jj = cands[order[q]]
                ok, a_i, a_j = _pair_step(i, jj, Ki, diag, y, alpha, upper, v)
                if ok:
                    j = jj
                    break
                skipped += 1
        if not ok:
            status = STALLED
            break
        d_i = a_i - alpha[i]
        d_j = a_j - alpha[j]
        Kj = _row(K, X, j, kind, gamma, buf_j)
        for k in range(n):
            G[k] += y[k] * (y[i] * d_i * Ki[k] + y[j] * d_j * Kj[k])
        alpha[i] = a_i
        alpha[j] = a_j
        if record and n_trace < trace.shape[0]:
            w = 0.0
            for k in range(n):
                w += 0.5 * alpha[k] - 0.5 * alpha[k] * G[k]
            trace[n_trace] = w
            n_trace += 1

    for k in range(n):
        v[k] = -y[k] * G[k]
    return alpha, G, v, it, gap, status, skipped, n_trace


def _bias(v, alpha, upper, y) -> float:
    free = (alpha > 0) & (alpha < upper)
    if free.any():
        return float(v[free].mean())
    pos = y > 0
    up = (pos & (alpha < upper)) | (~pos & (alpha > 0))
    low = (pos & (alpha > 0)) | (~pos & (alpha < upper))
    lo = v[up].max() if up.any() else None
    hi = v[low].min() if low.any() else None
    if lo is None and hi is None:
        return 0.0
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def solve(X: np.ndarray, y: np.ndarray, upper: np.ndarray, kind: str = "linear",
          gamma: float = 1.0, tol: float = 1e-3, max_iter: int = 100_000, seed: int = 0,
          record_trace: bool = False, cache_limit: int = DENSE_CACHE_LIMIT) -> SmoResult:
    """Run SMO from ``a = 0`` on feature rows ``X``.

    Working pair: ``i`` is the largest violator on the increasing side, ``j``
    the violating partner with the largest guaranteed objective gain
    ``(E_i - E_j)^2 / eta``. A pair with non-positive curvature is skipped and
    the other violating partners are tried in a seeded random order.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    n = len(y)
    code = LINEAR if kind == "linear" else RBF
    if n <= cache_limit:
        from .kernels import KernelSpec, kernel_matrix

        K = np.ascontiguousarray(kernel_matrix(KernelSpec(kind, gamma if code == RBF else 1.0), X, X))
        diag = np.diag(K).copy()
    else:
        K = np.zeros((0, 0))
        diag = np.ones(n) if code == RBF else np.einsum("ij,ij->i", X, X)
    trace_buf = np.zeros(max_iter + 1 if record_trace else 0)
    alpha, G, v, it, gap, status, skipped, n_trace = _smo_loop(
        K, X, code, float(gamma), diag, y, upper, float(tol), int(max_iter),
        int(seed) % (2**32), record_trace, trace_buf)
    objective = float(0.5 * alpha.sum() - 0.5 * alpha @ G)
    return SmoResult(alpha=alpha, bias=_bias(v, alpha, upper, y), iterations=int(it),
                     gap=max(float(gap), 0.0), objective=objective,
                     converged=status == CONVERGED, skipped_pairs=int(skipped),
                     trace=trace_buf[:n_trace].tolist())
