"""Soft-margin SVM with unregularized intercept, solved on a kernel matrix.

The dual is solved by SMO with second-order working-set selection; the
intercept is then set by an exact line search on the hinge sum, and the
solution is certified by its relative duality gap

    (P - D) / P,  P = 1/2 c'Kc + C sum_i max(0, 1 - y_i (Kc + b)_i),
                  D = sum_i alpha_i - 1/2 c'Kc,   c = alpha * y.

Given the same inputs and tolerance the result is bit-for-bit deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import LabelError, NumericError, ParameterError, ShapeError

logger = logging.getLogger(__name__)

_TAU = 1e-12


@numba.njit(cache=True)
def _smo(K, y, C, alpha, G, eps, max_iter):
    n = y.shape[0]
    it = 0
    gmax = 0.0
    gmin = 0.0
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    diff = gmax - v
                    if diff > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = _TAU
                        score = -(diff * diff) / a
                        if score < best:
                            best = score
                            j = t
        if i < 0 or j < 0 or gmax - gmin < eps:
            break
        a = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if a <= 0:
            a = _TAU
        step = (gmax + y[j] * G[j]) / a
        ub_i = C - alpha[i] if y[i] > 0 else alpha[i]
        ub_j = alpha[j] if y[j] > 0 else C - alpha[j]
        clip_i = step >= ub_i
        clip_j = step >= ub_j
        if clip_i or clip_j:
            step = min(ub_i, ub_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        if clip_i and ub_i <= ub_j:
            alpha[i] = C if y[i] > 0 else 0.0
        if clip_j and ub_j <= ub_i:
            alpha[j] = 0.0 if y[j] > 0 else C
        for t in range(n):
            G[t] += step * y[t] * (K[t, i] - K[t, j])
        it += 1
    return it, gmax, gmin


def optimal_intercept(g, y, b0: float = 0.0) -> float:
    """Minimize sum_i max(0, 1 - y_i (g_i + b)) over b.

    The minimizers form an interval; the point of it closest to ``b0`` is
    returned.
    """
    t = y - g
    order = np.argsort(t, kind="stable")
    ts = t[order]
    pos = y[order] > 0
    slope_right = -(pos.sum() - np.cumsum(pos)) + np.cumsum(~pos)
    lo = ts[np.argmax(slope_right >= 0)]
    hi = ts[np.argmax(slope_right > 0)]
    return float(min(max(b0, lo), hi))


def hinge_sum(scores, y) -> float:
    return float(np.maximum(0.0, 1.0 - y * scores).sum())


@dataclass(frozen=True)
class SvmSolution:
    alpha: np.ndarray
    coef: np.ndarray  # alpha * y, so that w = Phi' coef
    b: float
    primal: float
    dual: float
    iterations: int
    certified: bool

    @property
    def gap(self) -> float:
        return (self.primal - self.dual) / max(abs(self.primal), 1e-300)


def _check_labels(y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 1) | (y == -1)):
        raise LabelError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise LabelError("SVM training needs both classes")
    return y


def fit_gram(K, y, C: float, tol: float = 1e-7, alpha0=None, max_iter: int = 10_000_000):
    """Train on a precomputed n x n kernel matrix; returns an SvmSolution."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = _check_labels(y)
    n = y.shape[0]
    if K.shape != (n, n):
        raise ShapeError(f"kernel matrix shape {K.shape} does not match {n} labels")
    if not np.all(np.isfinite(K)):
        raise NumericError("kernel matrix contains non-finite entries")
    if not C > 0:
        raise ParameterError(f"C must be positive, got {C}")
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")

    if alpha0 is None:
        alpha = np.zeros(n)
    else:
        alpha = np.clip(np.array(alpha0, dtype=np.float64), 0.0, C)
        if abs(alpha @ y) > 1e-9 * max(1.0, C * n):
            alpha = np.zeros(n)
    total = 0
    eps = 1e-3
    certified = False
    while True:
        G = y * (K @ (alpha * y)) - 1.0
        it, gmax, gmin = _smo(K, y, float(C), alpha, G, eps, max_iter)
        total += it
        c = alpha * y
        g = K @ c
        reg = 0.5 * float(c @ g)
        mid = 0.5 * (gmax + gmin) if np.isfinite(gmax) and np.isfinite(gmin) else 0.0
        b = optimal_intercept(g, y, mid)
        primal = reg + C * hinge_sum(g + b, y)
        dual = float(alpha.sum()) - reg
        if primal - dual <= tol * max(abs(primal), 1e-300):
            certified = True
            break
        if eps < 1e-14 or total >= max_iter:
            logger.warning("SVM duality gap %.3g above tolerance %.3g",
                           (primal - dual) / max(abs(primal), 1e-300), tol)
            break
        eps *= 0.01
    return SvmSolution(alpha, c, b, primal, dual, total, certified)
