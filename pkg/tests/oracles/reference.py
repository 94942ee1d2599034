"""Independent reference computations used to produce and check frozen test
values.  Nothing here imports the package under test."""

from __future__ import annotations

import itertools
import math

import cvxpy as cp
import numpy as np


def tiny_instance(seed: int, n: int = 24, p: int = 2, q: int = 2, D: int = 4):
    """Explicit random-Fourier embeddings for a small two-class problem.

    Returns (blocks[l][m] of shape n x 2D, labels, sigmas[l][m], omegas[l][m], X[l]).
    """
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    dims = [int(d) for d in rng.integers(1, 4, size=p)]
    X = [rng.standard_normal((n, d)) + 0.8 * y[:, None] * (l == 0) for l, d in enumerate(dims)]
    blocks, sigmas, omegas = [], [], []
    for l, d in enumerate(dims):
        row, srow, orow = [], [], []
        for m in range(q):
            sigma = np.sqrt(d) * 2.0 ** (m - 1)
            om = rng.standard_normal((D, d)) / sigma
            z = X[l] @ om.T
            row.append(np.hstack([np.cos(z), np.sin(z)]) / np.sqrt(D))
            srow.append(sigma)
            orow.append(om)
        blocks.append(row)
        sigmas.append(srow)
        omegas.append(orow)
    return blocks, y, sigmas, omegas, X


def joint_mkl(blocks, y, C: float, reg: str) -> float:
    """Optimal value of the joint convex problem over (w, beta, b)."""
    p, q = len(blocks), len(blocks[0])
    n = len(y)
    beta = cp.Variable((p, q), nonneg=True)
    ws = [[cp.Variable(blocks[l][m].shape[1]) for m in range(q)] for l in range(p)]
    b = cp.Variable()
    f = sum(blocks[l][m] @ ws[l][m] for l in range(p) for m in range(q)) + b
    reg_term = sum(cp.quad_over_lin(ws[l][m], beta[l, m]) for l in range(p) for m in range(q))
    obj = 0.5 * reg_term + C * cp.sum(cp.pos(1 - cp.multiply(y, f)))
    if reg == "L1":
        cons = [cp.sum(beta) <= 1]
    elif reg == "L2":
        cons = [cp.norm(cp.vec(beta, order="C"), 2) <= 1]
    else:
        cons = [sum(cp.norm(beta[l, :], 2) for l in range(p)) <= 1]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == cp.OPTIMAL, prob.status
    assert n == len(y)
    # the solver's own optimum; re-evaluating the expression at a beta that sits
    # exactly on zero gives 0/0-style infinities
    return float(prob.solution.opt_val)


def primal_svm(Phi, y, C: float):
    """min 1/2 |w|^2 + C sum hinge, intercept free; returns (objective, w, b)."""
    w = cp.Variable(Phi.shape[1])
    b = cp.Variable()
    obj = 0.5 * cp.sum_squares(w) + C * cp.sum(cp.pos(1 - cp.multiply(y, Phi @ w + b)))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == cp.OPTIMAL, prob.status
    return float(prob.value), np.asarray(w.value), float(b.value)


def _inner_min(a, kind: str, step: float) -> float:
    """min sum a^2/beta over beta >= 0 with |beta|_kind = 1, for 1 or 2 coordinates,
    on a grid of the first coordinate (0/0 counts as 0, a^2/0 as infinity)."""
    a = np.asarray(a, dtype=np.float64)
    if len(a) == 1:
        return float(a[0] ** 2)
    s = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    other = 1.0 - s if kind == "L1" else np.sqrt(np.clip(1.0 - s * s, 0.0, None))
    return float(np.min(_terms(a[0], s) + _terms(a[1], other)))


def _terms(a, beta):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(beta > 0, a * a / np.where(beta > 0, beta, 1.0), np.inf)
    return np.where(a == 0, 0.0, t)


def _outer_min(h, kind: str, step: float) -> float:
    """min sum h_j / t_j over t >= 0 with sum t = 1 (L1) or sum t^2 = 1 (L2)."""
    h = np.asarray(h, dtype=np.float64)
    k = len(h)
    if k == 1:
        return float(h[0])
    ticks = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    heads = np.meshgrid(*([ticks] * (k - 1)), indexing="ij")
    heads = [g.ravel() for g in heads]
    if kind == "L1":
        last = 1.0 - sum(heads)
    else:
        last = np.sqrt(np.clip(1.0 - sum(g * g for g in heads), 0.0, None))
        last[1.0 - sum(g * g for g in heads) < 0] = -1.0
    ok = last >= 0
    total = _terms(np.sqrt(h[-1]), np.where(ok, last, 0.0))
    for hj, g in zip(h[:-1], heads):
        total = total + _terms(np.sqrt(hj), g)
    return float(np.min(np.where(ok, total, np.inf)))


def beta_grid_objective(a, reg: str, groups, step: float = 1e-3) -> float:
    """Grid minimum of sum a^2/beta over the feasible set of ``reg``.

    The objective is homogeneous of degree -1 in the scale of each block, so
    the problem splits exactly into a per-block search on the unit sphere
    (L1 or L2 norm, 1-D grid for blocks of at most two coordinates) and a
    search over how the budget is shared between blocks (grid with the same
    step).  ``groups`` lists the coordinate indices of each block; for L21
    these must be the regularizer's groups, for L1 / L2 any partition works.
    """
    a = np.asarray(a, dtype=np.float64)
    if reg == "L1":
        inner, outer = "L1", "L1"
    elif reg == "L2":
        inner, outer = "L2", "L2"
    else:
        inner, outer = "L2", "L1"
    h = [_inner_min(a[list(g)], inner, step) for g in groups]
    return _outer_min(h, outer, step)


def brute_auc(labels, scores) -> float:
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == -1]
    total = 0.0
    for sp in pos:
        for sn in neg:
            total += 1.0 if sp > sn else 0.5 if sp == sn else 0.0
    return total / (len(pos) * len(neg))


def brute_mcc(labels, preds) -> float:
    tp = sum(1 for l, p in zip(labels, preds) if l == 1 and p == 1)
    tn = sum(1 for l, p in zip(labels, preds) if l == -1 and p == -1)
    fp = sum(1 for l, p in zip(labels, preds) if l == -1 and p == 1)
    fn = sum(1 for l, p in zip(labels, preds) if l == 1 and p == -1)
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return 0.0 if den == 0 else (tp * tn - fp * fn) / math.sqrt(den)


def simplex_points(p: int, units: int) -> list:
    return [c for c in itertools.product(range(units + 1), repeat=p) if sum(c) == units]
