"""Comparison methods: single-representation and concatenated-feature SVMs,
simplex grid search over linear-kernel weights, and SVM-RFE ranking."""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb

import numpy as np

from .dataset import GroupedDataset, kfold_indices
from .exceptions import ConfigurationError, ShapeError
from .mkl import SolverConfig, predict_from_scores, write_npz
from .rff import BandwidthSchedule
from .svm import fit_gram

MAX_GRID_POINTS = 10 ** 6


def single_view(data: GroupedDataset, group: str | None) -> GroupedDataset:
    """One group of ``data``, or every column concatenated when group is None."""
    if group is None:
        return data.flatten("all")
    return data.select_groups([group])


def svm_single(train: GroupedDataset, group: str | None = None,
               schedule: BandwidthSchedule = BandwidthSchedule(), fourier_size: int = 2000,
               C_candidates=(1.0,), seed: int = 0, k: int = 5,
               cfg: SolverConfig = SolverConfig(), cv_seed: int | None = None):
    """Gaussian-RFF SVM on one representation.

    With several bandwidths or C values the pair with the best k-fold accuracy
    is used (``cv_seed`` defaults to ``seed``).  Returns (model, params); the
    model lives on ``single_view(..., group)`` and is an MklModel with one
    kernel (beta = 1).
    """
    from .evaluation import cv_select
    from .methods import SingleKernelSvm

    method = SingleKernelSvm(group, schedule, fourier_size, cfg)
    stack = method.kernel_stack(train, seed)
    params, _ = cv_select(method, stack, np.arange(train.n_samples), train.labels,
                          method.candidates(sorted(C_candidates)), k,
                          seed if cv_seed is None else cv_seed)
    model, _ = method.fit_explicit(train, params, seed)
    return model, params


# ----------------------------------------------------------------------------
# simplex grid search with linear kernels


@dataclass(frozen=True)
class GridSearchResult:
    best_beta: np.ndarray
    inner_cv_accuracy: float
    grid_step: float
    n_points: int


def grid_units(step: float) -> int:
    units = int(round(1.0 / step))
    if units < 1 or abs(units * step - 1.0) > 1e-9:
        raise ConfigurationError(f"grid step {step} does not divide 1 evenly")
    return units


def simplex_grid(p: int, step: float = 0.1, max_points: int = MAX_GRID_POINTS) -> np.ndarray:
    """All nonnegative weight vectors on the step-grid summing to 1, in
    ascending lexicographic order."""
    if p < 1:
        raise ConfigurationError("need at least one group")
    units = grid_units(step)
    count = comb(units + p - 1, p - 1)
    if count > max_points:
        raise ConfigurationError(f"grid has {count} points, above the limit of {max_points}")

    out = np.empty((count, p), dtype=np.int64)
    row = 0

    def fill(prefix, left, slots):
        nonlocal row
        if slots == 1:
            out[row, : len(prefix)] = prefix
            out[row, -1] = left
            row += 1
            return
        for v in range(left + 1):
            fill(prefix + [v], left - v, slots - 1)

    fill([], units, p)
    return out / units


def linear_grams(data: GroupedDataset) -> np.ndarray:
    """(p, 1, n, n) stack of per-group linear kernels."""
    return np.stack([(g.values @ g.values.T)[None] for g in data.groups])


def grid_search_on_stack(stack, train_idx, labels, C: float = 1.0, step: float = 0.1,
                         inner_k: int = 10, seed: int = 0, tol: float = 1e-7) -> GridSearchResult:
    """Grid search over simplex weights of the kernels in ``stack`` (p, 1, n, n)."""
    grid = simplex_grid(stack.shape[0], step)
    train_idx = np.asarray(train_idx)
    y = np.asarray(labels)
    sub = stack[:, 0][:, train_idx[:, None], train_idx[None, :]]
    yt = y[train_idx].astype(np.float64)
    folds = kfold_indices(len(train_idx), inner_k, yt, seed)
    p, n = sub.shape[0], sub.shape[1]
    flat = sub.reshape(p, n * n)
    acc = np.zeros(len(grid))
    for g, beta in enumerate(grid):
        K = (beta @ flat).reshape(n, n)
        for tr, te in folds:
            sol = fit_gram(K[np.ix_(tr, tr)], yt[tr], C, tol)
            scores = K[np.ix_(te, tr)] @ sol.coef + sol.b
            acc[g] += np.mean(predict_from_scores(scores) == yt[te])
    acc /= len(folds)
    best = int(np.argmax(acc))  # first maximum = lexicographically smallest weights
    return GridSearchResult(grid[best], float(acc[best]), step, len(grid))


def grid_search_weights(train: GroupedDataset, C: float = 1.0, step: float = 0.1,
                        inner_k: int = 10, seed: int = 0) -> GridSearchResult:
    """Kernel weights for per-group linear kernels by grid search + inner CV."""
    stack = linear_grams(train)
    return grid_search_on_stack(stack, np.arange(train.n_samples), train.labels, C, step,
                                inner_k, seed)


@dataclass(frozen=True)
class LinearGroupModel:
    """f(x) = sum_l w_l' x^(l) + b, trained on features scaled by sqrt(beta_l)."""

    w: tuple
    b: float
    beta: np.ndarray
    group_names: tuple

    def decision_scores(self, data: GroupedDataset) -> np.ndarray:
        if tuple(data.group_names) != self.group_names:
            raise ConfigurationError("data groups do not match the model")
        return sum(g.values @ w for g, w in zip(data.groups, self.w)) + self.b

    def predict(self, data: GroupedDataset) -> np.ndarray:
        return predict_from_scores(self.decision_scores(data))


def fit_linear_groups(train: GroupedDataset, beta, C: float = 1.0,
                      tol: float = 1e-7) -> LinearGroupModel:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(train.groups),):
        raise ShapeError("one weight per group expected")
    K = sum(b * (g.values @ g.values.T) for b, g in zip(beta, train.groups))
    sol = fit_gram(K, train.labels, C, tol)
    w = tuple(b * (g.values.T @ sol.coef) for b, g in zip(beta, train.groups))
    return LinearGroupModel(w, sol.b, beta, tuple(train.group_names))


# ----------------------------------------------------------------------------
# SVM-RFE


def svm_rfe(X, labels, C: float = 1.0, tol: float = 1e-7) -> list:
    """Feature indices ranked best-first by recursive elimination.

    Each round trains a linear SVM on the surviving columns and drops the one
    with the smallest squared weight (lowest index on ties).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("X must be an n x p matrix")
    remaining = list(range(X.shape[1]))
    eliminated = []
    alpha = None
    while len(remaining) > 1:
        Xr = X[:, remaining]
        sol = fit_gram(Xr @ Xr.T, labels, C, tol, alpha)
        alpha = sol.alpha
        w2 = (Xr.T @ sol.coef) ** 2
        eliminated.append(remaining.pop(int(np.argmin(w2))))
    eliminated.extend(remaining)
    return eliminated[::-1]


def save_linear_model(model: LinearGroupModel, path, extra: dict | None = None):
    meta = {"kind": "linear", "b": model.b, "group_names": list(model.group_names)}
    meta.update(extra or {})
    arrays = {f"w{l}": w for l, w in enumerate(model.w)}
    arrays["beta"] = model.beta
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    write_npz(path, arrays)


def load_linear_model(path) -> LinearGroupModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("kind") != "linear":
            raise ConfigurationError(f"{path} is not a linear group model artifact")
        w = tuple(z[f"w{l}"].copy() for l in range(len(meta["group_names"])))
        return LinearGroupModel(w, float(meta["b"]), z["beta"].copy(),
                                tuple(meta["group_names"]))
