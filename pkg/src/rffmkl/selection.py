"""Per-dimension feature ranking from L21 kernel weights, top-k accuracy
curves and redundancy among selected features.

Every feature column becomes its own dim-1 group with a few Gaussian kernels;
a feature's weight is the sum of its kernels' beta, averaged over random
training splits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import GroupedDataset, random_split_indices
from .evaluation import trial_seeds
from .exceptions import ConfigurationError, TrialError
from .mkl import Regularizer, SolverConfig, bank_for, predict_from_scores, solve_gram
from .rff import BandwidthSchedule, gaussian_gram
from .svm import fit_gram

FEATURE_SIGMAS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class FeatureRanking:
    """Features sorted by non-increasing mean weight (ties by column index).

    ``trial_weights`` holds the per-trial, per-feature beta sums in column
    order, shape (n_trials, p_features).
    """

    indices: np.ndarray
    weights: np.ndarray
    names: tuple
    trial_weights: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def top(self, k: int) -> np.ndarray:
        return self.indices[:k]

    def rows(self) -> list:
        return [(r + 1, self.names[i], int(i), float(w))
                for r, (i, w) in enumerate(zip(self.indices, self.weights))]


def _flat(data: GroupedDataset) -> GroupedDataset:
    return data if len(data.groups) == 1 else data.flatten("all")


def ranking_from_weights(mean_weights, names, trial_weights=None) -> FeatureRanking:
    w = np.asarray(mean_weights, dtype=np.float64)
    order = np.lexsort((np.arange(len(w)), -w))
    tw = np.atleast_2d(w) if trial_weights is None else np.asarray(trial_weights)
    return FeatureRanking(order, w[order], tuple(names), tw)


def rank_by_weights(data: GroupedDataset, sigmas=FEATURE_SIGMAS, C: float = 1.0,
                    n_trials: int = 10, fourier_size: int = 2000, master_seed: int = 0,
                    train_fraction: float = 2 / 3, cfg: SolverConfig = SolverConfig()
                    ) -> FeatureRanking:
    """Rank the columns of ``data`` (all groups flattened) by L21 kernel weight.

    Each trial draws a fresh stratified split and a fresh embedding, solves
    L21-MKL on the training part and sums beta over each feature's kernels.
    """
    cols = _flat(data).split_columns()
    p = len(cols.groups)
    if p < 2:
        raise ConfigurationError("feature ranking needs at least two features")
    if n_trials < 1:
        raise ConfigurationError("n_trials must be at least 1")
    # sqrt(dim) scaling is the identity for dim-1 groups
    schedule = BandwidthSchedule(tuple(sorted(sigmas)), scale_by_sqrt_dim=True)
    cfg = cfg.with_C(C)
    weights = np.zeros((n_trials, p))
    for t in range(n_trials):
        seeds = trial_seeds(master_seed, t)
        try:
            tr, _ = random_split_indices(cols.labels, train_fraction, seeds["split"])
            train = cols.subset(tr)
            grams = bank_for(train, schedule, fourier_size, seeds["bank"]).grams(train)
            fit = solve_gram(grams, train.labels, Regularizer.L21, cfg)
        except Exception as exc:
            raise TrialError(t, exc) from exc
        weights[t] = fit.beta.sum(axis=1)
    return ranking_from_weights(weights.mean(axis=0), cols.group_names, weights)


def default_k_values(p: int) -> list:
    """1, 2, 4, ... up to p, always ending with p."""
    ks = []
    k = 1
    while k < p:
        ks.append(k)
        k *= 2
    ks.append(p)
    return ks


@dataclass(frozen=True)
class CurvePoint:
    k: int
    mean_acc: float
    std_acc: float


def top_k_accuracy_curve(data: GroupedDataset, ranking: FeatureRanking, k_values=None,
                         C: float = 1.0, n_trials: int = 20, master_seed: int = 0,
                         train_fraction: float = 2 / 3, tol: float = 1e-7) -> list:
    """Mean test accuracy of a Gaussian SVM (sigma = sqrt(k), exact kernel) on the
    top-k ranked features, for each k; returns a list of CurvePoint."""
    X = _flat(data).groups[0].values
    y = data.labels
    p = X.shape[1]
    if len(ranking) != p:
        raise ConfigurationError(f"ranking has {len(ranking)} features, data has {p}")
    ks = default_k_values(p) if k_values is None else [int(k) for k in k_values]
    if not ks:
        raise ConfigurationError("no k values given")
    bad = [k for k in ks if not 1 <= k <= p]
    if bad:
        raise ConfigurationError(f"k values {bad} outside 1..{p}")
    if n_trials < 1:
        raise ConfigurationError("n_trials must be at least 1")

    acc = np.zeros((n_trials, len(ks)))
    for t in range(n_trials):
        seeds = trial_seeds(master_seed, t)
        tr, te = random_split_indices(y, train_fraction, seeds["split"])
        for j, k in enumerate(ks):
            Z = X[:, ranking.top(k)]
            sigma = float(np.sqrt(k))
            sol = fit_gram(gaussian_gram(Z[tr], Z[tr], sigma), y[tr], C, tol)
            scores = gaussian_gram(Z[te], Z[tr], sigma) @ sol.coef + sol.b
            acc[t, j] = np.mean(predict_from_scores(scores) == y[te])
    std = acc.std(axis=0, ddof=1) if n_trials > 1 else np.zeros(len(ks))
    return [CurvePoint(k, float(m), float(s)) for k, m, s in zip(ks, acc.mean(axis=0), std)]


def mean_pairwise_correlation(X) -> float:
    """Mean absolute Pearson correlation over all unordered column pairs;
    pairs involving a constant column count as 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ConfigurationError("need at least two features")
    Z = X - X.mean(axis=0)
    norms = np.sqrt((Z * Z).sum(axis=0))
    ok = norms > 0
    Z[:, ok] /= norms[ok]
    Z[:, ~ok] = 0.0
    R = np.clip(np.abs(Z.T @ Z), 0.0, 1.0)
    iu = np.triu_indices(X.shape[1], k=1)
    return float(R[iu].mean())


def ranking_csv(ranking: FeatureRanking) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "feature", "index", "mean_weight"])
    for rank, name, idx, weight in ranking.rows():
        w.writerow([rank, name, idx, repr(weight)])
    return buf.getvalue()


def curve_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "mean_acc", "std"])
    for pt in points:
        w.writerow([pt.k, repr(pt.mean_acc), repr(pt.std_acc)])
    return buf.getvalue()
