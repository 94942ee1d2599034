"""Classification metrics, cross-validated model selection and repeated
random-split experiments.

Methods plug in through a small protocol (see ``methods.py``): a method
builds a stack of kernel matrices over all rows of a trial once, and fits /
scores on index subsets of it, so inner cross-validation never re-embeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .dataset import GroupedDataset, apply_standardizer, fit_standardizer, kfold_indices, \
    random_split_indices
from .exceptions import ConfigurationError, ShapeError, TrialError, UndefinedMetricError
from .mkl import predict_from_scores

DEFAULT_C_CANDIDATES = (0.01, 0.1, 1.0, 10.0, 100.0)
METRICS = ("acc", "sen", "spe", "mcc", "auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(labels, predictions) -> ConfusionCounts:
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise ShapeError(f"{y.shape[0]} labels vs {p.shape[0]} predictions")
    return ConfusionCounts(
        tp=int(np.sum((y == 1) & (p == 1))),
        fp=int(np.sum((y == -1) & (p == 1))),
        tn=int(np.sum((y == -1) & (p == -1))),
        fn=int(np.sum((y == 1) & (p == -1))),
    )


def mcc(counts: ConfusionCounts) -> float:
    """Matthews correlation; 0 when any marginal is empty."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def auc(labels, scores) -> float:
    """P(score of a random positive > score of a random negative), ties count 1/2."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ShapeError(f"{y.shape[0]} labels vs {s.shape[0]} scores")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == -1))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _ratio(num, den):
    return num / den if den else math.nan


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    sen: float
    spe: float
    mcc: float
    auc: float
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        return {
            "acc": self.acc, "sen": self.sen, "spe": self.spe, "mcc": self.mcc, "auc": self.auc,
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp,
                       "tn": self.counts.tn, "fn": self.counts.fn},
        }


def metrics_report(labels, scores) -> MetricsReport:
    """All five metrics from raw decision scores (prediction = sign, sign(0) = +1)."""
    counts = confusion(labels, predict_from_scores(scores))
    try:
        area = auc(labels, scores)
    except UndefinedMetricError:
        area = math.nan
    return MetricsReport(
        acc=_ratio(counts.tp + counts.tn, counts.total),
        sen=_ratio(counts.tp, counts.tp + counts.fn),
        spe=_ratio(counts.tn, counts.tn + counts.fp),
        mcc=mcc(counts),
        auc=area,
        counts=counts,
    )


@dataclass
class TrialSummary:
    method: str
    reports: list = field(default_factory=list)
    params: list = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.reports])

    @property
    def mean(self) -> dict:
        return {m: float(np.mean(self.values(m))) for m in METRICS}

    @property
    def std(self) -> dict:
        # sample std; a single trial has std 0
        if len(self.reports) < 2:
            return {m: 0.0 for m in METRICS}
        return {m: float(np.std(self.values(m), ddof=1)) for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_trials": len(self.reports),
            "mean": self.mean,
            "std": self.std,
            "trials": [dict(r.to_dict(), params=p) for r, p in zip(self.reports, self.params)],
        }


def format_table(summaries) -> str:
    """Aligned mean +/- std table: Method, ACC/SEN/SPE/MCC in %, AUC."""
    header = ["Method", "ACC(%)", "SEN(%)", "SPE(%)", "MCC(%)", "AUC"]
    rows = [header]
    for s in summaries:
        mean, std = s.mean, s.std
        row = [s.method]
        for m in ("acc", "sen", "spe", "mcc"):
            row.append(f"{100 * mean[m]:.2f} ± {100 * std[m]:.2f}")
        row.append(f"{mean['auc']:.3f} ± {std['auc']:.3f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for k, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths))).rstrip())
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# model selection


def trial_seeds(master_seed: int, trial: int) -> dict:
    """Independent seeds for the split, the embedding and inner CV of a trial."""
    state = np.random.SeedSequence([int(master_seed), int(trial)]).generate_state(3, np.uint64)
    return {"split": int(state[0]), "bank": int(state[1]), "cv": int(state[2])}


def _accuracy(labels, scores) -> float:
    return float(np.mean(predict_from_scores(scores) == labels))


def cv_select(method, stack, train_idx, labels, candidates, k: int = 5, seed: int = 0,
              restack=None):
    """Pick the candidate with the best mean stratified k-fold accuracy.

    ``stack`` is ``method.kernel_stack`` over all rows; ``train_idx`` indexes
    the rows available for selection.  If given, ``restack(fold_train_rows)``
    returns the stack to use for that fold instead (per-fold preprocessing).
    Ties go to the earliest candidate.  Returns (best params, list of mean
    accuracies).
    """
    candidates = list(candidates)
    if not candidates:
        raise ConfigurationError("no candidates to select from")
    if len(candidates) == 1:
        return candidates[0], [math.nan]
    train_idx = np.asarray(train_idx)
    y = np.asarray(labels)
    folds = kfold_indices(len(train_idx), k, y[train_idx], seed)
    acc = np.zeros(len(candidates))
    for f, (tr, te) in enumerate(folds):
        tr_rows, te_rows = train_idx[tr], train_idx[te]
        fold_stack = stack if restack is None else restack(tr_rows)
        for c, params in enumerate(candidates):
            model = method.fit(fold_stack, tr_rows, y, params, seed + f)
            acc[c] += _accuracy(y[te_rows], model.scores(fold_stack, te_rows))
    acc /= len(folds)
    best = int(np.argmax(acc))
    return candidates[best], acc.tolist()


def cv_select_C(train: GroupedDataset, method, candidates=DEFAULT_C_CANDIDATES, k: int = 5,
                seed: int = 0) -> float:
    """Cross-validated choice of C for ``method``; ties go to the smallest C."""
    cs = sorted(float(c) for c in candidates)
    stack = method.kernel_stack(train, seed)
    params, _ = cv_select(method, stack, np.arange(train.n_samples), train.labels,
                          method.candidates(cs), k, seed)
    return params["C"]


def run_trial(data: GroupedDataset, method, seeds: dict, train_fraction: float = 2 / 3,
              C_candidates=DEFAULT_C_CANDIDATES, fixed_C=None, cv_folds: int = 5,
              standardize=()):
    """One split -> standardize -> select -> fit -> test; returns (report, params).

    Standardization statistics come from the training rows only, and inside
    model selection from each fold's training rows only.
    """
    standardize = tuple(standardize)

    def stack_on(rows):
        params = fit_standardizer(data.subset(rows), standardize)
        return method.kernel_stack(apply_standardizer(params, data), seeds["bank"])

    tr, te = random_split_indices(data.labels, train_fraction, seeds["split"])
    stack = stack_on(tr)
    cs = [float(fixed_C)] if fixed_C is not None else sorted(float(c) for c in C_candidates)
    best, _ = cv_select(method, stack, tr, data.labels, method.candidates(cs), cv_folds,
                        seeds["cv"], stack_on if standardize else None)
    model = method.fit(stack, tr, data.labels, best, seeds["cv"])
    report = metrics_report(data.labels[te], model.scores(stack, te))
    return report, dict(best)


def repeated_trials(data: GroupedDataset, method, n_trials: int = 20,
                    train_fraction: float = 2 / 3, master_seed: int = 0,
                    C_candidates=DEFAULT_C_CANDIDATES, fixed_C=None, cv_folds: int = 5,
                    standardize=()) -> TrialSummary:
    """Paired random-split experiment; trial t uses seeds derived from (master_seed, t)."""
    if n_trials < 1:
        raise ConfigurationError("n_trials must be at least 1")
    summary = TrialSummary(method.name)
    for t in range(n_trials):
        try:
            report, params = run_trial(data, method, trial_seeds(master_seed, t), train_fraction,
                                       C_candidates, fixed_C, cv_folds, standardize)
        except Exception as exc:
            raise TrialError(t, exc) from exc
        summary.reports.append(report)
        summary.params.append(params)
    return summary
