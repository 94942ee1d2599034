"""Uniform adapters over the trainable methods, for CV and repeated trials.

A method provides

    kernel_stack(data, seed) -> (p, q, n, n) kernels over all rows of ``data``
    candidates(C_values)     -> list of hyperparameter dicts, in tie-break order
    fit(stack, train_idx, labels, params, seed) -> object with scores(stack, rows)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import fit_linear_groups, grid_search_on_stack, grid_search_weights, \
    linear_grams, single_view
from .dataset import GroupedDataset
from .exceptions import ConfigurationError
from .mkl import GramFit, Regularizer, SolverConfig, SolverTrace, bank_for, solve, solve_gram
from .rff import BandwidthSchedule
from .svm import fit_gram


def _block(stack, rows, cols):
    return stack[:, :, np.asarray(rows)[:, None], np.asarray(cols)[None, :]]


@dataclass(frozen=True)
class GramPredictor:
    fit: GramFit
    train_idx: np.ndarray

    def scores(self, stack, rows) -> np.ndarray:
        return self.fit.scores(_block(stack, rows, self.train_idx))


@dataclass(frozen=True)
class MklMethod:
    regularizer: Regularizer
    schedule: BandwidthSchedule = BandwidthSchedule()
    fourier_size: int = 2000
    cfg: SolverConfig = SolverConfig()

    @property
    def name(self) -> str:
        return f"mkl-{self.regularizer.value.lower()}"

    def view(self, data: GroupedDataset) -> GroupedDataset:
        return data

    def kernel_stack(self, data: GroupedDataset, seed: int) -> np.ndarray:
        return bank_for(data, self.schedule, self.fourier_size, seed).grams(data)

    def candidates(self, C_values) -> list:
        return [{"C": float(c)} for c in C_values]

    def fit_explicit(self, train: GroupedDataset, params, bank_seed: int = 0, cv_seed: int = 0):
        """(MklModel, SolverTrace) with explicit block weights."""
        bank = bank_for(train, self.schedule, self.fourier_size, bank_seed)
        return solve(bank, train, self.regularizer, self.cfg.with_C(params["C"]))

    def fit(self, stack, train_idx, labels, params, seed=0) -> GramPredictor:
        train_idx = np.asarray(train_idx)
        fit = solve_gram(_block(stack, train_idx, train_idx), np.asarray(labels)[train_idx],
                         self.regularizer, self.cfg.with_C(params["C"]))
        return GramPredictor(fit, train_idx)


def _single_kernel_fit(K, y, C, m, p, q, tol) -> GramFit:
    sol = fit_gram(K, y, C, tol)
    gamma = np.zeros((p, q))
    gamma.flat[m] = 1.0
    return GramFit(gamma, sol.coef, sol.b, gamma.copy(), Regularizer.L2,
                   SolverTrace([sol.primal], "converged"))


@dataclass(frozen=True)
class SingleKernelSvm:
    """Gaussian-RFF SVM on one group (or all columns when group is None);
    the bandwidth is selected together with C."""

    group: str | None = None
    schedule: BandwidthSchedule = BandwidthSchedule()
    fourier_size: int = 2000
    cfg: SolverConfig = SolverConfig()

    @property
    def name(self) -> str:
        return "svm-all" if self.group is None else f"svm:{self.group}"

    def view(self, data: GroupedDataset) -> GroupedDataset:
        return single_view(data, self.group)

    def kernel_stack(self, data: GroupedDataset, seed: int) -> np.ndarray:
        view = self.view(data)
        return bank_for(view, self.schedule, self.fourier_size, seed).grams(view)

    def fit_explicit(self, train: GroupedDataset, params, bank_seed: int = 0, cv_seed: int = 0):
        """One-kernel MklModel (beta = 1) on ``self.view(train)``; equivalent to a
        plain SVM on that kernel."""
        view = self.view(train)
        bank = bank_for(view, self.schedule, self.fourier_size, bank_seed)
        one = bank.restrict(kernels=[params["kernel"]])
        return solve(one, view, Regularizer.L2, self.cfg.with_C(params["C"]))

    def candidates(self, C_values) -> list:
        q = len(self.schedule.multipliers)
        return [{"C": float(c), "kernel": m} for c in C_values for m in range(q)]

    def fit(self, stack, train_idx, labels, params, seed=0) -> GramPredictor:
        train_idx = np.asarray(train_idx)
        m = params["kernel"]
        K = stack[0, m][np.ix_(train_idx, train_idx)]
        fit = _single_kernel_fit(K, np.asarray(labels)[train_idx], params["C"], m,
                                 1, stack.shape[1], self.cfg.inner_tol)
        return GramPredictor(fit, train_idx)


@dataclass(frozen=True)
class GridSearchMethod:
    """Per-group linear kernels weighted by simplex grid search (fixed C)."""

    C: float = 1.0
    step: float = 0.1
    inner_k: int = 10
    inner_tol: float = 1e-7

    name = "grid-search"

    def kernel_stack(self, data: GroupedDataset, seed: int) -> np.ndarray:
        return linear_grams(data)

    def candidates(self, C_values) -> list:
        return [{"C": self.C}]

    def view(self, data: GroupedDataset) -> GroupedDataset:
        return data

    def fit_explicit(self, train: GroupedDataset, params, bank_seed: int = 0, cv_seed: int = 0):
        """(LinearGroupModel, None); ``cv_seed`` drives the inner folds."""
        res = grid_search_weights(train, params["C"], self.step, self.inner_k, cv_seed)
        return fit_linear_groups(train, res.best_beta, params["C"], self.inner_tol), None

    def fit(self, stack, train_idx, labels, params, seed=0) -> GramPredictor:
        train_idx = np.asarray(train_idx)
        y = np.asarray(labels)
        res = grid_search_on_stack(stack, train_idx, y, params["C"], self.step, self.inner_k,
                                   seed, self.inner_tol)
        p = stack.shape[0]
        K = np.tensordot(res.best_beta, stack[:, 0], axes=1)[np.ix_(train_idx, train_idx)]
        sol = fit_gram(K, y[train_idx], params["C"], self.inner_tol)
        gamma = res.best_beta.reshape(p, 1)
        fit = GramFit(gamma, sol.coef, sol.b, gamma.copy(), Regularizer.L1,
                      SolverTrace([sol.primal], "converged"))
        return GramPredictor(fit, train_idx)


METHOD_NAMES = ("mkl-l1", "mkl-l2", "mkl-l21", "svm-single", "svm-all", "grid-search")


def make_method(name: str, group: str | None = None,
                schedule: BandwidthSchedule = BandwidthSchedule(), fourier_size: int = 2000,
                cfg: SolverConfig = SolverConfig(), grid_step: float = 0.1,
                grid_inner_folds: int = 10, grid_C: float = 1.0):
    """Method by CLI name; ``svm:<group>`` is shorthand for svm-single on that group."""
    if name.startswith("mkl-"):
        return MklMethod(Regularizer.parse(name), schedule, fourier_size, cfg)
    if name == "svm-all":
        return SingleKernelSvm(None, schedule, fourier_size, cfg)
    if name.startswith("svm:"):
        return SingleKernelSvm(name[4:], schedule, fourier_size, cfg)
    if name == "svm-single":
        if group is None:
            raise ConfigurationError("svm-single needs a group (use svm:<group> or --group)")
        return SingleKernelSvm(group, schedule, fourier_size, cfg)
    if name == "grid-search":
        return GridSearchMethod(grid_C, grid_step, grid_inner_folds, cfg.inner_tol)
    raise ConfigurationError(f"unknown method {name!r}; choose from {METHOD_NAMES}")
