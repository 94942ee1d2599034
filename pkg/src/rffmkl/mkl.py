"""Primal multiple kernel learning over random Fourier embeddings.

Each of p feature groups is embedded by q Gaussian-kernel RFF maps Psi_lm.
The training problem is

    min_{w, b, beta}  1/2 sum_lm |w_lm|^2 / beta_lm + C sum_i xi_i
    s.t.  y_i (sum_lm w_lm' Psi_lm(x_i^(l)) + b) >= 1 - xi_i,  xi >= 0,
          beta >= 0,  R(beta) <= 1,

with R one of |beta|_1, |beta|_2 or sum_l |beta_l|_2 (group lasso over the
rows of the p x q weight grid).  It is jointly convex and is solved here by
alternating an exact SVM solve at fixed beta with the closed-form beta that
minimizes sum_lm a_lm^2 / beta_lm at fixed block norms a_lm = |w_lm|.

For the SVM step the substitution v_lm = w_lm / sqrt(beta_lm) turns the
problem into a standard SVM on the kernel sum_lm beta_lm Psi_lm Psi_lm'.
Weights are carried as w_lm = gamma_lm Psi_lm' coef so the whole loop runs on
per-block Gram matrices; explicit w_lm are materialized at the end.
"""

from __future__ import annotations

import enum
import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .dataset import GroupedDataset
from .exceptions import ConfigurationError, InvariantError, NumericError, ParameterError, ShapeError
from .rff import BandwidthSchedule, RffMap, derive_seed
from .svm import fit_gram, hinge_sum

FEASIBILITY_EPS = 1e-8


class Regularizer(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L21 = "L21"

    @classmethod
    def parse(cls, value) -> "Regularizer":
        if isinstance(value, Regularizer):
            return value
        key = str(value).upper().replace("MKL-", "")
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown regularizer {value!r}; use L1, L2 or L21") from None


@dataclass(frozen=True)
class SolverConfig:
    C: float = 1.0
    max_outer_iters: int = 100
    outer_tol: float = 1e-6
    inner_tol: float = 1e-7
    beta_floor: float = 1e-12

    def __post_init__(self):
        if not self.C > 0:
            raise ParameterError(f"C must be positive, got {self.C}")
        if self.max_outer_iters < 1:
            raise ParameterError("max_outer_iters must be at least 1")
        for name in ("outer_tol", "inner_tol", "beta_floor"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    def with_C(self, C: float) -> "SolverConfig":
        return SolverConfig(C, self.max_outer_iters, self.outer_tol, self.inner_tol,
                            self.beta_floor)

    def to_dict(self) -> dict:
        return {"C": self.C, "max_outer_iters": self.max_outer_iters,
                "outer_tol": self.outer_tol, "inner_tol": self.inner_tol,
                "beta_floor": self.beta_floor}


@dataclass
class SolverTrace:
    objectives: list = field(default_factory=list)
    status: str = "max_iters"

    @property
    def iterations(self) -> int:
        return len(self.objectives)

    def is_monotone(self, rel_slack: float = 1e-9) -> bool:
        obj = self.objectives
        return all(b <= a + rel_slack * abs(a) for a, b in zip(obj, obj[1:]))

    def to_csv(self) -> str:
        lines = ["iteration,objective"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.objectives)]
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# embedding bank


@dataclass(frozen=True)
class EmbeddingBank:
    """p x q grid of RFF maps; row l embeds feature group l."""

    maps: tuple
    group_names: tuple
    master_seed: int = 0

    def __post_init__(self):
        maps = tuple(tuple(row) for row in self.maps)
        names = tuple(self.group_names)
        if not maps or len(maps) != len(names):
            raise ConfigurationError("bank needs one non-empty row of maps per group")
        q = len(maps[0])
        D = maps[0][0].fourier_size if q else 0
        for name, row in zip(names, maps):
            if len(row) != q or q == 0:
                raise ConfigurationError("every group needs the same number of kernels")
            dims = {m.input_dim for m in row}
            if len(dims) != 1:
                raise ShapeError(f"maps of group {name!r} disagree on input dimension")
            if any(m.fourier_size != D for m in row):
                raise ShapeError("all maps in a bank must share the Fourier size")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "group_names", names)

    @property
    def p(self) -> int:
        return len(self.maps)

    @property
    def q(self) -> int:
        return len(self.maps[0])

    @property
    def n_kernels(self) -> int:
        return self.p * self.q

    @property
    def fourier_size(self) -> int:
        return self.maps[0][0].fourier_size

    @property
    def block_dim(self) -> int:
        return 2 * self.fourier_size

    @property
    def group_dims(self) -> tuple:
        return tuple(row[0].input_dim for row in self.maps)

    @property
    def offsets(self) -> np.ndarray:
        """Start column of block (l, m) in the concatenated embedding."""
        return (np.arange(self.n_kernels) * self.block_dim).reshape(self.p, self.q)

    @property
    def total_dim(self) -> int:
        return self.n_kernels * self.block_dim

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([[m.sigma for m in row] for row in self.maps])

    @property
    def seeds(self) -> list:
        return [[m.seed for m in row] for row in self.maps]

    def _check(self, data: GroupedDataset):
        if tuple(data.group_names) != self.group_names or tuple(data.group_dims) != self.group_dims:
            raise ConfigurationError(
                f"data groups {list(zip(data.group_names, data.group_dims))} do not match bank "
                f"{list(zip(self.group_names, self.group_dims))}")

    def embed(self, data: GroupedDataset) -> list:
        """Nested list [l][m] of n x 2D embeddings."""
        self._check(data)
        return [[m.transform(g.values) for m in row] for g, row in zip(data.groups, self.maps)]

    def embed_concat(self, data: GroupedDataset) -> np.ndarray:
        return np.hstack([blk for row in self.embed(data) for blk in row])

    def grams(self, data: GroupedDataset, other: GroupedDataset | None = None) -> np.ndarray:
        """(p, q, n, n_other) stack of RFF Gram matrices."""
        left = self.embed(data)
        right = left if other is None else self.embed(other)
        n = data.n_samples
        n2 = n if other is None else other.n_samples
        out = np.empty((self.p, self.q, n, n2))
        for l in range(self.p):
            for m in range(self.q):
                out[l, m] = left[l][m] @ right[l][m].T
        return out

    def restrict(self, groups=None, kernels=None) -> "EmbeddingBank":
        """Sub-bank keeping the given group and kernel indices."""
        groups = range(self.p) if groups is None else list(groups)
        kernels = range(self.q) if kernels is None else list(kernels)
        maps = tuple(tuple(self.maps[l][m] for m in kernels) for l in groups)
        return EmbeddingBank(maps, tuple(self.group_names[l] for l in groups), self.master_seed)

    def reference(self) -> dict:
        return {
            "group_names": list(self.group_names),
            "group_dims": list(self.group_dims),
            "fourier_size": self.fourier_size,
            "master_seed": self.master_seed,
            "sigmas": self.sigmas.tolist(),
            "seeds": self.seeds,
        }

    @classmethod
    def from_reference(cls, ref: dict) -> "EmbeddingBank":
        maps = tuple(
            tuple(RffMap.sample(d, ref["fourier_size"], s, seed, name)
                  for s, seed in zip(sig_row, seed_row))
            for name, d, sig_row, seed_row in zip(ref["group_names"], ref["group_dims"],
                                                  ref["sigmas"], ref["seeds"])
        )
        return cls(maps, tuple(ref["group_names"]), int(ref["master_seed"]))


def build_bank(group_dims, schedule: BandwidthSchedule = BandwidthSchedule(),
               fourier_size: int = 2000, master_seed: int = 0, group_names=None) -> EmbeddingBank:
    """One RffMap per (group, bandwidth); seeds follow the group name."""
    group_dims = list(group_dims)
    if group_names is None:
        group_names = [f"g{l}" for l in range(len(group_dims))]
    if len(group_names) != len(group_dims):
        raise ConfigurationError("group_names and group_dims differ in length")
    maps = []
    for name, d in zip(group_names, group_dims):
        maps.append(tuple(
            RffMap.sample(d, fourier_size, sigma, derive_seed(master_seed, name, m), name)
            for m, sigma in enumerate(schedule.sigmas(d))
        ))
    return EmbeddingBank(tuple(maps), tuple(group_names), int(master_seed))


def bank_for(data: GroupedDataset, schedule: BandwidthSchedule = BandwidthSchedule(),
             fourier_size: int = 2000, master_seed: int = 0) -> EmbeddingBank:
    return build_bank(data.group_dims, schedule, fourier_size, master_seed, data.group_names)


# ----------------------------------------------------------------------------
# kernel weights


def constraint_value(beta, reg) -> float:
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    reg = Regularizer.parse(reg)
    if reg is Regularizer.L1:
        return float(beta.sum())
    if reg is Regularizer.L2:
        return float(np.sqrt((beta ** 2).sum()))
    return float(np.sqrt((beta ** 2).sum(axis=1)).sum())


def uniform_beta(p: int, q: int, reg) -> np.ndarray:
    reg = Regularizer.parse(reg)
    if reg is Regularizer.L1:
        return np.full((p, q), 1.0 / (p * q))
    if reg is Regularizer.L2:
        return np.full((p, q), 1.0 / np.sqrt(p * q))
    return np.full((p, q), 1.0 / (p * np.sqrt(q)))


def beta_step(block_norms, reg) -> np.ndarray:
    """Kernel weights minimizing sum a_lm^2 / beta_lm on the unit constraint set.

    ``block_norms`` is a (p, q) grid (rows are groups; a 1-D input is one
    group).  The closed forms, with a = block norms:

      L1   beta = a / sum(a)
      L2   beta = a^(2/3) / sqrt(sum a^(4/3))
      L21  beta_lm = a_lm^(2/3) s_l^(1/4) / sum_l' s_l'^(3/4),  s_l = sum_m a_lm^(4/3)

    Each makes its constraint active.  Zero norms get zero weight; an
    all-zero input returns the uniform feasible point.
    """
    a = np.asarray(block_norms, dtype=np.float64)
    shape = a.shape
    a = np.atleast_2d(a)
    reg = Regularizer.parse(reg)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ParameterError("block norms must be finite and nonnegative")
    top = a.max()
    if top == 0:
        return uniform_beta(*a.shape, reg).reshape(shape)
    a = a / top
    if reg is Regularizer.L1:
        beta = a / a.sum()
    elif reg is Regularizer.L2:
        a23 = np.cbrt(a) ** 2
        beta = a23 / np.sqrt((a23 ** 2).sum())
    else:
        a23 = np.cbrt(a) ** 2
        s = (a23 ** 2).sum(axis=1)
        beta = a23 * (s ** 0.25)[:, None] / (s ** 0.75).sum()
    return beta.reshape(shape)


# ----------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class MklModel:
    w: np.ndarray  # (p, q, 2D) block weights
    b: float
    beta: np.ndarray  # (p, q)
    regularizer: Regularizer
    bank: EmbeddingBank

    @property
    def block_norms(self) -> np.ndarray:
        return np.linalg.norm(self.w, axis=2)

    def check_invariants(self, eps: float = FEASIBILITY_EPS):
        if np.any(self.beta < 0):
            raise InvariantError("negative kernel weight")
        if constraint_value(self.beta, self.regularizer) > 1 + eps:
            raise InvariantError(f"kernel weights violate the {self.regularizer.value} constraint")
        if np.any((self.beta == 0) & (self.block_norms > 0)):
            raise InvariantError("a zero-weight block carries nonzero coefficients")

    def decision_scores(self, data: GroupedDataset) -> np.ndarray:
        return decision_scores(self, self.bank, data)

    def predict(self, data: GroupedDataset) -> np.ndarray:
        return predict_from_scores(self.decision_scores(data))


def predict_from_scores(scores) -> np.ndarray:
    """sign with sign(0) = +1."""
    return np.where(np.asarray(scores) >= 0, 1, -1)


def _flat_blocks(embedded) -> list:
    if isinstance(embedded, np.ndarray):
        return [embedded]
    return [blk for row in embedded for blk in row]


def _regularization(block_norms, beta) -> float:
    a = np.asarray(block_norms, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any((beta == 0) & (a > 0)):
        raise InvariantError("beta_lm = 0 with nonzero w_lm")
    live = a > 0
    return 0.5 * float((a[live] ** 2 / beta[live]).sum())


def objective(model: MklModel, embedded, labels, C: float) -> float:
    """Primal MKL objective; ``embedded`` is bank.embed(data) (nested [l][m])."""
    blocks = _flat_blocks(embedded)
    w = model.w.reshape(-1, model.w.shape[-1])
    if len(blocks) == 1 and blocks[0].shape[1] == w.size:
        scores = blocks[0] @ w.ravel()
    else:
        if len(blocks) != w.shape[0]:
            raise ShapeError(f"{len(blocks)} embedded blocks for {w.shape[0]} weight blocks")
        scores = sum(blk @ wb for blk, wb in zip(blocks, w))
    scores = scores + model.b
    y = np.asarray(labels, dtype=np.float64)
    return _regularization(model.block_norms, model.beta) + C * hinge_sum(scores, y)


def decision_scores(model: MklModel, bank: EmbeddingBank, data: GroupedDataset) -> np.ndarray:
    """Pre-sign scores sum_lm w_lm' Psi_lm(x^(l)) + b."""
    if bank.reference() != model.bank.reference():
        raise ConfigurationError("model was trained on a different embedding bank")
    if model.w.shape != (bank.p, bank.q, bank.block_dim):
        raise ConfigurationError("model weights do not match the bank layout")
    scores = np.full(data.n_samples, float(model.b))
    for l, row in enumerate(bank.embed(data)):
        for m, psi in enumerate(row):
            if model.beta[l, m] > 0:
                scores += psi @ model.w[l, m]
    return scores


# ----------------------------------------------------------------------------
# solver


def svm_step(blocks, labels, C: float, inner_tol: float = 1e-7):
    """Max-margin separator on the concatenation of ``blocks`` (each already
    scaled by sqrt(beta)); returns (list of per-block w, b)."""
    blocks = [np.asarray(blk, dtype=np.float64) for blk in blocks]
    for blk in blocks:
        if not np.all(np.isfinite(blk)):
            raise NumericError("non-finite features")
    K = sum(blk @ blk.T for blk in blocks)
    sol = fit_gram(K, labels, C, inner_tol)
    return [blk.T @ sol.coef for blk in blocks], sol.b


@dataclass(frozen=True)
class GramFit:
    """Solution of the MKL problem in kernel-expansion form.

    w_lm = gamma_lm * Psi_lm(X_train)' coef.
    """

    gamma: np.ndarray
    coef: np.ndarray
    b: float
    beta: np.ndarray
    regularizer: Regularizer
    trace: SolverTrace

    def scores(self, cross_grams) -> np.ndarray:
        """Scores from a (p, q, n_eval, n_train) stack of cross kernels."""
        p, q, ne, nt = cross_grams.shape
        K = (self.gamma.ravel() @ cross_grams.reshape(p * q, ne * nt)).reshape(ne, nt)
        return K @ self.coef + self.b


def _evaluate(grams, y, C, gamma, coef, b, beta):
    p, q, n, _ = grams.shape
    V = (grams.reshape(p * q * n, n) @ coef).reshape(p * q, n)
    quad = np.maximum(V @ coef, 0.0).reshape(p, q)
    a = np.abs(gamma) * np.sqrt(quad)
    scores = gamma.ravel() @ V + b
    return _regularization(a, beta) + C * hinge_sum(scores, y), a


def solve_gram(grams, labels, reg, cfg: SolverConfig = SolverConfig(), beta0=None) -> GramFit:
    """Alternating minimization on a (p, q, n, n) stack of block Gram matrices."""
    grams = np.ascontiguousarray(grams, dtype=np.float64)
    if grams.ndim != 4 or grams.shape[2] != grams.shape[3]:
        raise ShapeError(f"expected a (p, q, n, n) Gram stack, got {grams.shape}")
    p, q, n, _ = grams.shape
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (n,):
        raise ShapeError(f"{y.shape[0]} labels for {n} samples")
    if not np.all(np.isfinite(grams)):
        raise NumericError("non-finite kernel values")
    reg = Regularizer.parse(reg)
    beta = uniform_beta(p, q, reg) if beta0 is None else np.array(beta0, dtype=np.float64)
    C = cfg.C

    trace = SolverTrace()
    best = None  # (objective, gamma, coef, b, alpha)
    for it in range(cfg.max_outer_iters):
        active = beta > cfg.beta_floor
        K = (np.where(active, beta, 0.0).ravel() @ grams.reshape(p * q, n * n)).reshape(n, n)
        sol = fit_gram(K, y, C, cfg.inner_tol, None if best is None else best[4])
        gamma = np.where(active, beta, 0.0)
        J, a = _evaluate(grams, y, C, gamma, sol.coef, sol.b, beta)
        cand = (J, gamma, sol.coef, sol.b, sol.alpha)
        if best is not None:
            # previous iterate re-scored under the current beta; never accept an increase
            J_prev, a_prev = _evaluate(grams, y, C, best[1], best[2], best[3], beta)
            if J_prev < J:
                cand = (J_prev, best[1], best[2], best[3], best[4])
                J, a = J_prev, a_prev
        best = cand
        last = trace.objectives[-1] if trace.objectives else None
        trace.objectives.append(J)
        if last is not None and abs(last - J) <= cfg.outer_tol * max(abs(last), 1e-300):
            trace.status = "converged"
            break
        if not np.any(a > 0):
            trace.status = "converged"
            break
        if it == cfg.max_outer_iters - 1:
            break
        new_beta = beta_step(a, reg)
        if np.array_equal(new_beta, beta):
            trace.status = "converged"
            break
        beta = new_beta
    _, gamma, coef, b, _ = best
    return GramFit(gamma, coef, b, beta, reg, trace)


def solve(bank: EmbeddingBank, train: GroupedDataset, reg, cfg: SolverConfig = SolverConfig()):
    """Train on ``train`` embedded by ``bank``; returns (MklModel, SolverTrace)."""
    train.require_both_classes()
    psi = bank.embed(train)
    grams = np.empty((bank.p, bank.q, train.n_samples, train.n_samples))
    for l in range(bank.p):
        for m in range(bank.q):
            grams[l, m] = psi[l][m] @ psi[l][m].T
    fit = solve_gram(grams, train.labels, reg, cfg)
    return model_from_fit(fit, bank, psi), fit.trace


def model_from_fit(fit: GramFit, bank: EmbeddingBank, psi) -> MklModel:
    """Materialize explicit block weights from a kernel-expansion fit."""
    w = np.zeros((bank.p, bank.q, bank.block_dim))
    for l in range(bank.p):
        for m in range(bank.q):
            if fit.gamma[l, m] != 0:
                w[l, m] = fit.gamma[l, m] * (psi[l][m].T @ fit.coef)
    beta = np.where(fit.beta > 0, fit.beta, 0.0)
    return MklModel(w, float(fit.b), beta, fit.regularizer, bank)


# ----------------------------------------------------------------------------
# persistence


def write_npz(path, arrays: dict):
    """np.savez equivalent with fixed zip timestamps, so output is byte-stable."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def save_model(model: MklModel, path, extra: dict | None = None):
    """Weights plus a bank reference (seeds and bandwidths, not the omegas);
    ``extra`` is stored alongside in the JSON metadata."""
    meta = {
        "kind": "mkl",
        "regularizer": model.regularizer.value,
        "b": model.b,
        "bank": model.bank.reference(),
    }
    meta.update(extra or {})
    write_npz(path, {
        "w": model.w,
        "beta": model.beta,
        "meta": np.array(json.dumps(meta, sort_keys=True)),
    })


def load_model(path) -> MklModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("kind") != "mkl":
            raise ConfigurationError(f"{path} is not an MKL model artifact")
        bank = EmbeddingBank.from_reference(meta["bank"])
        return MklModel(z["w"].copy(), float(meta["b"]), z["beta"].copy(),
                        Regularizer.parse(meta["regularizer"]), bank)
