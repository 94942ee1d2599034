"""Gaussian kernels and their random Fourier feature maps.

The Gaussian kernel k(x, y) = exp(-|x - y|^2 / (2 sigma^2)) is the Fourier
transform of a normal density with covariance sigma^-2 I.  Drawing D
frequencies from that density and stacking cosines and sines gives an
explicit 2D-dimensional embedding whose inner products approximate k.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ParameterError, ShapeError

DEFAULT_MULTIPLIERS = tuple(2.0 ** k for k in range(-3, 7))


def gaussian_kernel(x, y, sigma: float) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * sigma ** 2)))


def gaussian_gram(X, Y, sigma: float) -> np.ndarray:
    """Exact Gaussian kernel matrix between the rows of X and Y."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * sigma ** 2))


def derive_seed(master_seed: int, group_key, kernel_index: int) -> int:
    """Independent 64-bit seed for one (group, kernel) cell of a bank.

    ``group_key`` may be a group name or an index; names make the seed follow
    the group wherever it sits in the dataset.
    """
    if isinstance(group_key, str):
        key = int.from_bytes(hashlib.sha256(group_key.encode("utf-8")).digest()[:8], "little")
    else:
        key = int(group_key)
    ss = np.random.SeedSequence([int(master_seed) & (2 ** 64 - 1), key, int(kernel_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_omegas(d: int, D: int, sigma: float, seed: int) -> np.ndarray:
    """D x d frequency matrix with i.i.d. normal(0, 1/sigma^2) entries."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if d < 1 or D < 1:
        raise ParameterError(f"d and D must be positive, got d={d}, D={D}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((D, d)) / sigma


@dataclass(frozen=True)
class RffMap:
    """Frozen random Fourier embedding for one (group, bandwidth) pair."""

    omegas: np.ndarray
    sigma: float
    seed: int
    group_name: str = ""

    def __post_init__(self):
        om = np.array(self.omegas, dtype=np.float64)
        if om.ndim != 2:
            raise ShapeError(f"omegas must be D x d, got shape {om.shape}")
        om.setflags(write=False)
        object.__setattr__(self, "omegas", om)

    @classmethod
    def sample(cls, d: int, D: int, sigma: float, seed: int, group_name: str = "") -> "RffMap":
        return cls(sample_omegas(d, D, sigma, seed), float(sigma), int(seed), group_name)

    @property
    def fourier_size(self) -> int:
        return self.omegas.shape[0]

    @property
    def input_dim(self) -> int:
        return self.omegas.shape[1]

    @property
    def embedding_dim(self) -> int:
        return 2 * self.fourier_size

    def transform(self, X) -> np.ndarray:
        return transform(self, X)

    def to_dict(self) -> dict:
        return {
            "group_name": self.group_name,
            "sigma": self.sigma,
            "seed": self.seed,
            "fourier_size": self.fourier_size,
            "omegas": self.omegas.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RffMap":
        om = np.asarray(d["omegas"], dtype=np.float64)
        if om.shape[0] != d["fourier_size"]:
            raise ShapeError("omegas row count disagrees with fourier_size")
        return cls(om, float(d["sigma"]), int(d["seed"]), d.get("group_name", ""))


def transform(rff_map: RffMap, X) -> np.ndarray:
    """Rows (1/sqrt(D)) [cos(w_1.x) .. cos(w_D.x), sin(w_1.x) .. sin(w_D.x)]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != rff_map.input_dim:
        raise ShapeError(f"map expects {rff_map.input_dim} columns, got {X.shape[1]}")
    proj = X @ rff_map.omegas.T
    out = np.empty((X.shape[0], 2 * rff_map.fourier_size))
    np.cos(proj, out=out[:, : rff_map.fourier_size])
    np.sin(proj, out=out[:, rff_map.fourier_size:])
    out /= np.sqrt(rff_map.fourier_size)
    return out


@dataclass(frozen=True)
class BandwidthSchedule:
    multipliers: tuple = DEFAULT_MULTIPLIERS
    scale_by_sqrt_dim: bool = True

    def __post_init__(self):
        m = tuple(float(v) for v in self.multipliers)
        if not m:
            raise ParameterError("bandwidth schedule is empty")
        if any(v <= 0 for v in m):
            raise ParameterError(f"bandwidth multipliers must be positive: {m}")
        if any(b <= a for a, b in zip(m, m[1:])):
            raise ParameterError(f"bandwidth multipliers must be strictly increasing: {m}")
        object.__setattr__(self, "multipliers", m)

    def sigmas(self, dim: int) -> list:
        scale = np.sqrt(dim) if self.scale_by_sqrt_dim else 1.0
        return [float(m * scale) for m in self.multipliers]


def make_schedule(group_dims, schedule: BandwidthSchedule = BandwidthSchedule()) -> list:
    """Flat list of (group index, sigma) pairs, group-major."""
    pairs = []
    for l, d in enumerate(group_dims):
        if d < 1:
            raise ParameterError(f"group dims must be positive, got {d}")
        pairs.extend((l, s) for s in schedule.sigmas(d))
    return pairs
