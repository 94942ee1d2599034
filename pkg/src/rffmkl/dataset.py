"""Grouped binary-classification datasets: loading, standardization, splits
and synthetic fixtures.

A dataset is an ordered list of named feature groups (e.g. CSF / HIPL / HIPR /
ROI) sharing one label vector in {-1, +1}.  Everything here is pure given its
inputs and seed; datasets are immutable once built.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    ConfigurationError,
    LabelError,
    ManifestError,
    ParseError,
    ShapeError,
    SplitError,
)

STD_FLOOR = 1e-12


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    values: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim == 1:
            values = _frozen(values[:, None])
        if values.ndim != 2 or values.shape[1] < 1:
            raise ShapeError(f"group {self.name!r}: expected an n x d matrix with d >= 1, "
                             f"got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError(f"group {self.name!r} contains non-finite values")
        columns = tuple(self.columns) or tuple(f"{self.name}[{j}]" for j in range(values.shape[1]))
        if len(columns) != values.shape[1]:
            raise ShapeError(f"group {self.name!r}: {len(columns)} column names for "
                             f"{values.shape[1]} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", columns)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GroupedDataset:
    groups: tuple
    labels: np.ndarray

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise ConfigurationError("a dataset needs at least one feature group")
        labels = np.array(self.labels, dtype=np.int64).ravel()
        if not np.all((labels == 1) | (labels == -1)):
            raise LabelError("labels must be -1 or +1")
        labels.setflags(write=False)
        names = [g.name for g in groups]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate group names: {names}")
        for g in groups:
            if g.values.shape[0] != labels.shape[0]:
                raise ShapeError(f"group {g.name!r} has {g.values.shape[0]} rows, "
                                 f"labels have {labels.shape[0]}")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def group_names(self) -> list:
        return [g.name for g in self.groups]

    @property
    def group_dims(self) -> list:
        return [g.dim for g in self.groups]

    def group(self, name: str) -> FeatureGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise ConfigurationError(f"unknown group {name!r}; have {self.group_names}")

    def subset(self, idx) -> "GroupedDataset":
        """Rows ``idx`` in the given order."""
        idx = np.asarray(idx, dtype=np.int64)
        return GroupedDataset(
            tuple(FeatureGroup(g.name, g.values[idx], g.columns) for g in self.groups),
            self.labels[idx],
        )

    def select_groups(self, names: Sequence[str]) -> "GroupedDataset":
        return GroupedDataset(tuple(self.group(n) for n in names), self.labels)

    def flatten(self, name: str = "all") -> "GroupedDataset":
        """Single-group view formed by column-concatenating every group."""
        values = np.hstack([g.values for g in self.groups])
        columns = sum((g.columns for g in self.groups), ())
        return GroupedDataset((FeatureGroup(name, values, columns),), self.labels)

    def split_columns(self) -> "GroupedDataset":
        """One dim-1 group per feature column, named after the column."""
        groups = []
        for g in self.groups:
            for j, col in enumerate(g.columns):
                groups.append(FeatureGroup(col, g.values[:, j:j + 1], (col,)))
        return GroupedDataset(tuple(groups), self.labels)

    def class_counts(self) -> tuple:
        return int(np.sum(self.labels == 1)), int(np.sum(self.labels == -1))

    def require_both_classes(self):
        pos, neg = self.class_counts()
        if pos == 0 or neg == 0:
            raise LabelError(f"training data must contain both classes (pos={pos}, neg={neg})")


# ----------------------------------------------------------------------------
# CSV + manifest


@dataclass(frozen=True)
class GroupSpec:
    name: str
    columns: tuple  # (start, end) inclusive; header names or 0-based indices


@dataclass(frozen=True)
class GroupManifest:
    label_column: str
    positive_label: str
    negative_label: str
    groups: tuple
    standardize: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "GroupManifest":
        try:
            groups = tuple(GroupSpec(str(g["name"]), tuple(g["columns"])) for g in d["groups"])
            manifest = cls(
                label_column=d["label_column"],
                positive_label=str(d["positive_label"]),
                negative_label=str(d["negative_label"]),
                groups=groups,
                standardize=tuple(d.get("standardize", ())),
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed manifest: {exc!r}") from exc
        for g in manifest.groups:
            if len(g.columns) != 2:
                raise ManifestError(f"group {g.name!r}: columns must be [start, end]")
        names = [g.name for g in manifest.groups]
        if len(set(names)) != len(names):
            raise ManifestError(f"duplicate group names in manifest: {names}")
        unknown = set(manifest.standardize) - set(names)
        if unknown:
            raise ManifestError(f"standardize lists unknown groups {sorted(unknown)}")
        return manifest

    @classmethod
    def load(cls, path) -> "GroupManifest":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "label_column": self.label_column,
            "positive_label": self.positive_label,
            "negative_label": self.negative_label,
            "groups": [{"name": g.name, "columns": list(g.columns)} for g in self.groups],
            "standardize": list(self.standardize),
        }


def _column_index(ref, header: list, what: str) -> int:
    if isinstance(ref, bool):
        raise ManifestError(f"{what}: invalid column reference {ref!r}")
    if isinstance(ref, int):
        idx = ref
    elif isinstance(ref, str) and ref in header:
        idx = header.index(ref)
    elif isinstance(ref, str) and ref.lstrip("-").isdigit():
        idx = int(ref)
    else:
        raise ManifestError(f"{what}: column {ref!r} not found in header")
    if not 0 <= idx < len(header):
        raise ManifestError(f"{what}: column index {idx} out of bounds (0..{len(header) - 1})")
    return idx


def load_csv(data_path, manifest: GroupManifest) -> GroupedDataset:
    """Read a header-row CSV into a GroupedDataset laid out by ``manifest``."""
    data_path = Path(data_path)
    with open(data_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{data_path}: empty file")
    header = [h.strip() for h in rows[0]]
    label_idx = _column_index(manifest.label_column, header, "label_column")

    spans = []
    owner = {}
    for g in manifest.groups:
        start = _column_index(g.columns[0], header, f"group {g.name!r}")
        end = _column_index(g.columns[1], header, f"group {g.name!r}")
        if end < start:
            raise ManifestError(f"group {g.name!r}: end column precedes start column")
        for c in range(start, end + 1):
            if c == label_idx:
                raise ManifestError(f"group {g.name!r} covers the label column {header[c]!r}")
            if c in owner:
                raise ManifestError(f"groups {owner[c]!r} and {g.name!r} overlap at "
                                    f"column {header[c]!r}")
            owner[c] = g.name
        spans.append((g.name, start, end))

    body = rows[1:]
    n = len(body)
    matrix = np.empty((n, len(header)), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    used = sorted(owner)
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise ParseError(f"{data_path}: line {line} has {len(row)} fields, "
                             f"header has {len(header)}")
        token = row[label_idx].strip()
        if token == manifest.positive_label:
            labels[i] = 1
        elif token == manifest.negative_label:
            labels[i] = -1
        else:
            raise LabelError(f"{data_path}: line {line}: label {token!r} is neither "
                             f"{manifest.positive_label!r} nor {manifest.negative_label!r}")
        for c in used:
            cell = row[c].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError(f"{data_path}: line {line}, column {header[c]!r}: "
                                 f"missing or non-numeric value {cell!r}")
            matrix[i, c] = v

    groups = tuple(
        FeatureGroup(name, matrix[:, start:end + 1], tuple(header[start:end + 1]))
        for name, start, end in spans
    )
    return GroupedDataset(groups, labels)


def save_csv(data: GroupedDataset, data_path, manifest_path, standardize=()) -> GroupManifest:
    """Write ``data`` as CSV plus a manifest that ``load_csv`` reads back exactly."""
    header = []
    groups = []
    for g in data.groups:
        groups.append({"name": g.name, "columns": [g.columns[0], g.columns[-1]]})
        header.extend(g.columns)
    header.append("label")
    values = np.hstack([g.values for g in data.groups])
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, y in zip(values, data.labels):
            w.writerow([repr(float(v)) for v in row] + ["1" if y == 1 else "-1"])
    manifest = GroupManifest.from_dict({
        "label_column": "label",
        "positive_label": "1",
        "negative_label": "-1",
        "groups": groups,
        "standardize": list(standardize),
    })
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")
    return manifest


# ----------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column training statistics; std uses the population (1/n) convention."""

    means: dict
    stds: dict
    dims: dict
    floor: float = STD_FLOOR

    @property
    def standardized_groups(self) -> frozenset:
        return frozenset(self.means)


def fit_standardizer(train: GroupedDataset, group_names: Iterable[str],
                     floor: float = STD_FLOOR) -> StandardizationParams:
    names = list(group_names)
    known = set(train.group_names)
    unknown = [n for n in names if n not in known]
    if unknown:
        raise ConfigurationError(f"cannot standardize unknown groups {unknown}")
    means, stds = {}, {}
    for name in names:
        v = train.group(name).values
        means[name] = _frozen(v.mean(axis=0))
        stds[name] = _frozen(np.maximum(v.std(axis=0), floor))
    dims = {g.name: g.dim for g in train.groups}
    return StandardizationParams(means, stds, dims, floor)


def apply_standardizer(params: StandardizationParams, data: GroupedDataset) -> GroupedDataset:
    if {g.name: g.dim for g in data.groups} != params.dims:
        raise ShapeError("dataset groups/dims differ from those the standardizer was fitted on")
    groups = []
    for g in data.groups:
        if g.name in params.means:
            std = params.stds[g.name]
            z = (g.values - params.means[g.name]) / std
            # constant training columns map to 0 for every row
            z[:, std <= params.floor] = 0.0
            groups.append(FeatureGroup(g.name, z, g.columns))
        else:
            groups.append(g)
    return GroupedDataset(tuple(groups), data.labels)


# ----------------------------------------------------------------------------
# splits


def _stratified_counts(class_sizes, fraction):
    """Largest-remainder allocation of round(fraction * n) across classes."""
    sizes = np.asarray(class_sizes)
    target = int(round(fraction * sizes.sum()))
    exact = fraction * sizes
    counts = np.floor(exact).astype(int)
    order = np.argsort(-(exact - counts), kind="stable")
    for c in order[: target - counts.sum()]:
        counts[c] += 1
    return counts


def random_split_indices(labels, train_fraction: float, seed: int):
    """Stratified (train_idx, test_idx), each sorted ascending."""
    labels = np.asarray(labels)
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    classes = [np.flatnonzero(labels == 1), np.flatnonzero(labels == -1)]
    sizes = [len(c) for c in classes]
    if len(labels) < 2 or min(sizes) == 0:
        raise SplitError(f"split needs both classes present (class sizes {sizes})")
    counts = _stratified_counts(sizes, train_fraction)
    for size, k in zip(sizes, counts):
        if k < 1 or size - k < 1:
            raise SplitError(f"a class of {size} samples cannot be split {k}/{size - k} "
                             f"at train_fraction={train_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for members, k in zip(classes, counts):
        perm = rng.permutation(members)
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def random_split(data: GroupedDataset, train_fraction: float, seed: int):
    tr, te = random_split_indices(data.labels, train_fraction, seed)
    return data.subset(tr), data.subset(te)


def kfold_indices(n: int, k: int, labels, seed: int) -> list:
    """Stratified k-fold: list of (train_idx, test_idx), indices sorted."""
    labels = np.asarray(labels)
    if k < 2:
        raise ConfigurationError(f"k must be at least 2, got {k}")
    if k > n:
        raise ConfigurationError(f"k={k} exceeds the number of samples n={n}")
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for n={n}")
    rng = np.random.default_rng(seed)
    # deal each class (shuffled) round-robin so fold sizes differ by at most one
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in (1, -1)])
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    folds = []
    for f in range(k):
        folds.append((np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)))
    return folds


# ----------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthSpec:
    """Two-class Gaussian groups; informative groups carry class means +/- mu * u."""

    group_dims: tuple
    informative: tuple = ()
    mu: float = 2.0
    noise_std: float = 1.0
    n_samples: int = 200
    positive_fraction: float = 0.5
    group_names: tuple = ()
    standardize: tuple = ()

    def names(self) -> list:
        if self.group_names:
            return list(self.group_names)
        return [f"g{l}" for l in range(len(self.group_dims))]

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown synth fields {sorted(extra)}")
        d = dict(d)
        for key in ("group_dims", "informative", "group_names", "standardize"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "group_dims": list(self.group_dims),
            "informative": list(self.informative),
            "mu": self.mu,
            "noise_std": self.noise_std,
            "n_samples": self.n_samples,
            "positive_fraction": self.positive_fraction,
            "group_names": self.names(),
            "standardize": list(self.standardize),
        }


SYNTH_PRESETS = {
    # 2 informative + 6 noise groups
    "groups8": SynthSpec(group_dims=(3, 5, 5, 8, 4, 4, 6, 6), informative=(0, 3), mu=2.0,
                         n_samples=200),
    # linearly separable: one informative group among four
    "separable": SynthSpec(group_dims=(3, 5, 5, 8), informative=(0,), mu=5.0, n_samples=200),
    # same group layout as the CSF/HIPL/HIPR/ROI cohort (70 controls, 50 converters)
    "ad": SynthSpec(group_dims=(3, 63, 63, 100), informative=(0, 3), mu=1.0, n_samples=120,
                    positive_fraction=50 / 120, group_names=("CSF", "HIPL", "HIPR", "ROI"),
                    standardize=("CSF", "ROI")),
    # 5 informative single columns among 50
    "planted": SynthSpec(group_dims=(1,) * 50, informative=(3, 11, 24, 37, 45), mu=1.0,
                         n_samples=300),
    # labels independent of features
    "null": SynthSpec(group_dims=(3, 5, 5, 8), informative=(), mu=0.0, n_samples=200),
}


def synth_grouped(spec: SynthSpec, seed: int) -> GroupedDataset:
    names = spec.names()
    if len(names) != len(spec.group_dims):
        raise ConfigurationError("group_names and group_dims differ in length")
    if any(d < 1 for d in spec.group_dims):
        raise ConfigurationError(f"group dims must be positive: {spec.group_dims}")
    informative = set()
    for ref in spec.informative:
        informative.add(names.index(ref) if isinstance(ref, str) else int(ref))
    if not informative and spec.mu > 0:
        raise ConfigurationError("mu > 0 requested but no group is informative")
    if not all(0 <= l < len(names) for l in informative):
        raise ConfigurationError(f"informative group out of range: {spec.informative}")
    n = spec.n_samples
    n_pos = int(round(n * spec.positive_fraction))
    if n < 2 or not 0 < n_pos < n:
        raise ConfigurationError(f"cannot draw both classes with n={n}, "
                                 f"positive_fraction={spec.positive_fraction}")

    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.r_[np.ones(n_pos, np.int64), -np.ones(n - n_pos, np.int64)])
    groups = []
    for l, (name, d) in enumerate(zip(names, spec.group_dims)):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        x = spec.noise_std * rng.standard_normal((n, d))
        if l in informative:
            x += spec.mu * labels[:, None] * u[None, :]
        cols = tuple(f"{name}_{j}" for j in range(d))
        groups.append(FeatureGroup(name, x, cols))
    return GroupedDataset(tuple(groups), labels)
