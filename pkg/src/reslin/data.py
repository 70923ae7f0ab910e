"""Datasets, feature construction, random train/validation splitting, empirical
bounds, and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import seeded_rng

__all__ = [
    "BoundsPair",
    "Dataset",
    "SplitResult",
    "featurize",
    "empirical_bounds",
    "split_dataset",
    "load_dataset_csv",
    "save_dataset_csv",
]


@dataclass(frozen=True)
class BoundsPair:
    """Lower/upper bounds of some quantity, with their provenance.

    ``source`` records whether the pair was measured from data ("empirical")
    or supplied as prior knowledge ("assumed").
    """

    lower: float
    upper: float
    source: str = "empirical"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("bounds must be finite")
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        if self.source not in ("empirical", "assumed"):
            raise ValueError(f"unknown bounds source {self.source!r}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def featurize(raw: np.ndarray, intercept: bool = True) -> np.ndarray:
    """Prepend a constant-1 intercept feature when ``intercept`` is on.

    Accepts a single vector or an (n, k) matrix of raw inputs; entries must be
    finite.  With ``intercept`` off this is an identity copy.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim not in (1, 2):
        raise ValueError("raw input must be a vector or a matrix")
    if not np.isfinite(x).all():
        raise ValueError("raw input contains non-finite entries")
    if not intercept:
        return x.copy()
    if x.ndim == 1:
        return np.concatenate(([1.0], x))
    return np.hstack([np.ones((x.shape[0], 1)), x])


def empirical_bounds(values) -> BoundsPair:
    """Empirical (min, max) bounds of a non-empty collection of finite reals."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot bound an empty collection")
    if not np.isfinite(v).all():
        raise ValueError("values contain non-finite entries")
    return BoundsPair(float(v.min()), float(v.max()), source="empirical")


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Labeled samples plus an optional pool of unlabeled feature vectors.

    ``features`` and ``unlabeled`` hold featurized rows (intercept column
    first when ``intercept`` is on).  Arrays are copied and made read-only at
    construction, so datasets are safe to share across threads and workers.
    """

    features: np.ndarray
    labels: np.ndarray
    unlabeled: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    intercept: bool = True

    def __post_init__(self) -> None:
        feats = _frozen(np.atleast_2d(self.features))
        labels = _frozen(np.asarray(self.labels, dtype=float).ravel())
        unl = np.asarray(self.unlabeled, dtype=float)
        if unl.size == 0:
            unl = np.empty((0, feats.shape[1]))
        unl = _frozen(np.atleast_2d(unl))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "unlabeled", unl)
        if feats.shape[0] != labels.shape[0]:
            raise ValueError("one label per labeled sample required")
        if feats.shape[1] < 1:
            raise ValueError("feature dimension must be at least 1")
        if unl.shape[1] != feats.shape[1]:
            raise ValueError("unlabeled features must share the labeled dimension")
        if not (np.isfinite(feats).all() and np.isfinite(labels).all() and np.isfinite(unl).all()):
            raise ValueError("dataset contains non-finite entries")
        if self.intercept:
            if feats.shape[0] and not (feats[:, 0] == 1.0).all():
                raise ValueError("intercept mode requires a constant-1 first feature")
            if unl.shape[0] and not (unl[:, 0] == 1.0).all():
                raise ValueError("intercept mode requires a constant-1 first feature")

    @classmethod
    def from_raw(
        cls,
        raw_features: np.ndarray,
        labels: np.ndarray,
        raw_unlabeled: np.ndarray | None = None,
        intercept: bool = True,
    ) -> "Dataset":
        """Build a dataset from raw inputs, applying featurization."""
        feats = featurize(np.atleast_2d(np.asarray(raw_features, dtype=float)), intercept)
        if raw_unlabeled is None or np.asarray(raw_unlabeled).size == 0:
            unl = np.empty((0, feats.shape[1]))
        else:
            unl = featurize(np.atleast_2d(np.asarray(raw_unlabeled, dtype=float)), intercept)
        return cls(feats, labels, unl, intercept)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled.shape[0]

    @property
    def n_total(self) -> int:
        return self.n + self.n_unlabeled

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def raw_features(self) -> np.ndarray:
        """Labeled inputs with the intercept column stripped."""
        return self.features[:, 1:] if self.intercept else self.features

    @property
    def raw_unlabeled(self) -> np.ndarray:
        return self.unlabeled[:, 1:] if self.intercept else self.unlabeled

    @property
    def all_features(self) -> np.ndarray:
        """Featurized labeled and unlabeled rows stacked together."""
        if self.n_unlabeled == 0:
            return self.features
        return np.vstack([self.features, self.unlabeled])


@dataclass(frozen=True)
class SplitResult:
    """Disjoint train/validation views of a dataset's labeled samples.

    Membership is determined solely by ``(split_seed, ratio)`` given the
    dataset order; the same inputs always reproduce the same partition.
    """

    train: Dataset
    validation: Dataset
    split_seed: int
    ratio: float
    train_indices: np.ndarray
    validation_indices: np.ndarray


def split_dataset(dataset: Dataset, ratio: float, seed: int) -> SplitResult:
    """Uniformly random partition via seeded shuffle then prefix-take.

    The train side receives ``round(ratio * N)`` samples.  A uniformly random
    partition keeps validation losses independent of any model fitted on the
    train side, which the downstream estimator relies on.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly inside (0, 1)")
    n = dataset.n
    if n < 2:
        raise ValueError("need at least two labeled samples to split")
    n1 = int(round(ratio * n))
    if not 1 <= n1 <= n - 1:
        raise ValueError(f"ratio {ratio} leaves an empty side for N={n}")
    perm = seeded_rng(seed).permutation(n)
    train_idx = perm[:n1]
    val_idx = perm[n1:]
    empty = np.empty((0, dataset.d))
    train = Dataset(dataset.features[train_idx], dataset.labels[train_idx], empty, dataset.intercept)
    val = Dataset(dataset.features[val_idx], dataset.labels[val_idx], empty, dataset.intercept)
    return SplitResult(train, val, int(seed), float(ratio), train_idx, val_idx)


def load_dataset_csv(path: str | Path, label_column: str, intercept: bool = True) -> Dataset:
    """Read a dataset from a headed CSV file.

    One column (named ``label_column``) holds the response; the remaining
    columns are raw features in file order.  Rows with a blank label cell
    become unlabeled feature vectors.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column)
        labeled_rows: list[list[float]] = []
        labels: list[float] = []
        unlabeled_rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            feats = []
            for col, cell in enumerate(row):
                if col == label_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[col]!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
            label_cell = row[label_idx].strip()
            if label_cell == "":
                unlabeled_rows.append(feats)
            else:
                try:
                    labels.append(float(label_cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {label_column!r}: "
                        f"cannot parse {label_cell!r} as a number"
                    ) from None
                labeled_rows.append(feats)
    if not labeled_rows:
        raise ValueError(f"{path}: no labeled rows found")
    raw = np.asarray(labeled_rows, dtype=float)
    raw_unl = np.asarray(unlabeled_rows, dtype=float) if unlabeled_rows else None
    return Dataset.from_raw(raw, np.asarray(labels), raw_unl, intercept)


def save_dataset_csv(dataset: Dataset, path: str | Path, label_column: str = "y") -> None:
    """Write a dataset back to the CSV schema understood by ``load_dataset_csv``.

    Floats are written with ``repr`` so a reload reproduces the numeric
    payload bit-for-bit.  Unlabeled rows get a blank label cell.
    """
    path = Path(path)
    n_raw = dataset.raw_features.shape[1]
    header = [label_column] + [f"x{i}" for i in range(n_raw)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for feats, label in zip(dataset.raw_features, dataset.labels):
            writer.writerow([repr(float(label))] + [repr(float(v)) for v in feats])
        for feats in dataset.raw_unlabeled:
            writer.writerow([""] + [repr(float(v)) for v in feats])
