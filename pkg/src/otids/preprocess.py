"""Missing-value repair, splitting, scaling and projection.

The interpolation step fills missing cells linearly against the capture's
time ordinate (the timestamp column when the schema declares one, record
ordinals otherwise), with flat fill past the first/last observation.
Splitting is stratified on the binary label with a seeded shuffle.
Scaling and projection are fitted on training rows only and carry
versioned JSON state so a pipeline can be replayed byte-for-byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_model import ColumnKind, Dataset
from .errors import (
    DegenerateDataError,
    EmptyColumn,
    EmptyInput,
    InvalidComponentCount,
    InvalidConfig,
    MissingLabels,
    NotInterpolated,
    ShapeMismatch,
    StratumTooSmall,
)
from . import serialize


@dataclass(frozen=True)
class FeatureMatrix:
    """Model-ready view of a dataset: float matrix plus missing-cell mask.

    Columns are the schema's feature columns (labels and the timestamp
    ordinate excluded) unless constructed otherwise.  data keeps NaN in
    masked cells.
    """

    data: np.ndarray
    mask: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if data.ndim != 2:
            raise ValueError("data must be 2-D")
        if mask.shape != data.shape:
            raise ValueError("mask shape must match data")
        if len(self.column_names) != data.shape[1]:
            raise ValueError("one name per column required")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        data.flags.writeable = False
        mask.flags.writeable = False

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def require_complete(self, what: str = "operation") -> None:
        if self.mask.any():
            n = int(self.mask.sum())
            raise NotInterpolated(
                f"{what} needs a complete matrix but {n} cells are missing; "
                "run interpolation first"
            )

    def select(self, indices) -> "FeatureMatrix":
        idx = list(indices)
        return FeatureMatrix(
            self.data[:, idx], self.mask[:, idx],
            tuple(self.column_names[i] for i in idx),
        )


def feature_matrix(d: Dataset, include_timestamp: bool = False) -> FeatureMatrix:
    """Extract the model feature matrix from a dataset.

    The timestamp column is the interpolation ordinate, not a model
    feature, so it is left out by default.
    """
    keep = []
    for i, c in enumerate(d.schema.value_columns):
        if c.kind is ColumnKind.TIMESTAMP and not include_timestamp:
            continue
        keep.append(i)
    data = d.values[:, keep]
    return FeatureMatrix(
        data, np.isnan(data),
        tuple(d.schema.value_columns[i].name for i in keep),
    )


def interpolate_time(d: Dataset, round_categorical: bool = False) -> Dataset:
    """Fill every missing cell by linear interpolation along time.

    Each column is interpolated independently between its nearest observed
    neighbours on the time ordinate; cells before the first or after the
    last observation take that observation's value.  Categorical columns
    are treated numerically like the rest (set round_categorical to snap
    their filled cells back to the nearest declared code).

    A column with no observed value at all raises EmptyColumn.  Records
    must already be in time order.
    """
    if d.n_records == 0:
        raise EmptyInput("cannot interpolate an empty dataset")
    values = np.array(d.values)  # writable copy
    cols = d.schema.value_columns
    ts_idx = d.schema.timestamp_index

    def fill(j: int, t: np.ndarray) -> None:
        col = values[:, j]
        miss = np.isnan(col)
        if not miss.any():
            return
        if miss.all():
            raise EmptyColumn(f"column {cols[j].name!r} has no observed values")
        col[miss] = np.interp(t[miss], t[~miss], col[~miss])
        if round_categorical and cols[j].kind is ColumnKind.CATEGORICAL:
            snapped = np.rint(col[miss])
            col[miss] = np.clip(snapped, 0, len(cols[j].categories) - 1)

    ordinal = np.arange(d.n_records, dtype=np.float64)
    if ts_idx is not None:
        fill(ts_idx, ordinal)
        t = values[:, ts_idx]
        if np.any(np.diff(t) < 0):
            raise DegenerateDataError(
                "timestamp column is not non-decreasing; sort records first"
            )
    else:
        t = ordinal
    for j in range(values.shape[1]):
        if j != ts_idx:
            fill(j, t)
    return Dataset(d.schema, values, d.binary_labels, d.category_labels,
                   d.specific_labels)


@dataclass(frozen=True)
class SplitIndices:
    """Row indices of a stratified train/test partition."""

    train: np.ndarray
    test: np.ndarray
    train_fraction: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train", np.asarray(self.train, dtype=np.int64))
        object.__setattr__(self, "test", np.asarray(self.test, dtype=np.int64))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(d: Dataset, train_fraction: float, seed: int) -> SplitIndices:
    """Split records per binary class with a seeded shuffle.

    Within each class the shuffled first round(count * train_fraction)
    records go to train (round = half-up).  Indices come back sorted, so
    both sides preserve capture order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfig(f"train_fraction must be in (0, 1), got {train_fraction}")
    if d.binary_labels is None or (d.binary_labels < 0).any():
        raise MissingLabels("stratified split needs a binary label on every record")
    labels = d.binary_labels
    rng = np.random.default_rng(seed)
    train_parts = []
    test_parts = []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if idx.size < 2:
            raise StratumTooSmall(
                f"class {cls} has only {idx.size} record(s); cannot stratify"
            )
        perm = rng.permutation(idx)
        k = _round_half_up(idx.size * train_fraction)
        train_parts.append(perm[:k])
        test_parts.append(perm[k:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return SplitIndices(train, test, train_fraction, seed)


def stratified_kfold(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded stratified k-fold partition; returns the k test-index arrays."""
    if folds < 2:
        raise InvalidConfig(f"folds must be >= 2, got {folds}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[] for _ in range(folds)]
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if idx.size < folds:
            raise StratumTooSmall(
                f"class {cls} has {idx.size} record(s), fewer than {folds} folds"
            )
        perm = rng.permutation(idx)
        for f, chunk in enumerate(np.array_split(perm, folds)):
            buckets[f].append(chunk)
    return [np.sort(np.concatenate(ch)) for ch in buckets]


@dataclass(frozen=True)
class ScalerState:
    """Per-column zero-mean scaling parameters (population standard deviation)."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))

    def to_json_dict(self) -> dict:
        return {
            "kind": "scaler",
            "schema_version": 1,
            "means": self.means,
            "stds": self.stds,
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ScalerState":
        serialize.require_kind(doc, "scaler", 1)
        return cls(np.array(doc["means"]), np.array(doc["stds"]))

    @classmethod
    def from_json(cls, text: str) -> "ScalerState":
        return cls.from_json_dict(serialize.loads(text))


def fit_scaler(m: FeatureMatrix, rows=None) -> ScalerState:
    """Fit zero-mean unit-variance scaling on the given rows (default: all).

    Uses the population standard deviation.  Constant columns record a
    standard deviation of 0 and are mapped to all zeros when applied.
    """
    m.require_complete("scaler fit")
    data = m.data if rows is None else m.data[np.asarray(rows)]
    if data.shape[0] == 0:
        raise EmptyInput("no rows to fit the scaler on")
    means = data.mean(axis=0)
    stds = data.std(axis=0)
    return ScalerState(means, stds)


def apply_scaler(s: ScalerState, m: FeatureMatrix) -> FeatureMatrix:
    m.require_complete("scaling")
    if m.cols != s.means.shape[0]:
        raise ShapeMismatch(
            f"scaler was fitted on {s.means.shape[0]} columns, matrix has {m.cols}"
        )
    safe = np.where(s.stds == 0.0, 1.0, s.stds)
    out = (m.data - s.means) / safe
    out[:, s.stds == 0.0] = 0.0
    return FeatureMatrix(out, np.zeros_like(out, dtype=bool), m.column_names)


@dataclass(frozen=True)
class PcaState:
    """Orthonormal projection fitted by eigendecomposition of the covariance."""

    mean: np.ndarray
    components: np.ndarray          # (k, d), rows orthonormal
    explained_variance: np.ndarray  # (k,), descending
    total_variance: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "components",
                           np.asarray(self.components, dtype=np.float64))
        object.__setattr__(self, "explained_variance",
                           np.asarray(self.explained_variance, dtype=np.float64))

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def explained_fraction(self) -> np.ndarray:
        if self.total_variance == 0.0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def to_json_dict(self) -> dict:
        return {
            "kind": "pca",
            "schema_version": 1,
            "mean": self.mean,
            "components": self.components,
            "explained_variance": self.explained_variance,
            "total_variance": self.total_variance,
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PcaState":
        serialize.require_kind(doc, "pca", 1)
        return cls(np.array(doc["mean"]), np.array(doc["components"]),
                   np.array(doc["explained_variance"]),
                   float(doc["total_variance"]))

    @classmethod
    def from_json(cls, text: str) -> "PcaState":
        return cls.from_json_dict(serialize.loads(text))


def fit_pca(m: FeatureMatrix, rows=None, n_components: int | None = None,
            variance_threshold: float | None = None) -> PcaState:
    """Fit a principal component projection on the given rows.

    Exactly one of n_components / variance_threshold must be set; the
    threshold form keeps the smallest component count whose cumulative
    explained-variance fraction reaches the threshold.  Components are
    eigenvectors of the population covariance, ordered by descending
    eigenvalue, each flipped so its largest-magnitude entry is positive.
    """
    if (n_components is None) == (variance_threshold is None):
        raise InvalidConfig("give exactly one of n_components or variance_threshold")
    m.require_complete("projection fit")
    data = m.data if rows is None else m.data[np.asarray(rows)]
    n, d = data.shape
    if n == 0:
        raise EmptyInput("no rows to fit the projection on")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    comps = eigvecs[:, order].T
    for r in range(comps.shape[0]):
        pivot = int(np.argmax(np.abs(comps[r])))
        if comps[r, pivot] < 0:
            comps[r] = -comps[r]
    total = float(eigvals.sum())

    if n_components is None:
        if not 0.0 < variance_threshold <= 1.0:
            raise InvalidConfig(
                f"variance_threshold must be in (0, 1], got {variance_threshold}"
            )
        if total == 0.0:
            raise DegenerateDataError(
                "matrix has zero variance; threshold selection is undefined"
            )
        frac = np.cumsum(eigvals) / total
        k = int(np.searchsorted(frac, variance_threshold - 1e-12) + 1)
        k = min(k, d)
    else:
        k = int(n_components)
        if not 1 <= k <= d:
            raise InvalidComponentCount(
                f"n_components must be in [1, {d}], got {k}"
            )
    return PcaState(mean, comps[:k], eigvals[:k], total)


def apply_pca(p: PcaState, m: FeatureMatrix) -> FeatureMatrix:
    m.require_complete("projection")
    if m.cols != p.components.shape[1]:
        raise ShapeMismatch(
            f"projection was fitted on {p.components.shape[1]} columns, "
            f"matrix has {m.cols}"
        )
    out = (m.data - p.mean) @ p.components.T
    names = tuple(f"pc{i + 1}" for i in range(p.n_components))
    return FeatureMatrix(out, np.zeros_like(out, dtype=bool), names)
