"""Dataset schemas, packet records and attack taxonomy.

Two industrial captures are modelled: a gas pipeline testbed polled over
Modbus (``ds1-modbus``) and a batch water process logged over OPC UA
(``ds2-opcua``).  Feature values are held as one float64 matrix with NaN
for missing cells; label columns are integer arrays with -1 for missing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingLabels, UnknownSchema


class ColumnKind(enum.Enum):
    """Role of a column within a capture."""

    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    BINARY_LABEL = "binary_label"
    CATEGORY_LABEL = "category_label"
    SPECIFIC_LABEL = "specific_label"
    TIMESTAMP = "timestamp"


LABEL_KINDS = (
    ColumnKind.BINARY_LABEL,
    ColumnKind.CATEGORY_LABEL,
    ColumnKind.SPECIFIC_LABEL,
)


@dataclass(frozen=True)
class FeatureColumn:
    """One named column.

    ``categories`` carries the ordered category names and is present exactly
    when ``kind`` is CATEGORICAL; stored cell values for such columns are the
    integer position of the category within that tuple.
    """

    name: str
    kind: ColumnKind
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.kind is ColumnKind.CATEGORICAL) != (self.categories is not None):
            raise ValueError(
                f"column {self.name!r}: categories must be given for categorical "
                "columns and only for them"
            )
        if self.categories is not None and len(self.categories) < 2:
            raise ValueError(f"column {self.name!r}: needs at least two categories")


@dataclass(frozen=True)
class AttackCategory:
    """One row of the attack taxonomy."""

    code: int
    name: str
    description: str


ATTACK_CATEGORIES = (
    AttackCategory(0, "Normal", "Instances not part of an attack"),
    AttackCategory(1, "NMRI", "Naive malicious response injection"),
    AttackCategory(2, "CMRI", "Complex malicious response injection"),
    AttackCategory(3, "MSCI", "Malicious state command injection"),
    AttackCategory(4, "MPCI", "Malicious parameter command injection"),
    AttackCategory(5, "MFCI", "Malicious function code injection"),
    AttackCategory(6, "DoS", "Denial of service"),
    AttackCategory(7, "Recon", "Reconnaissance"),
)


def attack_category(code: int) -> AttackCategory:
    """Look up a taxonomy row by its integer code."""
    for cat in ATTACK_CATEGORIES:
        if cat.code == code:
            return cat
    raise KeyError(f"unknown attack category code {code}")


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered column declaration for one capture format."""

    schema_id: str
    columns: tuple[FeatureColumn, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(n.lower() for n in names)) != len(names):
            raise ValueError("duplicate column names in schema")
        n_binary = sum(c.kind is ColumnKind.BINARY_LABEL for c in self.columns)
        n_cat = sum(c.kind is ColumnKind.CATEGORY_LABEL for c in self.columns)
        n_spec = sum(c.kind is ColumnKind.SPECIFIC_LABEL for c in self.columns)
        n_ts = sum(c.kind is ColumnKind.TIMESTAMP for c in self.columns)
        if n_binary > 1 or n_cat > 1 or n_spec > 1 or n_ts > 1:
            raise ValueError("at most one column per label/timestamp kind")
        if (n_cat or n_spec) and not n_binary:
            raise ValueError("category/specific labels require a binary label column")

    # -- derived views -------------------------------------------------------

    @property
    def value_columns(self) -> tuple[FeatureColumn, ...]:
        """All non-label columns, in declaration order (timestamp included)."""
        return tuple(c for c in self.columns if c.kind not in LABEL_KINDS)

    @property
    def feature_columns(self) -> tuple[FeatureColumn, ...]:
        """Columns eligible as model features: non-label, non-timestamp."""
        return tuple(
            c for c in self.columns
            if c.kind not in LABEL_KINDS and c.kind is not ColumnKind.TIMESTAMP
        )

    @property
    def label_columns(self) -> tuple[FeatureColumn, ...]:
        return tuple(c for c in self.columns if c.kind in LABEL_KINDS)

    @property
    def timestamp_index(self) -> int | None:
        """Position of the timestamp column among the value columns, if any."""
        for i, c in enumerate(self.value_columns):
            if c.kind is ColumnKind.TIMESTAMP:
                return i
        return None

    def value_index(self, name: str) -> int:
        for i, c in enumerate(self.value_columns):
            if c.name == name:
                return i
        raise KeyError(name)


def _nc(name):
    return FeatureColumn(name, ColumnKind.NUMERIC)


def _cc(name, categories):
    return FeatureColumn(name, ColumnKind.CATEGORICAL, tuple(categories))


_DS1_COLUMNS = (
    _nc("Address"),
    _nc("Function Code"),
    _nc("Length of Packet"),
    _nc("Setpoint"),
    _nc("Gain"),
    _nc("Reset Rate"),
    _nc("Deadband"),
    _nc("Cycle Time"),
    _nc("Rate"),
    _cc("System Mode", ("0", "1", "2")),
    _cc("Control Scheme", ("0", "1")),
    _cc("Pump", ("0", "1")),
    _cc("Solenoid", ("0", "1")),
    _nc("Pressure Measurement"),
    _nc("CRC Rate"),
    _cc("Command Response", ("0", "1")),
    FeatureColumn("Time", ColumnKind.TIMESTAMP),
    FeatureColumn("Binary Attack", ColumnKind.BINARY_LABEL),
    FeatureColumn("Categorised Attack", ColumnKind.CATEGORY_LABEL),
    FeatureColumn("Specific Attack", ColumnKind.SPECIFIC_LABEL),
)

_DS2_COLUMNS = (
    _nc("Water Temperature"),
    _nc("Water flow volume"),
    _nc("Water level container 1"),
    _nc("Water level Container 2"),
    _nc("Water pressure"),
    _cc("S111", ("0", "1")),
    _cc("S113", ("0", "1")),
    _cc("Pump running", ("0", "1")),
    _cc("Pump status", ("0", "1")),
    _cc("S112", ("0", "1")),
    _cc("B114", ("0", "1")),
    _cc("Ball valve acknowledge", ("0", "1")),
    FeatureColumn("Binary Attack", ColumnKind.BINARY_LABEL),
)

_BUILTIN = {
    "ds1-modbus": DatasetSchema("ds1-modbus", _DS1_COLUMNS),
    "ds2-opcua": DatasetSchema("ds2-opcua", _DS2_COLUMNS),
}


def builtin_schema(schema_id: str) -> DatasetSchema:
    """Return one of the shipped capture schemas.

    Raises UnknownSchema for identifiers outside the shipped set.
    """
    try:
        return _BUILTIN[schema_id]
    except KeyError:
        known = ", ".join(sorted(_BUILTIN))
        raise UnknownSchema(f"no builtin schema {schema_id!r} (known: {known})") from None


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet/log row.

    ``values`` is aligned with the schema's value columns; None marks a
    missing cell.  Labels are None when unlabeled.
    """

    values: tuple[float | None, ...]
    binary_label: int | None = None
    category_label: int | None = None
    specific_label: int | None = None


@dataclass(frozen=True)
class Dataset:
    """A labelled (or unlabelled) capture bound to its schema.

    ``values`` has one column per schema value column and NaN for missing
    cells.  Label arrays use -1 for a missing label; a label array that
    would be entirely missing is normalised to None at construction.
    """

    schema: DatasetSchema
    values: np.ndarray
    binary_labels: np.ndarray | None = None
    category_labels: np.ndarray | None = None
    specific_labels: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(self.schema.value_columns):
            raise ValueError(
                f"values must be (n, {len(self.schema.value_columns)}), "
                f"got {vals.shape}"
            )
        object.__setattr__(self, "values", vals)
        for attr in ("binary_labels", "category_labels", "specific_labels"):
            lab = getattr(self, attr)
            if lab is None:
                continue
            lab = np.asarray(lab, dtype=np.int64)
            if lab.shape != (vals.shape[0],):
                raise ValueError(f"{attr} must have one entry per row")
            if lab.size and (lab == -1).all():
                lab = None
            object.__setattr__(self, attr, lab)
        self.values.flags.writeable = False
        for attr in ("binary_labels", "category_labels", "specific_labels"):
            lab = getattr(self, attr)
            if lab is not None:
                lab.flags.writeable = False

    # -- views --------------------------------------------------------------

    @property
    def n_records(self) -> int:
        return self.values.shape[0]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def timestamps(self) -> np.ndarray:
        """Interpolation ordinate: the timestamp column if declared, else 0..n-1."""
        ts = self.schema.timestamp_index
        if ts is None:
            return np.arange(self.n_records, dtype=np.float64)
        return self.values[:, ts]

    def record(self, i: int) -> PacketRecord:
        row = self.values[i]
        vals = tuple(None if math.isnan(v) else float(v) for v in row)

        def lab(arr):
            if arr is None or arr[i] < 0:
                return None
            return int(arr[i])

        return PacketRecord(
            vals,
            lab(self.binary_labels),
            lab(self.category_labels),
            lab(self.specific_labels),
        )

    def records(self):
        return [self.record(i) for i in range(self.n_records)]

    @classmethod
    def from_records(cls, schema: DatasetSchema, records) -> "Dataset":
        n_cols = len(schema.value_columns)
        vals = np.full((len(records), n_cols), np.nan)
        has_labels = {"binary": False, "category": False, "specific": False}
        labs = {k: np.full(len(records), -1, dtype=np.int64) for k in has_labels}
        for i, r in enumerate(records):
            if len(r.values) != n_cols:
                raise ValueError(f"record {i} has {len(r.values)} values, want {n_cols}")
            for j, v in enumerate(r.values):
                if v is not None:
                    vals[i, j] = v
            for key, v in (("binary", r.binary_label),
                           ("category", r.category_label),
                           ("specific", r.specific_label)):
                if v is not None:
                    labs[key][i] = v
                    has_labels[key] = True
        return cls(
            schema,
            vals,
            labs["binary"] if has_labels["binary"] else None,
            labs["category"] if has_labels["category"] else None,
            labs["specific"] if has_labels["specific"] else None,
        )

    def equals(self, other: "Dataset") -> bool:
        """Value equality with NaN cells compared as equal."""
        if self.schema != other.schema or self.values.shape != other.values.shape:
            return False
        if not np.array_equal(self.values, other.values, equal_nan=True):
            return False
        for attr in ("binary_labels", "category_labels", "specific_labels"):
            a, b = getattr(self, attr), getattr(other, attr)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def class_balance(d: Dataset):
    """Attack fraction plus per-category counts.

    Requires every record to carry a binary label.  The count map is keyed
    by AttackCategory and is None when the dataset has no category labels.
    """
    if d.binary_labels is None:
        raise MissingLabels("dataset carries no binary attack labels")
    if (d.binary_labels < 0).any():
        raise MissingLabels("some records are missing their binary attack label")
    if d.n_records == 0:
        raise MissingLabels("dataset has no records")
    fraction = float(np.count_nonzero(d.binary_labels == 1)) / d.n_records
    counts = None
    if d.category_labels is not None:
        counts = {}
        codes, ns = np.unique(d.category_labels[d.category_labels >= 0],
                              return_counts=True)
        for code, n in zip(codes, ns):
            counts[attack_category(int(code))] = int(n)
    return fraction, counts


@dataclass(frozen=True)
class Violation:
    """One record-level rule violation found by validate()."""

    record_index: int
    column: str
    rule: str


def validate(d: Dataset) -> list[Violation]:
    """Check every record against the schema's record-level rules.

    Rules checked per record: categorical cells must hold an integer code
    inside the declared category list; a nonzero category label requires
    binary label 1 and a zero category label requires binary label 0;
    specific labels must not contradict the binary label in the same way.
    Returns an empty list when the dataset is clean.
    """
    out: list[Violation] = []
    vcols = d.schema.value_columns
    for j, col in enumerate(vcols):
        if col.kind is not ColumnKind.CATEGORICAL:
            continue
        column = d.values[:, j]
        ok = np.isnan(column) | (
            (column == np.floor(column))
            & (column >= 0)
            & (column < len(col.categories))
        )
        for i in np.nonzero(~ok)[0]:
            out.append(Violation(int(i), col.name, "categorical code out of range"))

    if d.binary_labels is not None:
        bl_name = next(c.name for c in d.schema.columns
                       if c.kind is ColumnKind.BINARY_LABEL)
        bad = (d.binary_labels >= 0) & ~np.isin(d.binary_labels, (0, 1))
        for i in np.nonzero(bad)[0]:
            out.append(Violation(int(i), bl_name, "binary label not in {0, 1}"))

    for arr, kind in ((d.category_labels, ColumnKind.CATEGORY_LABEL),
                      (d.specific_labels, ColumnKind.SPECIFIC_LABEL)):
        if arr is None or d.binary_labels is None:
            continue
        name = next(c.name for c in d.schema.columns if c.kind is kind)
        both = (arr >= 0) & (d.binary_labels >= 0)
        clash = both & ((arr > 0) != (d.binary_labels == 1))
        for i in np.nonzero(clash)[0]:
            out.append(Violation(int(i), name, "label disagrees with binary label"))
        if kind is ColumnKind.CATEGORY_LABEL:
            known = [c.code for c in ATTACK_CATEGORIES]
            bad = (arr >= 0) & ~np.isin(arr, known)
            for i in np.nonzero(bad)[0]:
                out.append(Violation(int(i), name, "unknown attack category code"))

    out.sort(key=lambda v: (v.record_index, v.column, v.rule))
    return out
