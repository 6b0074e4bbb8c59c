"""Readers and writers for capture files.

Two on-disk formats are supported: the ARFF subset used by fieldbus
capture distributions (@relation / @attribute / @data, '%' comments,
'?' missing cells, numeric and nominal attributes) and plain CSV.  Both
produce a Dataset bound to a declared schema plus an IngestReport with
row and missing-cell accounting.  write_canonical emits a normalised CSV
that survives a parse round trip bit-for-bit.

Missing markers accepted in cells: '?', the empty string and 'nan' in
any capitalisation.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .data_model import ColumnKind, Dataset, DatasetSchema, LABEL_KINDS
from .errors import ParseError, SchemaMismatch


def _norm_name(name: str) -> str:
    return " ".join(name.split()).lower()


def _is_missing(token: str) -> bool:
    t = token.strip()
    return t == "" or t == "?" or t.lower() == "nan"


@dataclass(frozen=True)
class IngestReport:
    """Accounting for one parsed file.

    rows_read counts rows accepted into the dataset; rejected rows are
    counted separately and never contribute cells.  Missing-cell counts
    cover the schema's value columns only, so
    missing_fraction = missing_cells / (rows_read * value column count).
    """

    rows_read: int
    rows_rejected: int
    missing_cells: int
    missing_fraction: float
    per_column_missing: dict[str, int]


@dataclass(frozen=True)
class ArffAttribute:
    name: str
    nominal: tuple[str, ...] | None = None  # None means numeric

    @property
    def is_nominal(self) -> bool:
        return self.nominal is not None


@dataclass(frozen=True)
class ArffDocument:
    """Structural view of an ARFF file: header plus well-formed data rows."""

    relation: str
    attributes: tuple[ArffAttribute, ...]
    rows: tuple[tuple[str, ...], ...]
    rows_rejected: int


_ATTR_RE = re.compile(
    r"""@attribute\s+            # keyword
        (?:'(?P<q1>[^']*)'|"(?P<q2>[^"]*)"|(?P<bare>\S+))
        \s+(?P<type>.+?)\s*$""",
    re.IGNORECASE | re.VERBOSE,
)


def _split_row(line: str) -> list[str]:
    """Split a data row on commas, honouring single/double quotes."""
    out = []
    buf = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
            else:
                buf.append(ch)
        elif ch in "'\"":
            quote = ch
        elif ch == ",":
            out.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    out.append("".join(buf).strip())
    return out


def _read_text(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        text = str(source)
        # A newline-free string is always a path; inline content must
        # contain at least one line break (or arrive as a file object).
        if isinstance(source, os.PathLike) or "\n" not in text:
            with open(text, "rb") as fh:
                return fh.read().decode("utf-8")
        return text
    if isinstance(source, bytes):
        return source.decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def read_arff_document(source) -> ArffDocument:
    """Parse ARFF structure without schema interpretation.

    Raises ParseError when the header is truncated (no @data section, no
    attributes) or an attribute type falls outside the numeric/nominal
    subset.  Data rows whose token count disagrees with the attribute
    count are dropped and counted in rows_rejected.
    """
    text = _read_text(source)
    relation = ""
    attributes: list[ArffAttribute] = []
    rows: list[tuple[str, ...]] = []
    rejected = 0
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            low = line.lower()
            if low.startswith("@relation"):
                relation = line[len("@relation"):].strip().strip("'\"")
            elif low.startswith("@attribute"):
                m = _ATTR_RE.match(line)
                if not m:
                    raise ParseError(f"malformed attribute declaration: {line!r}")
                name = m.group("q1") or m.group("q2") or m.group("bare")
                typ = m.group("type").strip()
                if typ.startswith("{"):
                    if not typ.endswith("}"):
                        raise ParseError(f"unterminated nominal list: {line!r}")
                    cats = tuple(t.strip().strip("'\"")
                                 for t in typ[1:-1].split(","))
                    if not all(cats):
                        raise ParseError(f"empty nominal name in: {line!r}")
                    attributes.append(ArffAttribute(name, cats))
                elif typ.lower() in ("numeric", "real", "integer"):
                    attributes.append(ArffAttribute(name))
                else:
                    raise ParseError(
                        f"unsupported attribute type {typ!r} for {name!r}"
                    )
            elif low.startswith("@data"):
                if not attributes:
                    raise ParseError("@data reached with no attributes declared")
                in_data = True
            else:
                raise ParseError(f"unrecognised header line: {line!r}")
        else:
            tokens = _split_row(line)
            if len(tokens) != len(attributes):
                rejected += 1
                continue
            rows.append(tuple(tokens))
    if not in_data:
        raise ParseError("no @data section found; header truncated?")
    return ArffDocument(relation, tuple(attributes), tuple(rows), rejected)


def _match_columns(file_names: list[str], schema: DatasetSchema):
    """Map file column positions to schema columns by normalised name.

    All file columns must match distinct schema columns and every value
    column of the schema must be covered; label columns may be absent.
    """
    by_norm = {_norm_name(c.name): i for i, c in enumerate(schema.columns)}
    mapping: list[int] = []
    seen = set()
    unknown = []
    for name in file_names:
        idx = by_norm.get(_norm_name(name))
        if idx is None or idx in seen:
            unknown.append(name)
            continue
        seen.add(idx)
        mapping.append(idx)
    if unknown:
        raise SchemaMismatch(
            f"columns not in schema {schema.schema_id!r} (or duplicated): "
            + ", ".join(repr(n) for n in unknown)
        )
    wanted = {i for i, c in enumerate(schema.columns) if c.kind not in LABEL_KINDS}
    missing = wanted - seen
    if missing:
        names = ", ".join(repr(schema.columns[i].name) for i in sorted(missing))
        raise SchemaMismatch(f"file lacks required columns: {names}")
    return mapping


class _RowAccumulator:
    """Converts token rows into dataset arrays, tracking the report counts."""

    def __init__(self, schema: DatasetSchema):
        self.schema = schema
        self.value_pos = {}   # schema column index -> value column index
        self.label_pos = {}   # schema column index -> label slot name
        vi = 0
        for i, c in enumerate(schema.columns):
            if c.kind is ColumnKind.BINARY_LABEL:
                self.label_pos[i] = "binary"
            elif c.kind is ColumnKind.CATEGORY_LABEL:
                self.label_pos[i] = "category"
            elif c.kind is ColumnKind.SPECIFIC_LABEL:
                self.label_pos[i] = "specific"
            else:
                self.value_pos[i] = vi
                vi += 1
        self.n_value_cols = vi
        self.values: list[list[float]] = []
        self.labels = {"binary": [], "category": [], "specific": []}
        self.rejected = 0
        self.missing = 0
        self.per_column = {c.name: 0 for c in schema.value_columns}

    def add(self, tokens, mapping, decoders) -> None:
        """mapping[k] = schema column for token k; decoders[k] converts a token."""
        row = [math.nan] * self.n_value_cols
        labs = {"binary": -1, "category": -1, "specific": -1}
        miss_names = []
        for tok, sci, dec in zip(tokens, mapping, decoders):
            if _is_missing(tok):
                if sci in self.value_pos:
                    miss_names.append(self.schema.columns[sci].name)
                continue
            try:
                val = dec(tok)
                if sci in self.value_pos:
                    row[self.value_pos[sci]] = val
                else:
                    labs[self.label_pos[sci]] = int(val)
            except (ValueError, OverflowError):
                self.rejected += 1
                return
        self.values.append(row)
        for k in labs:
            self.labels[k].append(labs[k])
        self.missing += len(miss_names)
        for name in miss_names:
            self.per_column[name] += 1

    def finish(self):
        n = len(self.values)
        vals = np.array(self.values, dtype=np.float64) if n else \
            np.empty((0, self.n_value_cols))
        labs = {}
        for k in ("binary", "category", "specific"):
            arr = np.array(self.labels[k], dtype=np.int64) if n else None
            labs[k] = arr if arr is not None and (arr >= 0).any() else None
        d = Dataset(self.schema, vals, labs["binary"], labs["category"],
                    labs["specific"])
        denom = n * self.n_value_cols
        report = IngestReport(
            rows_read=n,
            rows_rejected=self.rejected,
            missing_cells=self.missing,
            missing_fraction=(self.missing / denom) if denom else 0.0,
            per_column_missing=self.per_column,
        )
        return d, report


def _nominal_decoder(names: tuple[str, ...]):
    lookup = {n: float(i) for i, n in enumerate(names)}

    def dec(tok: str) -> float:
        t = tok.strip().strip("'\"")
        if t in lookup:
            return lookup[t]
        raise ValueError(f"token {t!r} not in nominal set {names}")

    return dec


def parse_arff(source, schema: DatasetSchema):
    """Parse an ARFF capture against a schema.

    Returns (Dataset, IngestReport).  Nominal cells are decoded to the
    index of their category within the file's declaration order; rows
    with wrong arity or unconvertible tokens are rejected and counted.
    """
    doc = read_arff_document(source)
    mapping = _match_columns([a.name for a in doc.attributes], schema)
    decoders = [
        _nominal_decoder(a.nominal) if a.is_nominal else float
        for a in doc.attributes
    ]
    acc = _RowAccumulator(schema)
    acc.rejected = doc.rows_rejected
    for tokens in doc.rows:
        acc.add(tokens, mapping, decoders)
    return acc.finish()


def parse_csv(source, schema: DatasetSchema, header: bool = True):
    """Parse a CSV capture against a schema.

    With header=True the first row names the columns and is matched to the
    schema like ARFF attributes.  Without a header, columns are positional:
    rows must carry either every schema column or just the value columns.
    Returns (Dataset, IngestReport).
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and not all(c.strip() == "" for c in r)]
    if header:
        if not rows:
            raise ParseError("empty file: no header row")
        mapping = _match_columns([c.strip() for c in rows[0]], schema)
        data_rows = rows[1:]
    else:
        mapping = None
        data_rows = rows
    acc = _RowAccumulator(schema)
    full = list(range(len(schema.columns)))
    vals_only = [i for i, c in enumerate(schema.columns)
                 if c.kind not in LABEL_KINDS]
    for tokens in data_rows:
        if header:
            m = mapping
            if len(tokens) != len(m):
                acc.rejected += 1
                continue
        elif len(tokens) == len(full):
            m = full
        elif len(tokens) == len(vals_only):
            m = vals_only
        else:
            acc.rejected += 1
            continue
        acc.add(tokens, m, [float] * len(m))
    return acc.finish()


def _format_cell(v) -> str:
    if v is None:
        return "?"
    if isinstance(v, float) and math.isnan(v):
        return "?"
    return repr(float(v)) if isinstance(v, float) else str(int(v))


def write_canonical(d: Dataset, destination) -> int:
    """Write the canonical CSV form of a dataset.

    Canonical means: header row with exact schema names, columns in schema
    order, '?' for missing cells, floats in shortest round-trip notation,
    comma separator, "\\n" line ends, UTF-8.  parse_csv of the output
    reproduces the dataset exactly.  Returns the number of bytes written.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c.name for c in d.schema.columns])
    label_arrays = {
        ColumnKind.BINARY_LABEL: d.binary_labels,
        ColumnKind.CATEGORY_LABEL: d.category_labels,
        ColumnKind.SPECIFIC_LABEL: d.specific_labels,
    }
    vi = 0
    getters = []
    for c in d.schema.columns:
        if c.kind in LABEL_KINDS:
            arr = label_arrays[c.kind]
            getters.append(
                (lambda a: (lambda i: None if a is None or a[i] < 0
                            else int(a[i])))(arr))
        else:
            getters.append((lambda j: (lambda i: (
                None if math.isnan(d.values[i, j]) else float(d.values[i, j])
            )))(vi))
            vi += 1
    for i in range(d.n_records):
        writer.writerow([_format_cell(g(i)) for g in getters])
    payload = buf.getvalue().encode("utf-8")
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            fh.write(payload)
    elif hasattr(destination, "write"):
        try:
            destination.write(payload)
        except TypeError:
            destination.write(payload.decode("utf-8"))
    else:
        raise TypeError("destination must be a path or a writable object")
    return len(payload)
