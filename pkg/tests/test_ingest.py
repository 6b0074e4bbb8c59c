"""ARFF/CSV parsing, missingness accounting, canonical round trip."""

import io

import numpy as np
import pytest

from otids.data_model import Dataset, builtin_schema
from otids.errors import ParseError, SchemaMismatch
from otids.ingest import parse_arff, parse_csv, read_arff_document, write_canonical

DS1 = builtin_schema("ds1-modbus")
DS2 = builtin_schema("ds2-opcua")

ARFF_HEADER = """\
% trimmed gas pipeline capture
@relation pipeline
@attribute 'Address' numeric
@attribute 'Function Code' numeric
@attribute 'Length of Packet' numeric
@attribute 'Setpoint' numeric
@attribute 'Gain' numeric
@attribute 'Reset Rate' numeric
@attribute 'Deadband' numeric
@attribute 'Cycle Time' numeric
@attribute 'Rate' numeric
@attribute 'System Mode' {0,1,2}
@attribute 'Control Scheme' {0,1}
@attribute 'Pump' {off,on}
@attribute 'Solenoid' {0,1}
@attribute 'Pressure Measurement' numeric
@attribute 'CRC Rate' numeric
@attribute 'Command Response' {0,1}
@attribute 'Time' numeric
@attribute 'Binary Attack' {0,1}
@attribute 'Categorised Attack' numeric
@attribute 'Specific Attack' numeric
@data
"""

ARFF_ROWS = """\
4,3,12,10,5,0.5,1,1.2,0.8,2,0,off,0,9.8,0,1,0.1,0,0,0
4,16,66,10,5,0.5,1,1.2,0.8,2,0,on,1,?,0,0,0.2,1,2,2
4,3,12,10,5,0.5,1,1.2,0.8,2,0,off,0,10.2,0,1,0.3,0,0,0
"""


def test_arff_missing_accounting():
    d, rep = parse_arff(ARFF_HEADER + ARFF_ROWS, DS1)
    assert rep.rows_read == 3
    assert rep.rows_rejected == 0
    assert rep.missing_cells == 1
    # 3 rows x 17 value columns = 51 cells
    assert rep.missing_fraction == 1 / 51
    assert rep.per_column_missing["Pressure Measurement"] == 1
    assert np.isnan(d.values[1, DS1.value_index("Pressure Measurement")])


def test_arff_nominal_decodes_to_declaration_index():
    d, _ = parse_arff(ARFF_HEADER + ARFF_ROWS, DS1)
    pump = d.values[:, DS1.value_index("Pump")]
    assert pump.tolist() == [0.0, 1.0, 0.0]
    assert np.array_equal(d.binary_labels, [0, 1, 0])
    assert np.array_equal(d.category_labels, [0, 2, 0])


def test_arff_wrong_arity_row_rejected():
    text = ARFF_HEADER + ARFF_ROWS + "4,3,12,10,5\n"
    d, rep = parse_arff(text, DS1)
    assert rep.rows_read == 3
    assert rep.rows_rejected == 1
    assert d.n_records == 3


def test_arff_unconvertible_token_rejects_row():
    bad = ARFF_ROWS.replace("9.8", "junk", 1)
    d, rep = parse_arff(ARFF_HEADER + bad, DS1)
    assert rep.rows_read == 2
    assert rep.rows_rejected == 1


def test_arff_quoted_tokens_and_comments():
    doc = read_arff_document(ARFF_HEADER + "'4',3,12,10,5,0.5,1,1.2,0.8,2,0,"
                             "'off',0,9.8,0,1,0.1,0,0,0\n% trailing comment\n")
    assert doc.relation == "pipeline"
    assert len(doc.rows) == 1
    assert doc.rows[0][0] == "4"
    assert doc.attributes[11].nominal == ("off", "on")


def test_arff_truncated_header_is_parse_error():
    with pytest.raises(ParseError):
        read_arff_document("@relation x\n@attribute 'A' numeric\n")


def test_arff_unsupported_type_is_parse_error():
    with pytest.raises(ParseError):
        read_arff_document("@relation x\n@attribute 'A' string\n@data\n")


def test_arff_header_must_cover_value_columns():
    text = "@relation x\n@attribute 'Address' numeric\n@data\n1\n"
    with pytest.raises(SchemaMismatch):
        parse_arff(text, DS1)


CSV_DS2 = (
    ",".join(c.name for c in DS2.columns)
    + "\n21.5,4.0,3.0,6.0,2.8,0,0,1,1,0,0,0,0\n"
    + "21.7,0.2,3.1,5.9,1.2,0,0,0,0,0,0,0,1\n"
)


def test_csv_no_missing():
    d, rep = parse_csv(CSV_DS2, DS2)
    assert rep.rows_read == 2
    assert rep.missing_cells == 0
    assert rep.missing_fraction == 0.0
    assert np.array_equal(d.binary_labels, [0, 1])


def test_csv_nan_cell_counted_missing_row_kept():
    text = CSV_DS2.replace("21.7", "NaN")
    d, rep = parse_csv(text, DS2)
    assert rep.rows_read == 2
    assert rep.missing_cells == 1
    assert np.isnan(d.values[1, 0])


def test_csv_empty_cell_counted_missing():
    text = CSV_DS2.replace("21.7", "")
    _, rep = parse_csv(text, DS2)
    assert rep.missing_cells == 1


def test_csv_unknown_header_name_is_schema_mismatch():
    with pytest.raises(SchemaMismatch):
        parse_csv("Bogus Column\n1.0\n", DS2)


def test_csv_headerless_value_only_rows():
    text = "21.5,4.0,3.0,6.0,2.8,0,0,1,1,0,0,0\n"
    d, rep = parse_csv(text, DS2, header=False)
    assert rep.rows_read == 1
    assert d.binary_labels is None


def test_csv_headerless_odd_arity_rejected():
    d, rep = parse_csv("1.0,2.0,3.0\n", DS2, header=False)
    assert rep.rows_read == 0
    assert rep.rows_rejected == 1
    assert d.n_records == 0


def test_missing_fraction_invariant_under_row_order():
    header, r1, r2 = (CSV_DS2.replace("21.5", "?")).splitlines()
    _, a = parse_csv("\n".join([header, r1, r2]) + "\n", DS2)
    _, b = parse_csv("\n".join([header, r2, r1]) + "\n", DS2)
    assert a.missing_fraction == b.missing_fraction
    assert a.missing_cells == b.missing_cells


def _random_dataset(rng):
    schema = DS1 if rng.random() < 0.5 else DS2
    n = int(rng.integers(1, 30))
    ncols = len(schema.value_columns)
    values = np.round(rng.normal(size=(n, ncols)) * 10, 6)
    for j, col in enumerate(schema.value_columns):
        if col.categories:
            values[:, j] = rng.integers(0, len(col.categories), size=n)
    if schema.timestamp_index is not None:
        values[:, schema.timestamp_index] = np.sort(rng.random(n) * 100)
    # punch missing holes everywhere except the timestamp
    holes = rng.random(values.shape) < 0.15
    if schema.timestamp_index is not None:
        holes[:, schema.timestamp_index] = False
    values[holes] = np.nan
    binary = rng.integers(0, 2, size=n)
    kwargs = {"binary_labels": binary}
    if schema is DS1:
        kwargs["category_labels"] = np.where(binary == 1, 6, 0)
        kwargs["specific_labels"] = np.where(binary == 1, 3, 0)
    return Dataset(schema, values, **kwargs)


def test_round_trip_property():
    # write_canonical followed by parse_csv must reproduce the dataset
    # bit for bit, missing mask included
    rng = np.random.default_rng(20240817)
    for _ in range(120):
        d = _random_dataset(rng)
        buf = io.StringIO()
        write_canonical(d, buf)
        back, rep = parse_csv(buf.getvalue(), d.schema)
        assert back.equals(d)
        assert rep.rows_rejected == 0
        assert rep.missing_cells == int(d.missing_mask.sum())


def test_one_missing_cell_writes_one_question_mark():
    vals = np.zeros((3, 12))
    vals[1, 4] = np.nan
    d = Dataset(DS2, vals, binary_labels=np.array([0, 1, 0]))
    buf = io.StringIO()
    write_canonical(d, buf)
    body = buf.getvalue().split("\n", 1)[1]
    assert body.count("?") == 1


def test_empty_dataset_writes_header_only():
    d = Dataset(DS2, np.empty((0, 12)))
    buf = io.StringIO()
    n = write_canonical(d, buf)
    text = buf.getvalue()
    assert n == len(text.encode())
    assert text == ",".join(c.name for c in DS2.columns) + "\n"
    back, rep = parse_csv(text, DS2)
    assert back.n_records == 0
    assert rep.rows_read == 0
    assert rep.missing_fraction == 0.0


def test_write_canonical_to_path(tmp_path):
    d, _ = parse_csv(CSV_DS2, DS2)
    target = tmp_path / "out.csv"
    write_canonical(d, target)
    back, _ = parse_csv(str(target), DS2)
    assert back.equals(d)


def test_missing_file_is_io_error():
    with pytest.raises(OSError):
        parse_csv("/no/such/file.csv", DS2)


def test_parse_preserves_record_order():
    d, _ = parse_csv(CSV_DS2, DS2)
    assert d.values[0, 0] == 21.5
    assert d.values[1, 0] == 21.7
