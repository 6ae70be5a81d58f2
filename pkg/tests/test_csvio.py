"""Artifact CSV round trips: exact floats, headers, numpy scalars."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from resiform.csvio import format_cell, read_csv, write_csv


def test_numpy_and_python_scalars_format_identically():
    assert format_cell(np.float64(0.1)) == format_cell(0.1) == "0.1"
    assert format_cell(np.int64(4)) == "4"
    assert format_cell(np.bool_(True)) == format_cell(True) == "1"
    assert format_cell(False) == "0"
    assert format_cell("circle") == "circle"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_formatting_round_trips_exactly(x):
    assert float(format_cell(x)) == x
    assert float(format_cell(np.float64(x))) == x


def test_write_read_round_trip(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b"),
                     [(1, 0.5), (2, np.float64(1.0) / 3.0)],
                     header={"seed": 3, "label": "demo"})
    header, columns, rows = read_csv(path)
    assert header == {"seed": "3", "label": "demo"}
    assert columns == ["a", "b"]
    assert [(int(a), float(b)) for a, b in rows] == [(1, 0.5), (2, 1.0 / 3.0)]


def test_identical_content_writes_identical_bytes(tmp_path):
    rows = [(0.1 * k, k) for k in range(20)]
    p1 = write_csv(tmp_path / "a.csv", ("t", "k"), rows, header={"seed": 1})
    p2 = write_csv(tmp_path / "b.csv", ("t", "k"), rows, header={"seed": 1})
    assert p1.read_bytes() == p2.read_bytes()
