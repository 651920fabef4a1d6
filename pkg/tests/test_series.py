from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from cdnemu.errors import ParseError, UnknownColumnError
from cdnemu.series import MetricSeries, SeriesRecorder, parse_series_csv, read_series_csv

values = st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False))


@st.composite
def series(draw):
    cols = draw(st.lists(st.from_regex(r"server-[0-9]{1,2}", fullmatch=True), min_size=1,
                         max_size=6, unique=True))
    s = MetricSeries("rtt", cols)
    for i in range(draw(st.integers(0, 30))):
        s.append(f"2025-01-01T00:00:{i:02d}.000Z",
                 draw(st.lists(values, min_size=len(cols), max_size=len(cols))))
    return s


@settings(max_examples=100)
@given(series())
def test_roundtrip_identity(s):
    back = parse_series_csv(s.to_csv())
    assert back == s


def test_na_written_and_read(tmp_path):
    path = tmp_path / "p.csv"
    rec = SeriesRecorder("rtt", ["a", "b"], path)
    rec.record("2025-01-01T00:00:00.000Z", [1.5, None])
    rec.close()
    assert path.read_text() == "timestamp,a,b\n2025-01-01T00:00:00.000Z,1.5,N/A\n"
    assert read_series_csv(path) == rec.series


def test_ragged_row():
    with pytest.raises(ParseError) as err:
        parse_series_csv("timestamp,a,b\nt0,1,2\nt1,1\n")
    assert err.value.row == 3


def test_bad_cell_location():
    with pytest.raises(ParseError) as err:
        parse_series_csv("timestamp,a,b\nt0,1,oops\n")
    assert (err.value.row, err.value.column) == (2, 3)
    assert "row 2, column 3" in str(err.value)


def test_infinite_reads_as_absent():
    s = parse_series_csv("timestamp,a\nt0,inf\nt1,7\n")
    assert s.column("a") == [None, 7.0]


def test_unknown_column():
    with pytest.raises(UnknownColumnError):
        MetricSeries("rtt", ["a"]).column("b")


def test_append_checks():
    s = MetricSeries("rtt", ["a"])
    with pytest.raises(ValueError):
        s.append("2025-01-01T00:00:00.000Z", [1, 2])
    s.append("2025-01-01T00:00:01.000Z", [1])
    with pytest.raises(ValueError):
        s.append("2025-01-01T00:00:00.000Z", [1])


def test_header_problems():
    with pytest.raises(ParseError):
        parse_series_csv("")
    with pytest.raises(ParseError):
        parse_series_csv("timestamp\n")
    with pytest.raises(ParseError):
        parse_series_csv("timestamp,a,a\n")
