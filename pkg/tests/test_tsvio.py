import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clonedecomp.core import ReadCountMatrix
from clonedecomp.tsvio import InputError, format_counts, parse_counts, read_counts

GOOD = "snv_id\tn_a\tN_a\tn_b\tN_b\nx1\t3\t10\t0\t5\nx2\t7\t7\t2\t9\n"


def test_parse_basic():
    c = parse_counts(GOOD)
    assert c.snv_labels == ("x1", "x2") and c.sample_labels == ("a", "b")
    assert c.n.tolist() == [[3, 0], [7, 2]] and c.N.tolist() == [[10, 5], [7, 9]]


def test_blank_lines_skipped():
    assert parse_counts(GOOD + "\n\n").S == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_round_trip(S, T, seed):
    rng = np.random.default_rng(seed)
    N = rng.integers(1, 200, size=(S, T))
    n = rng.integers(0, N + 1)
    c = ReadCountMatrix(n, N)
    back = parse_counts(format_counts(c))
    assert np.array_equal(back.n, c.n) and np.array_equal(back.N, c.N)
    assert back.snv_labels == c.snv_labels and back.sample_labels == c.sample_labels


@pytest.mark.parametrize("text,line,column", [
    ("snv_id\tn_a\tN_a\nx1\t3\n", 2, None),
    ("snv_id\tn_a\tN_a\nx1\t3\t4\nx2\tfoo\t4\n", 3, 2),
    ("snv_id\tn_a\tN_a\nx1\t5\t4\n", 2, 2),
    ("snv_id\tn_a\tN_a\nx1\t0\t0\n", 2, 3),
    ("snv_id\tn_a\tN_a\nx1\t-1\t4\n", 2, 2),
    ("id\tn_a\tN_a\nx1\t1\t4\n", 1, 1),
    ("snv_id\tn_a\tN_b\nx1\t1\t4\n", 1, 2),
    ("snv_id\tn_a\nx1\t1\n", 1, None),
    ("snv_id\tn_a\tN_a\n", 2, None),
    ("", 1, None),
])
def test_errors_locate_problem(text, line, column):
    with pytest.raises(InputError) as info:
        parse_counts(text)
    assert info.value.line == line and info.value.column == column
    assert f"line {line}" in str(info.value)


def test_duplicate_labels():
    with pytest.raises(InputError):
        parse_counts("snv_id\tn_a\tN_a\nx\t1\t2\nx\t1\t2\n")
    with pytest.raises(InputError):
        parse_counts("snv_id\tn_a\tN_a\tn_a\tN_a\nx\t1\t2\t1\t2\n")


def test_read_counts_file(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text(GOOD)
    assert read_counts(p).T == 2
    p.write_bytes(b"\xff\xfe")
    with pytest.raises(InputError):
        read_counts(p)
