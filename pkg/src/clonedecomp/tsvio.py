"""Read-count tables: tab-separated, one SNV per row.

The header is ``snv_id`` followed by one ``n_<sample>``/``N_<sample>`` pair
per sample, in that order.  Values are non-negative integers.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .core import ReadCountMatrix


class InputError(ValueError):
    """Malformed input; ``line`` (1-based) and ``column`` locate the problem when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


def _sample_labels(header: list[str]) -> list[str]:
    if not header or header[0] != "snv_id":
        raise InputError("first header field must be 'snv_id'", line=1, column=1)
    rest = header[1:]
    if not rest or len(rest) % 2:
        raise InputError("expected n_<sample>/N_<sample> column pairs after snv_id", line=1)
    labels = []
    for k in range(0, len(rest), 2):
        a, b = rest[k], rest[k + 1]
        if not a.startswith("n_") or not b.startswith("N_") or a[2:] != b[2:] or not a[2:]:
            raise InputError(f"columns {a!r} and {b!r} do not form an n_/N_ pair",
                             line=1, column=k + 2)
        labels.append(a[2:])
    if len(set(labels)) != len(labels):
        raise InputError("duplicate sample labels", line=1)
    return labels


def parse_counts(text: str) -> ReadCountMatrix:
    rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
    if not rows:
        raise InputError("empty input", line=1)
    samples = _sample_labels(rows[0])
    width = 1 + 2 * len(samples)
    snvs, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != width:
            raise InputError(f"expected {width} fields, found {len(row)}", line=lineno)
        vals = []
        for col, field in enumerate(row[1:], start=2):
            try:
                v = int(field)
            except ValueError:
                raise InputError(f"{field!r} is not an integer", line=lineno, column=col) from None
            if v < 0:
                raise InputError("counts must be non-negative", line=lineno, column=col)
            vals.append(v)
        n, N = vals[0::2], vals[1::2]
        for j, (a, b) in enumerate(zip(n, N)):
            if b < 1:
                raise InputError("total count must be positive", line=lineno, column=3 + 2 * j)
            if a > b:
                raise InputError("variant count exceeds total count", line=lineno,
                                 column=2 + 2 * j)
        snvs.append(row[0])
        values.append(vals)
    if not snvs:
        raise InputError("no SNV rows", line=2)
    if len(set(snvs)) != len(snvs):
        raise InputError("duplicate snv_id values")
    arr = np.array(values, dtype=np.int64)
    return ReadCountMatrix(arr[:, 0::2], arr[:, 1::2], tuple(snvs), tuple(samples))


def read_counts(path: str | Path) -> ReadCountMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not UTF-8: {exc}") from None
    return parse_counts(text)


def format_counts(counts: ReadCountMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    header = ["snv_id"]
    for lab in counts.sample_labels:
        header += [f"n_{lab}", f"N_{lab}"]
    w.writerow(header)
    for i, snv in enumerate(counts.snv_labels):
        row = [snv]
        for j in range(counts.T):
            row += [int(counts.n[i, j]), int(counts.N[i, j])]
        w.writerow(row)
    return buf.getvalue()
