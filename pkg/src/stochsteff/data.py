"""LIBSVM text I/O, the seeded Gaussian ridge generator and trace CSVs."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np

from .linalg import DesignMatrix, SparseRow
from .sampling import SplitMix64

TRACE_HEADER = ("outer_iter", "f_value", "suboptimality", "eta", "grad_evals", "passes", "wall_seconds")

Source = Union[str, os.PathLike, IO]


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class LibsvmRecord:
    label: float
    features: SparseRow


def _open_text(source: Source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)) or hasattr(source, "mode") and "b" in getattr(source, "mode", ""):
        return io.TextIOWrapper(source, encoding="utf-8"), False
    return source, False


def _parse_line(text: str, lineno: int) -> tuple[float, list, list]:
    tokens = text.split()
    try:
        label = float(tokens[0])
    except ValueError:
        raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
    if not math.isfinite(label):
        raise ParseError(f"non-finite label {tokens[0]!r}", lineno)
    idx, val = [], []
    last = 0
    for tok in tokens[1:]:
        key, sep, num = tok.partition(":")
        if not sep or not key or not num:
            raise ParseError(f"malformed token {tok!r}", lineno)
        try:
            j = int(key)
        except ValueError:
            raise ParseError(f"non-integer index {key!r}", lineno) from None
        try:
            v = float(num)
        except ValueError:
            raise ParseError(f"non-numeric value {num!r}", lineno) from None
        if j < 1:
            raise ParseError(f"index {j} is not 1-based", lineno)
        if j <= last:
            raise ParseError(f"index {j} does not increase (previous {last})", lineno)
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {num!r}", lineno)
        last = j
        idx.append(j - 1)
        val.append(v)
    return label, idx, val


def iter_libsvm(source: Source) -> Iterable[tuple[int, float, list, list]]:
    """Yield ``(line number, label, 0-based indices, values)`` per record."""
    fh, owned = _open_text(source)
    try:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield (lineno, *_parse_line(text, lineno))
    finally:
        if owned:
            fh.close()


def parse_libsvm(source: Source, n_features: Optional[int] = None,
                 zero_one_to_pm: bool = False) -> DesignMatrix:
    """Read a LIBSVM file into a :class:`DesignMatrix`.

    Parameters
    ----------
    source
        Path or text/binary stream.
    n_features
        Fixed dimension; defaults to the largest index present. Files with a
        larger index are rejected.
    zero_one_to_pm
        Map labels {0, 1} to {-1, +1}. Files whose labels are not all in
        {0, 1} are rejected when this is set.
    """
    rows_idx, rows_val, labels = [], [], []
    d_seen = 0
    for lineno, label, idx, val in iter_libsvm(source):
        if idx:
            d_seen = max(d_seen, idx[-1] + 1)
            if n_features is not None and idx[-1] >= n_features:
                raise ParseError(f"index {idx[-1] + 1} exceeds n_features={n_features}", lineno)
        if zero_one_to_pm:
            if label not in (0.0, 1.0):
                raise ParseError(f"label {label!r} is not 0 or 1", lineno)
            label = 2.0 * label - 1.0
        rows_idx.append(idx)
        rows_val.append(val)
        labels.append(label)
    if not labels:
        raise ParseError("no records found")
    d = n_features if n_features is not None else max(d_seen, 1)
    rows = [SparseRow(np.asarray(i, dtype=np.int64), np.asarray(v, dtype=np.float64), d)
            for i, v in zip(rows_idx, rows_val)]
    return DesignMatrix.from_rows(rows, labels, d)


def write_libsvm(data: DesignMatrix, sink: IO[str]) -> None:
    for row, y in zip(data.rows, data.labels):
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(row.indices.tolist(), row.values.tolist()))
        sink.write(f"{float(y)!r} {feats}".rstrip() + "\n")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")


def generate_synthetic_ridge(spec: SyntheticSpec) -> tuple[DesignMatrix, np.ndarray]:
    """Gaussian regression data ``y = A x_true + noise``.

    One SplitMix64 stream seeded with ``spec.seed`` supplies, in order,
    ``x_true`` (d normals), ``A`` row by row (n*d normals) and the noise
    (n normals).
    """
    rng = SplitMix64(spec.seed)
    x_true = rng.standard_normal(spec.d)
    a = rng.standard_normal(spec.n * spec.d).reshape(spec.n, spec.d)
    noise = rng.standard_normal(spec.n)
    y = a @ x_true + noise
    return DesignMatrix.from_dense(a, y), x_true


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_trace_csv(trace, sink: IO[str], f_star: Optional[float] = None) -> None:
    """One row per outer iterate; ``suboptimality`` is nan without ``f_star``."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for k in range(len(trace)):
        f = trace.f_values[k]
        evals = trace.grad_evals[k]
        sub = f - f_star if f_star is not None else math.nan
        w.writerow([_fmt(k), _fmt(f), _fmt(sub), _fmt(trace.etas[k]), _fmt(evals),
                    _fmt(evals / trace.n), _fmt(trace.wall_seconds[k])])


def read_trace_csv(source: IO[str]) -> dict:
    """Column name -> numpy array (``outer_iter`` and ``grad_evals`` as int64)."""
    r = csv.reader(source)
    header = next(r, None)
    if header is None or tuple(header) != TRACE_HEADER:
        raise ParseError(f"unexpected trace header {header!r}")
    cols = {h: [] for h in TRACE_HEADER}
    for lineno, row in enumerate(r, start=2):
        if len(row) != len(TRACE_HEADER):
            raise ParseError(f"expected {len(TRACE_HEADER)} fields, got {len(row)}", lineno)
        for h, v in zip(TRACE_HEADER, row):
            cols[h].append(v)
    out = {}
    for h, vals in cols.items():
        dtype = np.int64 if h in ("outer_iter", "grad_evals") else np.float64
        out[h] = np.array([dtype(float(v)) if dtype is np.int64 else float(v) for v in vals], dtype=dtype)
    return out
