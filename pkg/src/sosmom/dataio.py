"""Plain-text dataset files: a header line ``n d`` followed by n rows."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .sampler import Dataset


class DatasetParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def write_dataset(data: Dataset | np.ndarray, path) -> None:
    X = data.samples if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    n, d = X.shape
    lines = [f"{n} {d}"]
    lines.extend(" ".join(format(float(v), ".17g") for v in row) for row in X)
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    text = Path(path).read_text()
    lines = text.splitlines()
    header_idx = next((i for i, s in enumerate(lines) if s.strip()), None)
    if header_idx is None:
        raise DatasetParseError("missing header")
    toks = lines[header_idx].split()
    try:
        n, d = (int(t) for t in toks)
    except ValueError:
        raise DatasetParseError(f"malformed header {lines[header_idx]!r}, expected 'n d'", header_idx + 1) from None
    if n < 1 or d < 1:
        raise DatasetParseError("header needs n >= 1 and d >= 1", header_idx + 1)
    X = np.empty((n, d))
    row = 0
    for lineno in range(header_idx + 1, len(lines)):
        s = lines[lineno].strip()
        if not s:
            continue
        if row >= n:
            raise DatasetParseError(f"more than {n} rows", lineno + 1)
        parts = s.split()
        if len(parts) != d:
            raise DatasetParseError(f"expected {d} values, found {len(parts)}", lineno + 1)
        try:
            X[row] = [float(t) for t in parts]
        except ValueError:
            raise DatasetParseError(f"non-numeric value in {s!r}", lineno + 1) from None
        row += 1
    if row < n:
        raise DatasetParseError(f"expected {n} rows, found {row}", len(lines))
    if not np.all(np.isfinite(X)):
        raise DatasetParseError("non-finite values")
    return Dataset(X)
