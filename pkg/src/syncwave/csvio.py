"""CSV helpers shared by the library surface and the CLI.

Matrices are written row-major, one row per line, ``%.17g`` per entry
(lossless for doubles).  Tables carry a single header row.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

FMT = "%.17g"


def save_matrix(path, m: np.ndarray) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for row in m:
            fh.write(",".join(FMT % x for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise ValueError(f"no numeric rows in {os.fspath(path)!r}")
    return np.asarray(rows, dtype=float)


def save_table(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].size
    if any(c.size != n for c in cols) or len(header) != len(cols):
        raise ValueError("header and columns must agree in number and length")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(FMT % c[i] for c in cols) + "\n")


def load_table(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data
