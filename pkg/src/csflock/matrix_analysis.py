"""Nonnegative-matrix predicates used by the flocking estimates.

Matrices are plain 2-D numpy arrays. Positivity tests are strict (``> 0``) by
default, which is right for exact inputs; pass ``tol=1e-12`` when the matrix
came out of an integrator.
"""

from __future__ import annotations

import csv
import io
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np


class MatrixError(ValueError):
    pass


def _matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise MatrixError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError("matrix has non-finite entries")
    return a


def _square_nonnegative(a) -> np.ndarray:
    a = _matrix(a)
    if a.shape[0] != a.shape[1]:
        raise MatrixError(f"expected a square matrix, got shape {a.shape}")
    if np.any(a < 0):
        raise MatrixError("matrix has negative entries")
    return a


def ergodicity_coefficient(a) -> float:
    """``min_{i,j} sum_k min(a_ik, a_jk)`` over all ordered row pairs."""
    a = _square_nonnegative(a)
    overlap = np.minimum(a[:, None, :], a[None, :, :]).sum(axis=2)
    return float(overlap.min())


def is_scrambling(a, tol: float = 0.0) -> bool:
    return ergodicity_coefficient(a) > tol


def is_stochastic(a, tol: float = 1e-12) -> bool:
    a = _matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.all(a >= -tol) and np.all(np.abs(a.sum(axis=1) - 1.0) <= tol))


def row_diameter(m) -> float:
    """Largest Euclidean distance between two rows (0 for a single row)."""
    m = _matrix(m)
    if m.shape[0] < 2:
        return 0.0
    diff = m[:, None, :] - m[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2).max()))


def frobenius_norm(m) -> float:
    m = _matrix(m)
    return float(np.sqrt((m * m).sum()))


def matrix_product(mats: Sequence) -> np.ndarray:
    """Left-to-right product ``A_1 A_2 ... A_k``."""
    if len(mats) == 0:
        raise MatrixError("product of an empty sequence")
    arrs = [_matrix(m) for m in mats]
    for left, right in zip(arrs, arrs[1:]):
        if left.shape[1] != right.shape[0]:
            raise MatrixError(f"cannot multiply {left.shape} by {right.shape}")
    return reduce(np.matmul, arrs)


def contraction_bound(a, z, b) -> float:
    """Right-hand side ``(1 - mu(A)) diam(Z) + sqrt(2) ||B||_F`` bounding ``diam(A Z + B)``.

    ``a`` must be stochastic; the bound is only meaningful then.
    """
    return (1.0 - ergodicity_coefficient(a)) * row_diameter(z) + np.sqrt(2.0) * frobenius_norm(b)


def read_matrix_csv(path) -> np.ndarray:
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    try:
        data = [[float(x) for x in r] for r in rows]
    except ValueError as exc:
        raise MatrixError(f"non-numeric CSV entry: {exc}") from exc
    if not data or len({len(r) for r in data}) != 1:
        raise MatrixError("CSV matrix must be non-empty and rectangular")
    return _matrix(data)


def write_matrix_csv(m, path) -> None:
    m = _matrix(m)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in m:
            writer.writerow([format(x, ".17g") for x in row])
