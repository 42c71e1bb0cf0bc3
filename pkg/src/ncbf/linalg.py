"""Small dense linear algebra: LU with partial pivoting and the 2-norm.

Vectors and matrices are plain float64 numpy arrays. The factorization
kernels are jitted so the interior-point loop can call them directly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PIVOT_RTOL = 1e-14


class SingularMatrix(ArithmeticError):
    """Raised when a pivot falls below ``PIVOT_RTOL * max|A|``."""


@njit(cache=True)
def lu_factor_inplace(a, piv):
    """Overwrite ``a`` with its packed LU factors; record row swaps in ``piv``.

    Returns False if the matrix is numerically singular. ``a`` is then
    partially factored and must not be used.
    """
    n = a.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            x = abs(a[i, j])
            if x > scale:
                scale = x
    if scale == 0.0:
        return False
    tol = PIVOT_RTOL * scale
    for i in range(n):
        piv[i] = i
    for k in range(n):
        p = k
        best = abs(a[k, k])
        for i in range(k + 1, n):
            x = abs(a[i, k])
            if x > best:
                best = x
                p = i
        if best < tol:
            return False
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            tmp_i = piv[k]
            piv[k] = piv[p]
            piv[p] = tmp_i
        inv = 1.0 / a[k, k]
        for i in range(k + 1, n):
            f = a[i, k] * inv
            a[i, k] = f
            if f != 0.0:
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
    return True


@njit(cache=True)
def lu_substitute(lu, piv, b):
    n = lu.shape[0]
    x = np.empty(n)
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(n):
        acc = x[i]
        for j in range(i):
            acc -= lu[i, j] * x[j]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            acc -= lu[i, j] * x[j]
        x[i] = acc / lu[i, i]
    return x


def _as_square(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def lu_factor(a) -> tuple[np.ndarray, np.ndarray]:
    """Factor ``P A = L U``; returns the packed factors and the row permutation."""
    lu = _as_square(a)
    piv = np.empty(lu.shape[0], dtype=np.int64)
    if not lu_factor_inplace(lu, piv):
        raise SingularMatrix("pivot below 1e-14 * max|A|")
    return lu, piv


def lu_solve(a, b) -> np.ndarray:
    """Solve ``A x = b`` by partial-pivoting LU."""
    b = np.asarray(b, dtype=float)
    lu, piv = lu_factor(a)
    if b.shape != (lu.shape[0],):
        raise ValueError(f"rhs shape {b.shape} does not match matrix {lu.shape}")
    return lu_substitute(lu, piv, b)


def norm2(v) -> float:
    # hypot scales internally, so huge entries do not overflow
    return math.hypot(*np.asarray(v, dtype=float).ravel().tolist())
