"""Dense real-matrix substrate.

A matrix is a 2-D float64 numpy array (row-major); vectors are (n, 1)
columns throughout the package.  Everything here is a pure function on
immutable inputs; no NaN/Inf is admitted into any operation.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatchError,
    NoConvergenceError,
    NonSquareError,
    SingularError,
)

Mat = np.ndarray

# Centralized tolerances: one tunable surface for downstream equality checks.
IDENTITY_TOL = 1e-9       # ||M @ invert(M) - I||_inf allowance
PIVOT_RTOL = 1e-12        # pivot magnitude below PIVOT_RTOL * ||M||_inf => singular


def as_mat(data) -> Mat:
    """Coerce to a finite 2-D float64 array.

    Accepts nested sequences or arrays; a 1-D input becomes a column vector.
    """
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise DimensionMismatchError("matrix entries must be finite")
    return m


def _require_square(m: Mat) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquareError(f"square matrix required, got shape {m.shape}")


def inf_norm(m: Mat) -> float:
    """Maximum absolute row sum."""
    if m.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(m), axis=1)))


def spectral_radius(m: Mat) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    _require_square(m)
    if m.shape[0] == 0:
        return 0.0
    try:
        eigs = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eigs)))


def spectral_norm(m: Mat) -> float:
    """Largest singular value, sigma_max(m) = sqrt(rho(m^T m))."""
    if m.size == 0:
        return 0.0
    try:
        gram_eigs = np.linalg.eigvalsh(m.T @ m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.sqrt(max(gram_eigs[-1], 0.0)))


def invert(m: Mat) -> Mat:
    """Inverse via LU with partial pivoting.

    Raises SingularError when a pivot magnitude falls below
    PIVOT_RTOL * ||m||_inf during factorization.
    """
    _require_square(m)
    n = m.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    threshold = PIVOT_RTOL * max(inf_norm(m), np.finfo(np.float64).tiny)
    # Augmented Gauss-Jordan elimination; n <= 8 in practice.
    aug = np.hstack([m.astype(np.float64, copy=True), np.eye(n)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = aug[pivot_row, col]
        if abs(pivot) < threshold:
            raise SingularError(f"pivot {abs(pivot):.3e} below threshold {threshold:.3e}")
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        aug[col] /= aug[col, col]
        others = [r for r in range(n) if r != col]
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, n:]


def mat_mul(a: Mat, b: Mat) -> Mat:
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def mat_add(a: Mat, b: Mat) -> Mat:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot add {a.shape} and {b.shape}")
    return a + b


def mat_sub(a: Mat, b: Mat) -> Mat:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot subtract {b.shape} from {a.shape}")
    return a - b


def scalar_mul(c: float, m: Mat) -> Mat:
    return float(c) * m


def transpose(m: Mat) -> Mat:
    return m.T.copy()


def hcat(a: Mat, b: Mat) -> Mat:
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"row counts differ: {a.shape} vs {b.shape}")
    return np.hstack([a, b])


def vcat(a: Mat, b: Mat) -> Mat:
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"column counts differ: {a.shape} vs {b.shape}")
    return np.vstack([a, b])


def block2x2(m11: Mat, m12: Mat, m21: Mat, m22: Mat) -> Mat:
    """Assemble [[m11, m12], [m21, m22]]; blocks may have zero rows/columns."""
    if m11.shape[0] != m12.shape[0] or m21.shape[0] != m22.shape[0]:
        raise DimensionMismatchError("block row heights do not match")
    if m11.shape[1] != m21.shape[1] or m12.shape[1] != m22.shape[1]:
        raise DimensionMismatchError("block column widths do not match")
    top = m11.shape[0]
    left = m11.shape[1]
    out = np.empty((top + m21.shape[0], left + m12.shape[1]))
    out[:top, :left] = m11
    out[:top, left:] = m12
    out[top:, :left] = m21
    out[top:, left:] = m22
    return out


def identity(n: int) -> Mat:
    return np.eye(n)
