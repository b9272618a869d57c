"""Dense SPD linear algebra and Gaussian sampling primitives.

Matrices are plain ``numpy`` arrays. Factorizations are lower-triangular
Cholesky factors ``L`` with ``L @ L.T == m``.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric, ZeroVector
from .streams import RandomStream

SYMMETRY_RTOL = 1e-12
PIVOT_RTOL = 1e-14


def symmetrize(m: NDArray) -> NDArray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _check_square(m: NDArray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")


def is_symmetric(m: NDArray, rtol: float = SYMMETRY_RTOL) -> bool:
    m = np.asarray(m, dtype=float)
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    return bool(np.abs(m - m.T).max(initial=0.0) <= rtol * scale)


def cholesky(m: NDArray) -> NDArray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    The input is symmetrized first. A pivot ``L[i, i]**2`` at or below
    ``dim * 1e-14 * max(diag(m))`` counts as a failure.

    Raises
    ------
    NotPositiveDefinite
        If the matrix is indefinite or numerically singular.
    """
    m = symmetrize(m)
    _check_square(m)
    d = m.shape[0]
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    floor = d * PIVOT_RTOL * max(float(np.max(np.diag(m))), 0.0)
    pivots = np.diag(chol) ** 2
    if not np.all(pivots > floor):
        raise NotPositiveDefinite(f"pivot {pivots.min():.3e} below threshold {floor:.3e}")
    return chol


def spd_solve(chol: NDArray, b: NDArray) -> NDArray:
    """Solve ``m x = b`` given ``chol = cholesky(m)``."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != chol.shape[0]:
        raise DimensionMismatch(f"factor is {chol.shape[0]}-dimensional, rhs has {b.shape[0]} rows")
    return cho_solve((chol, True), b, check_finite=False)


def spd_inverse(chol: NDArray) -> NDArray:
    inv = cho_solve((chol, True), np.eye(chol.shape[0]), check_finite=False)
    return symmetrize(inv)


def sym_sqrt(m: NDArray) -> NDArray:
    """Symmetric positive semidefinite square root via eigendecomposition.

    Slightly negative eigenvalues (down to ``-dim * 1e-12 * ||m||``) are
    treated as rounding noise and clamped to zero.
    """
    m = np.asarray(m, dtype=float)
    _check_square(m)
    if not is_symmetric(m):
        raise NotSymmetric("sym_sqrt needs a symmetric input")
    m = symmetrize(m)
    w, v = np.linalg.eigh(m)
    tol = m.shape[0] * 1e-12 * max(np.abs(w).max(initial=0.0), 1e-300)
    if w.min(initial=0.0) < -tol:
        raise NotPositiveDefinite(f"eigenvalue {w.min():.3e} is negative")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return symmetrize(root)


def mvn_sample_precision(mean: NDArray, precision_chol: NDArray, rng: RandomStream) -> NDArray:
    """Draw from ``N(mean, B^{-1})`` where ``B = L L^T``.

    Uses ``mean + L^{-T} z``: the covariance of ``L^{-T} z`` is
    ``L^{-T} L^{-1} = B^{-1}``.
    """
    mean = np.asarray(mean, dtype=float)
    if mean.shape[0] != precision_chol.shape[0]:
        raise DimensionMismatch("mean and precision factor disagree on dimension")
    z = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(precision_chol.T, z, lower=False, check_finite=False)


def mvn_sample_cov(mean: NDArray, cov_chol: NDArray, rng: RandomStream, size: int | None = None) -> NDArray:
    """Draw from ``N(mean, L L^T)``; with ``size`` returns ``size`` rows."""
    mean = np.asarray(mean, dtype=float)
    d = cov_chol.shape[0]
    if mean.shape[-1] != d:
        raise DimensionMismatch("mean and covariance factor disagree on dimension")
    if size is None:
        return mean + cov_chol @ rng.standard_normal(d)
    z = rng.standard_normal((size, d))
    return mean + z @ cov_chol.T


def projection_matrix(v: NDArray) -> NDArray:
    """Orthogonal projector onto span(v)."""
    v = np.asarray(v, dtype=float)
    nrm2 = float(v @ v)
    if not nrm2 > 0.0:
        raise ZeroVector("cannot project onto the span of a zero vector")
    return np.outer(v, v) / nrm2
