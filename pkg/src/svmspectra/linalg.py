"""Dense symmetric linear algebra for the reduction pipeline.

Eigendecomposition and SPD solves delegate to LAPACK through numpy/scipy.
The rank-revealing LUP elimination is implemented here: the pivoting
bookkeeping (independent leading rows under a fixed tolerance, with
rank-deficient input being the normal case) is what the reduction step
depends on, and stock factorizations do not expose it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractError, NumericalError, ParameterError

SYMMETRY_RTOL = 1e-12
PIVOT_RTOL = 1e-10
EIGEN_RANK_RTOL = 1e-10
SOLVE_RTOL = 1e-8


def _check_square_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    scale = np.abs(a).max() if a.size else 0.0
    if a.size and np.abs(a - a.T).max() > SYMMETRY_RTOL * max(scale, 1.0):
        raise ContractError("matrix is not symmetric within tolerance")
    return a


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues in non-increasing order with matching eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def eigh(q) -> EigenDecomp:
    """Full symmetric eigendecomposition, eigenvalues sorted descending."""
    q = _check_square_symmetric(q)
    try:
        w, v = np.linalg.eigh(q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomp(w, v)


def eigen_rank(decomp: EigenDecomp) -> int:
    """Count of eigenvalues above the relative rank cutoff."""
    if decomp.values.size == 0:
        return 0
    lead = decomp.values[0]
    if lead <= 0.0:
        return 0
    return int((decomp.values > EIGEN_RANK_RTOL * lead).sum())


def low_rank(q, r: int) -> np.ndarray:
    """Best rank-``r`` approximation (Frobenius) of a symmetric matrix."""
    q = _check_square_symmetric(q)
    if not 0 <= r <= q.shape[0]:
        raise ParameterError(f"rank must lie in [0, {q.shape[0]}], got {r}")
    if r == 0:
        return np.zeros_like(q)
    dec = eigh(q)
    v = dec.vectors[:, :r]
    out = (v * dec.values[:r]) @ v.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class LupDecomp:
    """Row-pivoted elimination ``P A = L U`` with a numeric rank.

    ``permutation`` lists row indices of ``A`` so that ``A[permutation]``
    equals ``L @ U``; the first ``numeric_rank`` of them are the pivot rows,
    which are linearly independent.  ``upper`` is in staircase (echelon)
    form, so columns without a pivot simply carry no elimination step.
    """

    permutation: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    numeric_rank: int


def _eliminate(a: np.ndarray):
    n, m = a.shape
    u = a.astype(float, copy=True)
    lower = np.eye(n)
    perm = np.arange(n)
    threshold = PIVOT_RTOL * (np.sqrt((a * a).sum(axis=0)).max() if a.size else 0.0)
    row = 0
    for col in range(m):
        if row >= n:
            break
        sub = np.abs(u[row:, col])
        k = row + int(np.argmax(sub))
        if np.abs(u[k, col]) <= threshold:
            continue  # no usable pivot in this column
        if k != row:
            u[[row, k]] = u[[k, row]]
            perm[[row, k]] = perm[[k, row]]
            lower[[row, k], :row] = lower[[k, row], :row]
        mult = u[row + 1:, col] / u[row, col]
        lower[row + 1:, row] = mult
        u[row + 1:, col + 1:] -= np.outer(mult, u[row, col + 1:])
        u[row + 1:, col] = 0.0
        row += 1
    return perm, lower, u, row


def lup(a) -> LupDecomp:
    """Gaussian elimination with row pivoting and column skipping.

    Columns whose remaining entries all fall below ``PIVOT_RTOL`` times the
    largest initial column norm contribute no pivot, so rank-deficient
    input yields ``numeric_rank < n`` and the pivot rows still form an
    independent leading block of ``A[permutation]``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {a.shape}")
    perm, lower, upper, rank = _eliminate(a)
    perm.setflags(write=False)
    lower.setflags(write=False)
    upper.setflags(write=False)
    return LupDecomp(perm, lower, upper, rank)


def pivot_rows(a, r: int) -> np.ndarray:
    """Indices of the first ``r`` pivot rows of ``a``, in pivot order.

    If elimination finds fewer than ``r`` pivots above the tolerance (a
    rounding-edge case when ``a`` is a truncated matrix whose smallest
    retained eigenvalue sits near the pivot cutoff), the deficit is filled
    with the remaining rows ordered by residual norm.
    """
    a = np.asarray(a, dtype=float)
    if not 1 <= r <= a.shape[0]:
        raise ParameterError(f"need 1 <= r <= {a.shape[0]}, got {r}")
    perm, _, upper, rank = _eliminate(a)
    if rank >= r:
        return perm[:r].copy()
    rest = perm[rank:]
    resid = np.sqrt((upper[rank:] * upper[rank:]).sum(axis=1))
    extra = rest[np.argsort(-resid, kind="stable")]
    return np.concatenate([perm[:rank], extra])[:r]


def solve_cholesky(kmat, b) -> np.ndarray:
    """Cholesky solve without a residual gate; raises on indefinite input."""
    kmat = np.asarray(kmat, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(kmat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    # one step of iterative refinement keeps the residual near machine level
    x += scipy.linalg.cho_solve(factor, b - kmat @ x, check_finite=False)
    return x


def solve_spd(kmat, b) -> np.ndarray:
    """Solve ``K x = b`` for symmetric positive definite ``K``.

    The residual of every right-hand side must come out below
    ``SOLVE_RTOL * ||b||``; otherwise the system is reported as numerically
    singular along with its smallest Cholesky pivot.
    """
    kmat = _check_square_symmetric(kmat)
    b = np.asarray(b, dtype=float)
    x = solve_cholesky(kmat, b)
    resid = kmat @ x - b
    r2 = np.atleast_2d(resid.T)
    b2 = np.atleast_2d(b.T)
    rn = np.sqrt((r2 * r2).sum(axis=1))
    bn = np.sqrt((b2 * b2).sum(axis=1))
    if np.any(rn > SOLVE_RTOL * np.maximum(bn, np.finfo(float).tiny)):
        diag = np.abs(np.diag(kmat))
        piv = int(np.argmin(diag))
        raise NumericalError(
            "solve residual exceeds tolerance; system is numerically singular "
            f"(weakest pivot {diag[piv]:.3e} at index {piv})"
        )
    return x
