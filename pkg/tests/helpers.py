"""Shared test oracles.

The dual QP oracle enumerates every assignment of points to the three KKT
states (at zero, at the box, free), solves the stationarity system on the
free block, and keeps the best feasible candidate.  For PD kernel matrices
(distinct points) the optimum's own assignment appears in the enumeration,
so the result is the exact global maximum — independent of the SMO code
under test.  Only practical for a handful of points (3^n assignments).
"""

import itertools

import numpy as np


def qp_oracle(k: np.ndarray, y: np.ndarray, c: float):
    """Exact dual maximum of the soft-margin SVM by active-set enumeration.

    Returns ``(value, alpha)`` maximizing ``sum(a) - 0.5 a'(yy' * K)a``
    subject to ``0 <= a <= c`` and ``a @ y = 0``.
    """
    n = y.size
    q = k * np.outer(y, y)
    best_val, best_alpha = -np.inf, None
    for assign in itertools.product((0, 1, 2), repeat=n):
        state = np.array(assign)
        free = state == 2
        alpha = np.where(state == 1, c, 0.0)
        if free.any():
            nf = int(free.sum())
            a_mat = np.zeros((nf + 1, nf + 1))
            a_mat[:nf, :nf] = q[np.ix_(free, free)]
            a_mat[:nf, nf] = y[free]
            a_mat[nf, :nf] = y[free]
            rhs = np.empty(nf + 1)
            rhs[:nf] = 1.0 - q[np.ix_(free, ~free)] @ alpha[~free]
            rhs[nf] = -(y[~free] @ alpha[~free])
            try:
                sol = np.linalg.solve(a_mat, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(sol[:nf] < -1e-9) or np.any(sol[:nf] > c + 1e-9):
                continue
            alpha[free] = np.clip(sol[:nf], 0.0, c)
        if abs(alpha @ y) > 1e-8 * max(1.0, c):
            continue
        val = alpha.sum() - 0.5 * alpha @ q @ alpha
        if val > best_val:
            best_val, best_alpha = val, alpha
    return best_val, best_alpha
