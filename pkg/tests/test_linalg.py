"""Linear-algebra layer: hand-computed spectra, reconstruction and
Eckart-Young identities, rank-revealing elimination against numpy's rank,
and the gated SPD solver."""

import numpy as np
import pytest
import scipy.linalg

from svmspectra.errors import ContractError, NumericalError, ParameterError
from svmspectra.linalg import (
    EIGEN_RANK_RTOL,
    eigen_rank,
    eigh,
    low_rank,
    lup,
    pivot_rows,
    solve_cholesky,
    solve_spd,
)


def _random_symmetric(rng, n, rank=None):
    if rank is None:
        b = rng.normal(size=(n, n))
        return 0.5 * (b + b.T)
    b = rng.normal(size=(n, rank))
    return b @ b.T


def test_eigh_two_by_two_by_hand():
    dec = eigh([[2.0, 1.0], [1.0, 2.0]])
    assert dec.values == pytest.approx([3.0, 1.0])
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    # eigenvector signs are free; compare absolute components
    assert np.abs(dec.vectors[:, 0]) == pytest.approx([inv_sqrt2, inv_sqrt2])
    assert np.abs(dec.vectors[:, 1]) == pytest.approx([inv_sqrt2, inv_sqrt2])


def test_eigh_rejects_non_symmetric():
    with pytest.raises(ContractError):
        eigh([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ContractError):
        eigh(np.ones((2, 3)))


def test_eigh_invariants_random():
    rng = np.random.default_rng(42)
    for n in (1, 3, 17, 60, 200):
        q = _random_symmetric(rng, n)
        dec = eigh(q)
        assert np.all(np.diff(dec.values) <= 1e-12)
        vtv = dec.vectors.T @ dec.vectors
        assert np.abs(vtv - np.eye(n)).max() <= 1e-10
        recon = (dec.vectors * dec.values) @ dec.vectors.T
        err = np.linalg.norm(recon - q)
        assert err <= 1e-8 * max(1.0, np.linalg.norm(q))


def test_eigen_rank_thresholding():
    vals = np.array([3.0, 2.0, 3.0 * EIGEN_RANK_RTOL * 0.5, 0.0])
    vecs = np.eye(4)
    assert eigen_rank(eigh(np.diag(vals))) == 2
    assert eigen_rank(eigh(np.zeros((3, 3)))) == 0
    del vecs


def test_eigen_rank_matches_construction():
    rng = np.random.default_rng(7)
    for n, r in [(10, 3), (40, 12), (80, 80)]:
        q = _random_symmetric(rng, n, rank=r)
        assert eigen_rank(eigh(q)) == r


def test_low_rank_eckart_young():
    """Truncation residual must equal the tail eigenvalue energy exactly."""
    rng = np.random.default_rng(3)
    for n in (5, 30, 120):
        q = _random_symmetric(rng, n, rank=n)  # PSD, generically full rank
        dec = eigh(q)
        for r in (0, 1, n // 2, n):
            approx = low_rank(q, r)
            assert np.abs(approx - approx.T).max() == 0.0
            resid = np.linalg.norm(q - approx) ** 2
            tail = float((dec.values[r:] ** 2).sum())
            assert resid == pytest.approx(tail, abs=1e-16 + 1e-10 * tail)
            assert np.linalg.matrix_rank(approx, tol=1e-10) <= r


def test_low_rank_edge_ranks():
    q = np.diag([4.0, 1.0])
    assert np.array_equal(low_rank(q, 0), np.zeros((2, 2)))
    assert low_rank(q, 1) == pytest.approx(np.diag([4.0, 0.0]))
    assert low_rank(q, 2) == pytest.approx(q)
    with pytest.raises(ParameterError):
        low_rank(q, 3)
    with pytest.raises(ParameterError):
        low_rank(q, -1)


def test_lup_reconstruction_and_shape():
    rng = np.random.default_rng(11)
    for n in (2, 7, 25, 200):
        a = rng.normal(size=(n, n))
        dec = lup(a)
        assert np.allclose(a[dec.permutation], dec.lower @ dec.upper,
                           atol=1e-10 * np.linalg.norm(a))
        assert np.allclose(np.diag(dec.lower), 1.0)
        assert np.abs(np.triu(dec.lower, k=1)).max() == 0.0
        assert dec.numeric_rank == n


def test_lup_rank_matches_numpy():
    rng = np.random.default_rng(5)
    for n, r in [(6, 2), (20, 9), (50, 50), (64, 1)]:
        a = rng.normal(size=(n, r)) @ rng.normal(size=(r, n))
        dec = lup(a)
        assert dec.numeric_rank == np.linalg.matrix_rank(a)
        assert np.allclose(a[dec.permutation], dec.lower @ dec.upper,
                           atol=1e-9 * np.linalg.norm(a))


def test_lup_pivot_rows_are_independent():
    rng = np.random.default_rng(19)
    for n, r in [(12, 4), (30, 11)]:
        a = rng.normal(size=(n, r)) @ rng.normal(size=(r, n))
        dec = lup(a)
        lead = a[dec.permutation[:dec.numeric_rank]]
        assert np.linalg.matrix_rank(lead) == dec.numeric_rank


def test_lup_duplicate_rows():
    base = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, -1.0]])
    dec = lup(base)  # row 1 is twice row 0
    assert dec.numeric_rank == 2
    lead = base[dec.permutation[:2]]
    assert np.linalg.matrix_rank(lead) == 2


def test_pivot_rows_basic_and_deficit():
    rng = np.random.default_rng(23)
    a = rng.normal(size=(8, 3)) @ rng.normal(size=(3, 8))
    got = pivot_rows(a, 3)
    assert got.size == 3 and np.unique(got).size == 3
    assert np.linalg.matrix_rank(a[got]) == 3
    # asking past the true rank falls back to residual-ordered fills
    more = pivot_rows(a, 5)
    assert more.size == 5 and np.unique(more).size == 5
    assert np.array_equal(more[:3], got)
    with pytest.raises(ParameterError):
        pivot_rows(a, 0)
    with pytest.raises(ParameterError):
        pivot_rows(a, 9)


def test_solve_spd_against_numpy():
    rng = np.random.default_rng(31)
    for n in (2, 10, 80):
        k = _random_symmetric(rng, n, rank=n) + 0.5 * np.eye(n)
        b = rng.normal(size=n)
        x = solve_spd(k, b)
        assert x == pytest.approx(np.linalg.solve(k, b), abs=1e-8)
        bm = rng.normal(size=(n, 3))
        xm = solve_spd(k, bm)
        assert np.allclose(k @ xm, bm, atol=1e-8 * np.linalg.norm(bm))


def test_solve_spd_rejects_singular():
    k = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NumericalError):
        solve_spd(k, np.array([1.0, 0.0]))
    # Hilbert 13x13 passes the factorization but not the residual gate,
    # which is the path that reports the weakest pivot
    h = scipy.linalg.hilbert(13)
    with pytest.raises(NumericalError, match="pivot"):
        solve_spd(h, np.ones(13))


def test_solve_cholesky_has_no_residual_gate():
    # nearly singular but factorizable: the ungated variant still answers
    k = np.diag([1.0, 1e-15])
    x = solve_cholesky(k, np.array([1.0, 1.0]))
    assert x[0] == pytest.approx(1.0)
    assert x[1] == pytest.approx(1e15, rel=1e-6)


def test_solve_cholesky_raises_on_indefinite():
    with pytest.raises(NumericalError):
        solve_cholesky(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))
