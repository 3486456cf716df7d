"""Rank reduction: exact reconstruction at the essential rank, the projected
coefficient update checked by hand, hyperplane angles, and the reduced wire
format."""

import hashlib
import itertools
import warnings

import numpy as np
import pytest

from svmspectra.backbone import BackboneSpec, generate
from svmspectra.errors import ContractError, DegenerateModelError, ParameterError, ParseError
from svmspectra.linalg import eigh, low_rank
from svmspectra.spectral import (
    SERIES_RANK_TOL,
    build_series,
    essential_rank,
    essential_set,
    hyperplane_cosine,
    load_reduced_model,
    project_onto,
    reduce,
    save_reduced_model,
    series_cosines,
)
from svmspectra.svm import (
    RbfKernel,
    SvmModel,
    TrainConfig,
    decision_values,
    kernel_matrix,
    rbf_matrix,
    save_model,
    train,
)


def _grid(side=101):
    axis = np.linspace(0.0, 1.0, side)
    gx, gy = np.meshgrid(axis, axis)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _handmade(points, coeffs, gamma=1.0, bias=0.25):
    return SvmModel(np.asarray(points, dtype=float), np.asarray(coeffs, dtype=float),
                    bias, RbfKernel(gamma), training_size=len(coeffs), c=1.0)


def _trained(mu, seed, n=200, gamma=4.0, c=4.0):
    data = generate(BackboneSpec(mu, 0.5, n, seed))
    return train(data, TrainConfig(c=c, seed=seed), RbfKernel(gamma))


def test_duplicate_support_vectors_merge():
    model = _handmade([[0.2, 0.3], [0.2, 0.3], [0.8, 0.6]], [0.7, 0.5, -1.2])
    red = essential_set(model)
    assert red.rank == 2
    assert sorted(np.concatenate([red.retained, red.removed])) == [0, 1, 2]
    assert 2 in red.retained
    kept_dup = [i for i in red.retained if i in (0, 1)]
    assert len(kept_dup) == 1
    merged = dict(zip(red.retained, red.coeffs))
    assert merged[kept_dup[0]] == pytest.approx(1.2, abs=1e-10)
    assert merged[2] == pytest.approx(-1.2, abs=1e-10)
    assert red.bias == model.bias
    pts = _grid(21)
    assert decision_values(red.as_model(), pts) == pytest.approx(
        decision_values(model, pts), abs=1e-9)


def test_full_rank_model_reduces_to_itself():
    rng = np.random.default_rng(0)
    model = _handmade(rng.uniform(0, 1, size=(12, 2)), rng.normal(size=12), gamma=2.0)
    red = essential_set(model)
    assert red.rank == 12
    assert np.array_equal(red.retained, np.arange(12))
    assert red.removed.size == 0
    assert red.coeffs == pytest.approx(model.coeffs, abs=1e-12)


def test_essential_set_reconstructs_trained_model():
    model = _trained(0.8, seed=42)
    red = essential_set(model)
    assert red.rank == essential_rank(model)
    pts = _grid(101)
    base_vals = decision_values(model, pts)
    red_vals = decision_values(red.as_model(), pts)
    assert np.abs(red_vals - base_vals).max() <= 1e-6


def test_reduce_rank_bounds_and_endpoint():
    model = _trained(0.4, seed=7, n=120)
    r = essential_rank(model)
    with pytest.raises(ParameterError):
        reduce(model, 0)
    with pytest.raises(ParameterError):
        reduce(model, r + 1)
    top = reduce(model, r)
    ess = essential_set(model)
    assert np.array_equal(top.retained, ess.retained)
    assert top.coeffs == pytest.approx(ess.coeffs, abs=1e-12)


def test_rank_one_coefficient_update_by_hand():
    model = _handmade([[0.1, 0.2], [0.5, 0.9], [0.9, 0.4], [0.3, 0.7]],
                      [1.1, -0.4, 0.8, -0.6], gamma=1.5)
    red = reduce(model, 1)
    assert red.retained.size == 1 and red.removed.size == 3
    q = kernel_matrix(model)
    i = int(red.retained[0])
    # 1x1 projection: beta_j = K(x_i, x_j) / K(x_i, x_i) = K(x_i, x_j)
    expect = model.coeffs[i] + sum(model.coeffs[j] * q[i, j] for j in red.removed)
    assert red.coeffs[0] == pytest.approx(expect, rel=1e-10)
    assert red.bias == model.bias


def test_projection_coefficients_solve_gram_system():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(10, 2))
    q = rbf_matrix(RbfKernel(2.0), pts, pts)
    np.fill_diagonal(q, 1.0)
    retained = np.arange(6)
    removed = np.arange(6, 10)
    proj = project_onto(q, retained, removed)
    assert proj.beta.shape == (4, 6)
    resid = q[np.ix_(retained, retained)] @ proj.beta.T - q[np.ix_(retained, removed)]
    assert np.abs(resid).max() <= 1e-8


def test_series_ranks_and_convergence():
    model = _trained(0.4, seed=11, n=150)
    series = build_series(model)
    q = kernel_matrix(model)
    values = eigh(q).values
    n = len(series.models)
    assert n == int(np.sum(values > SERIES_RANK_TOL * values[0]))
    assert n <= essential_rank(model)
    assert np.array_equal(series.ranks, np.arange(1, n + 1))
    cos = series_cosines(series)
    assert cos.shape == (n,)
    assert np.all(cos >= -1.0) and np.all(cos <= 1.0)
    # the last member is test-indistinguishable from the base, not exact
    # (this fixture measures 0.9995)
    assert cos[-1] >= 0.995
    assert hyperplane_cosine(model, series.models[-1]) == pytest.approx(cos[-1], abs=1e-9)
    # truncation residual of the underlying Gram is nonincreasing in rank
    resid = [np.linalg.norm(q - low_rank(q, int(k))) for k in series.ranks]
    assert all(b <= a + 1e-9 for a, b in zip(resid, resid[1:]))


def test_series_of_rank_one_model():
    model = _handmade([[0.4, 0.4], [0.4, 0.4]], [0.3, 0.9])
    series = build_series(model)
    assert len(series.models) == 1
    assert series.models[0].rank == 1


def test_hyperplane_cosine_basics():
    model = _trained(0.2, seed=5, n=100)
    assert hyperplane_cosine(model, model) == pytest.approx(1.0, abs=1e-12)
    flipped = SvmModel(model.support_vectors, -model.coeffs, model.bias,
                       model.kernel, model.training_size, model.c)
    assert hyperplane_cosine(model, flipped) == pytest.approx(-1.0, abs=1e-12)
    other = _trained(0.2, seed=6, n=100)
    ab = hyperplane_cosine(model, other)
    assert hyperplane_cosine(other, model) == ab  # symmetric bit for bit
    assert -1.0 <= ab <= 1.0


def test_hyperplane_cosine_errors():
    model = _trained(0.2, seed=5, n=100)
    with pytest.raises(ContractError):
        hyperplane_cosine(model, SvmModel(model.support_vectors, model.coeffs,
                                          model.bias, RbfKernel(0.5),
                                          model.training_size, model.c))
    zero = _handmade([[0.5, 0.5]], [0.0])
    with pytest.raises(DegenerateModelError):
        hyperplane_cosine(zero, zero)


def test_reduced_subset_near_optimal_small_scale():
    """Enumerate all candidate subsets and flag (never fail) if the pivoting
    heuristic missed the smallest projection residual."""
    rng = np.random.default_rng(9)
    model = _handmade(rng.uniform(0, 1, size=(5, 2)), rng.normal(size=5), gamma=1.0)
    q = kernel_matrix(model)

    def subset_residual(keep):
        keep = np.asarray(keep)
        drop = np.setdiff1d(np.arange(5), keep)
        kii = q[np.ix_(keep, keep)]
        kid = q[np.ix_(keep, drop)]
        return float(np.trace(q[np.ix_(drop, drop)] - kid.T @ np.linalg.solve(kii, kid)))

    for r in (2, 3):
        red = reduce(model, r)
        got = subset_residual(red.retained)
        best = min(subset_residual(list(s)) for s in itertools.combinations(range(5), r))
        assert got >= best - 1e-8
        if got > best + 1e-8:
            warnings.warn(
                f"rank-{r} pivot choice residual {got:.3e} vs optimum {best:.3e}",
                stacklevel=1,
            )


def test_reduced_model_round_trip():
    model = _trained(0.4, seed=13, n=120)
    red = reduce(model, max(1, essential_rank(model) // 2))
    blob = save_reduced_model(red)
    view, meta = load_reduced_model(blob)
    pts = _grid(31)
    assert np.array_equal(decision_values(view, pts),
                          decision_values(red.as_model(), pts))
    assert meta["rank"] == red.rank
    assert np.array_equal(meta["retained_indices"], red.retained)
    assert meta["base_hash"] == hashlib.sha256(save_model(model)).hexdigest()


def test_reduced_model_parse_errors():
    model = _trained(0.0, seed=1, n=60)
    blob = save_reduced_model(reduce(model, 1))
    with pytest.raises(ParseError):
        load_reduced_model(blob[:40])
    with pytest.raises(ParseError):
        load_reduced_model(save_model(model))  # plain-model document
