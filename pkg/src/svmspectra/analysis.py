"""Experiment drivers: performance surfaces, separable-effects prediction,
and the reduction-series diagnostics for covert overfitting.

A sweep walks one axis of the (overlap, imbalance) plane — or the coupled
diagonal — training a freshly selected model per cell and scoring it on a
fresh test set of the same size and distribution.  The independence check
fits per-axis derivative profiles from the two isolation slices, rebuilds
the surface by integration, and compares the prediction against the coupled
observations.  The reduction-series tools quantify how much of a model's
spectrum is actually needed, where the discarded part acts, and whether it
was doing anything but memorizing the ambiguous region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .backbone import (
    MAJORITY,
    MINORITY,
    BackboneSpec,
    LabeledDataset,
    ambiguous_region,
    generate,
)
from .errors import ConfigurationError, ParameterError, RangeError
from .seeding import derive_seed
from .selection import AnnealConfig, anneal_select, with_seed
from .spectral import ReducedModel, ReductionSeries
from .svm import RbfKernel, SvmModel, TrainConfig, decision_values, predict, rbf_matrix, train

AXES = ("imbalance", "overlap", "combined")

#: Coupled-axis schedule: alpha = 0.5 + ALPHA_SLOPE * mu.
ALPHA_SLOPE = 0.45

#: Default annealing budget for sweep cells (the single-model pipelines use
#: the full AnnealConfig defaults instead).
SWEEP_ANNEAL = AnnealConfig(steps=26, folds=3)

DEFAULT_DELTA = 0.001


def axis_params(axis: str, t: float) -> tuple[float, float]:
    """Map a sweep coordinate t in [0, 1] to (mu, alpha) for the given axis."""
    if axis == "imbalance":
        return 0.0, 0.5 + ALPHA_SLOPE * t
    if axis == "overlap":
        return t, 0.5
    if axis == "combined":
        return t, 0.5 + ALPHA_SLOPE * t
    raise ParameterError(f"unknown axis {axis!r}; expected one of {AXES}")


@dataclass(frozen=True)
class EvalResult:
    """Confusion counts and derived scores, minority positive."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    complexity: float


def evaluate(model: SvmModel, test: LabeledDataset) -> EvalResult:
    """Score a model on a labeled test set."""
    pred = predict(model, test.points)
    pos = test.labels == MINORITY
    pred_pos = pred == MINORITY
    tp = int((pred_pos & pos).sum())
    fp = int((pred_pos & ~pos).sum())
    fn = int((~pred_pos & pos).sum())
    tn = int((~pred_pos & ~pos).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return EvalResult(tp, fp, fn, tn, precision, recall, f1,
                      model.n_sv / model.training_size)


@dataclass(frozen=True)
class SurfaceCell:
    """One trained-and-scored cell of a performance surface."""

    axis: str
    t: float
    mu: float
    alpha: float
    n: int
    trial: int
    seed: int
    f1: float
    complexity: float


@dataclass(frozen=True)
class PerformanceSurface:
    """A bag of surface cells, mergeable across sweeps."""

    cells: tuple[SurfaceCell, ...]

    def filtered(self, axis: str | None = None, n: int | None = None) -> tuple[SurfaceCell, ...]:
        out = self.cells
        if axis is not None:
            out = tuple(c for c in out if c.axis == axis)
        if n is not None:
            out = tuple(c for c in out if c.n == n)
        return out

    def slice_means(self, axis: str, n: int | None = None):
        """Sorted t grid with per-t trial means and standard deviations."""
        cells = self.filtered(axis, n)
        if not cells:
            raise ConfigurationError(f"surface has no cells on the {axis!r} axis")
        ts = sorted({c.t for c in cells})
        means, stds = [], []
        for t in ts:
            vals = np.array([c.f1 for c in cells if c.t == t])
            means.append(float(vals.mean()))
            stds.append(float(vals.std()))
        return np.array(ts), np.array(means), np.array(stds)

    @staticmethod
    def combine(surfaces) -> "PerformanceSurface":
        cells: list[SurfaceCell] = []
        for s in surfaces:
            cells.extend(s.cells)
        return PerformanceSurface(tuple(cells))


def _run_cell(task) -> SurfaceCell:
    axis, t, t_idx, n, n_idx, trial, master, anneal = task
    mu, alpha = axis_params(axis, t)
    seed_train = derive_seed(master, axis, t_idx, n_idx, trial, "train")
    seed_test = derive_seed(master, axis, t_idx, n_idx, trial, "test")
    seed_select = derive_seed(master, axis, t_idx, n_idx, trial, "select")
    train_set = generate(BackboneSpec(mu, alpha, n, seed_train))
    test_set = generate(BackboneSpec(mu, alpha, n, seed_test))
    point = anneal_select(train_set, with_seed(anneal, seed_select))
    model = train(
        train_set,
        TrainConfig(c=point.c, seed=derive_seed(seed_select, "final")),
        RbfKernel(point.gamma),
    )
    res = evaluate(model, test_set)
    return SurfaceCell(axis, float(t), mu, alpha, n, trial, seed_train, res.f1, res.complexity)


def sweep(
    axis: str,
    sizes,
    trials: int,
    seed: int,
    grid=None,
    anneal: AnnealConfig = SWEEP_ANNEAL,
    map_fn=map,
) -> PerformanceSurface:
    """Train and score one model per (t, n, trial) cell along an axis.

    ``grid`` defaults to 11 evenly spaced points on [0, 1].  Cells are
    independent; ``map_fn`` may evaluate them concurrently.  Results are
    assembled in cell order, so the surface does not depend on scheduling.
    """
    if axis not in AXES:
        raise ParameterError(f"unknown axis {axis!r}; expected one of {AXES}")
    if trials < 1:
        raise ParameterError("need at least one trial")
    grid = np.linspace(0.0, 1.0, 11) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0.0) or np.any(grid > 1.0):
        raise ParameterError("grid must be a non-empty list of t values in [0, 1]")
    tasks = [
        (axis, float(t), ti, int(n), ni, trial, seed, anneal)
        for ti, t in enumerate(grid)
        for ni, n in enumerate(sizes)
        for trial in range(trials)
    ]
    cells = list(map_fn(_run_cell, tasks))
    cells.sort(key=lambda c: (c.axis, c.t, c.n, c.trial))
    return PerformanceSurface(tuple(cells))


@dataclass(frozen=True)
class IndependenceModel:
    """Separable surface model P(mu, alpha) = constant + F(mu) + G(alpha).

    ``f_prime``/``g_prime`` are finite-difference derivative samples along
    the isolation slices; F and G are their running trapezoid integrals
    anchored at mu = 0 and alpha = 0.5.
    """

    mu_grid: np.ndarray
    f_prime: np.ndarray
    alpha_grid: np.ndarray
    g_prime: np.ndarray
    constant: float

    def f_integral(self) -> np.ndarray:
        return cumulative_trapezoid(self.f_prime, self.mu_grid, initial=0.0)

    def g_integral(self) -> np.ndarray:
        return cumulative_trapezoid(self.g_prime, self.alpha_grid, initial=0.0)


def fit_independence(surface: PerformanceSurface, n: int | None = None) -> IndependenceModel:
    """Fit the additive surface model from the two isolation slices.

    Requires an overlap slice (alpha = 0.5) and an imbalance slice (mu = 0)
    in the surface.  Derivatives are central differences in the interior and
    one-sided at the ends; the constant is the pooled mean at the shared
    anchor cell (mu = 0, alpha = 0.5).
    """
    if n is None:
        sizes = {c.n for c in surface.cells}
        if len(sizes) > 1:
            raise ConfigurationError("surface mixes sizes; pass n explicitly")
    mu_ts, mu_means, _ = surface.slice_means("overlap", n)
    al_ts, al_means, _ = surface.slice_means("imbalance", n)
    if abs(mu_ts[0]) > 1e-12 or abs(al_ts[0]) > 1e-12:
        raise ConfigurationError("both slices must start at the anchor cell")
    if len(mu_ts) < 2 or len(al_ts) < 2:
        raise ConfigurationError("need at least two grid points per slice")
    mu_grid = mu_ts
    alpha_grid = 0.5 + ALPHA_SLOPE * al_ts
    anchor = [c.f1 for c in surface.filtered(n=n)
              if c.mu == 0.0 and c.alpha == 0.5]
    return IndependenceModel(
        mu_grid=mu_grid,
        f_prime=np.gradient(mu_means, mu_grid),
        alpha_grid=alpha_grid,
        g_prime=np.gradient(al_means, alpha_grid),
        constant=float(np.mean(anchor)),
    )


def predict_performance(model: IndependenceModel, mu: float, alpha: float) -> float:
    """Evaluate the fitted additive surface at (mu, alpha).

    Grid nodes are exact (trapezoid integral of the derivative samples);
    off-node queries interpolate linearly.  Queries outside either sampled
    grid raise a range error.
    """
    if not model.mu_grid[0] <= mu <= model.mu_grid[-1]:
        raise RangeError(f"mu {mu} outside sampled range "
                         f"[{model.mu_grid[0]}, {model.mu_grid[-1]}]")
    if not model.alpha_grid[0] <= alpha <= model.alpha_grid[-1]:
        raise RangeError(f"alpha {alpha} outside sampled range "
                         f"[{model.alpha_grid[0]}, {model.alpha_grid[-1]}]")
    f = float(np.interp(mu, model.mu_grid, model.f_integral()))
    g = float(np.interp(alpha, model.alpha_grid, model.g_integral()))
    return model.constant + f + g


def detect_breakpoint(path_means) -> float:
    """The t whose step from its predecessor loses the most F1.

    ``path_means`` is a sequence of (t, mean_f1) pairs; ties resolve to the
    smaller t.
    """
    pairs = sorted((float(t), float(v)) for t, v in path_means)
    if len(pairs) < 3:
        raise ParameterError("need at least three path points")
    ts = [t for t, _ in pairs]
    vals = np.array([v for _, v in pairs])
    drops = vals[:-1] - vals[1:]
    return ts[int(np.argmax(drops)) + 1]


def _entry_rank(entry, position: int) -> int:
    return int(getattr(entry, "rank", position + 1))


def _entry_model(entry) -> SvmModel:
    return entry.as_model() if hasattr(entry, "as_model") else entry


def _series_predictions(series: ReductionSeries, points: np.ndarray) -> np.ndarray:
    """Label matrix, one row per series entry.  Shares the test-to-support
    kernel block when all entries reduce the same base."""
    models = series.models
    fast = all(isinstance(m, ReducedModel) and m.base is series.base for m in models)
    if fast:
        cross = rbf_matrix(series.base.kernel, np.asarray(points, dtype=float),
                           series.base.support_vectors)
        rows = []
        for m in models:
            values = cross[:, m.retained] @ m.coeffs + m.bias
            rows.append(np.where(values > 0.0, MINORITY, MAJORITY))
        return np.array(rows)
    return np.array([predict(_entry_model(m), points) for m in models])


@dataclass(frozen=True)
class LabelChangeMatrix:
    """Which test points flip label between consecutive ranks.

    ``flags[i, j]`` says point ``point_ids[i]`` changes label between the
    series entries at ``ranks[j] - 1`` and ``ranks[j]``.  Rows are ordered
    by the largest rank at which the point still changes, descending, so
    late-breaking points come first.
    """

    flags: np.ndarray
    ranks: np.ndarray
    point_ids: np.ndarray
    rank_counts: np.ndarray


def label_changes(series: ReductionSeries, test: LabeledDataset) -> LabelChangeMatrix:
    """Per-point label flips between consecutive entries of the series."""
    if len(series.models) < 2:
        raise ParameterError("need at least two series entries to compare")
    preds = _series_predictions(series, test.points)
    flags = (preds[1:] != preds[:-1]).T  # (n_points, n_entries - 1)
    ranks = np.array([_entry_rank(m, i) for i, m in enumerate(series.models)])[1:]
    last_change = np.where(flags.any(axis=1), ranks[flags.shape[1] - 1 - np.argmax(flags[:, ::-1], axis=1)], 0)
    order = np.argsort(-last_change, kind="stable")
    return LabelChangeMatrix(
        flags=flags[order],
        ranks=ranks,
        point_ids=order,
        rank_counts=flags.sum(axis=0),
    )


@dataclass(frozen=True)
class SufficiencyReport:
    """Lowest rank from which the series never scores below base - delta.

    ``essential_rank`` records the top rank of the series under analysis;
    ``overlap_score`` is the sufficiency point as a fraction of it.
    """

    sufficiency_point: int
    base_f1: float
    delta: float
    essential_rank: int
    overlap_score: float
    qualified: bool


def sufficiency(series: ReductionSeries, test: LabeledDataset,
                delta: float = DEFAULT_DELTA) -> SufficiencyReport:
    """Find the sufficiency point of a reduction series on a test set.

    The sufficiency point is the smallest rank r such that every series
    entry of rank >= r scores at least ``base_f1 - delta``.  If even the
    final entry falls short the essential rank is reported with
    ``qualified=False``.
    """
    if delta < 0:
        raise ParameterError("delta must be non-negative")
    if not series.models:
        raise ParameterError("empty series")
    base_f1 = evaluate(series.base, test).f1
    ranks = [_entry_rank(m, i) for i, m in enumerate(series.models)]
    scores = [evaluate(_entry_model(m), test).f1 for m in series.models]
    ess = ranks[-1]
    ok = np.array(scores) >= base_f1 - delta
    if not ok[-1]:
        point, qualified = ess, False
    else:
        k = len(ok)
        while k > 0 and ok[k - 1]:
            k -= 1
        point, qualified = ranks[k], True
    return SufficiencyReport(
        sufficiency_point=int(point),
        base_f1=float(base_f1),
        delta=float(delta),
        essential_rank=int(ess),
        overlap_score=float(point) / float(ess),
        qualified=qualified,
    )


@dataclass(frozen=True)
class LocalizationResult:
    """Where the late label changes live along the class axis.

    ``histogram`` counts changed points (any flip at or above the
    sufficiency point) over 50 uniform x1 bins.  ``proportion_curve[j]`` is
    the fraction of points with a flip at rank >= ``ranks[j]`` that lie in
    the ambiguous region; NaN where no point qualifies.
    """

    histogram: np.ndarray
    bin_edges: np.ndarray
    ranks: np.ndarray
    proportion_curve: np.ndarray


def localization(matrix: LabelChangeMatrix, report: SufficiencyReport,
                 test: LabeledDataset, mu: float) -> LocalizationResult:
    """Histogram and ambiguous-region proportions of the changed points."""
    region = ambiguous_region(mu)
    x1 = test.points[matrix.point_ids, 0]
    late_cols = matrix.ranks >= report.sufficiency_point
    changed = matrix.flags[:, late_cols].any(axis=1)
    hist, edges = np.histogram(x1[changed], bins=50, range=(0.0, 1.0))
    curve = np.full(matrix.ranks.size, np.nan)
    for j in range(matrix.ranks.size):
        rows = matrix.flags[:, j:].any(axis=1)
        if rows.any():
            curve[j] = float(region.contains(x1[rows]).mean())
    return LocalizationResult(
        histogram=hist,
        bin_edges=edges,
        ranks=matrix.ranks.copy(),
        proportion_curve=curve,
    )
