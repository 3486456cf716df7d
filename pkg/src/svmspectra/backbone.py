"""Synthetic two-dimensional benchmark data with tunable class overlap and imbalance.

Samples live in the unit square.  The first coordinate carries all of the
class structure: it is split into four base regions with alternating class
membership, and the overlap level widens every region symmetrically so that
the classes bleed across the boundaries.  The second coordinate is uniform
noise for both classes.  The imbalance level fixes the majority-class
fraction of the sample.

Class 0 is the minority (positive) class throughout the toolkit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .seeding import make_rng

MINORITY = 0
MAJORITY = 1

#: Half-width added to each side of a base region at full overlap (mu = 1).
EXPANSION = 0.25

ALPHA_MIN = 0.5
ALPHA_MAX = 0.95

_BASE_REGIONS = {
    MINORITY: ((0.0, 0.25), (0.5, 0.75)),
    MAJORITY: ((0.25, 0.5), (0.75, 1.0)),
}


def _check_mu(mu: float) -> None:
    if not 0.0 <= mu <= 1.0:
        raise ParameterError(f"overlap level must lie in [0, 1], got {mu}")


def _check_alpha(alpha: float) -> None:
    if not ALPHA_MIN <= alpha <= ALPHA_MAX:
        raise ParameterError(
            f"imbalance level must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}"
        )


@dataclass(frozen=True)
class BackboneSpec:
    """Generator parameters: overlap mu, majority fraction alpha, size, seed."""

    mu: float
    alpha: float
    n: int
    seed: int

    def __post_init__(self):
        _check_mu(self.mu)
        _check_alpha(self.alpha)
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"sample count must be an integer >= 2, got {self.n}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class IntervalSet:
    """Disjoint ascending intervals on [0, 1]."""

    intervals: tuple[tuple[float, float], ...]

    @property
    def total_length(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def contains(self, x) -> np.ndarray:
        """Elementwise membership, endpoints included."""
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x >= a) & (x <= b)
        return inside

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        """Intersection; zero-length touches are dropped."""
        pieces = []
        for a, b in self.intervals:
            for c, d in other.intervals:
                lo, hi = max(a, c), min(b, d)
                if hi > lo:
                    pieces.append((lo, hi))
        return IntervalSet(tuple(sorted(pieces)))


def _merged(intervals) -> IntervalSet:
    """Sort, clip to [0, 1], and merge overlapping or touching intervals."""
    clipped = sorted((max(0.0, a), min(1.0, b)) for a, b in intervals)
    merged: list[list[float]] = []
    for a, b in clipped:
        if b <= a:
            continue
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return IntervalSet(tuple((a, b) for a, b in merged))


def class_support(class_id: int, mu: float) -> IntervalSet:
    """Support of a class's sampling density at overlap level ``mu``.

    Each base region is expanded by ``mu * EXPANSION`` on both sides; the
    expanded regions are merged and clipped to the unit interval.
    """
    _check_mu(mu)
    if class_id not in _BASE_REGIONS:
        raise ParameterError(f"unknown class id {class_id}")
    pad = mu * EXPANSION
    return _merged((a - pad, b + pad) for a, b in _BASE_REGIONS[class_id])


def ambiguous_region(mu: float) -> IntervalSet:
    """Region where both class densities are positive (and equal)."""
    return class_support(MINORITY, mu).intersect(class_support(MAJORITY, mu))


def majority_count(alpha: float, n: int) -> int:
    """Number of majority samples: alpha * n rounded half-up."""
    return int(np.floor(alpha * n + 0.5))


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable points (n, 2) with labels in {MINORITY, MAJORITY}."""

    points: np.ndarray
    labels: np.ndarray
    spec: BackboneSpec | None = None

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=float)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ParameterError(f"points must have shape (n, 2), got {points.shape}")
        if labels.shape != (points.shape[0],):
            raise ParameterError("labels must align one-to-one with points")
        if not np.isin(labels, (MINORITY, MAJORITY)).all():
            raise ParameterError("labels must be MINORITY (0) or MAJORITY (1)")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        if self.spec is not None:
            if len(points) != self.spec.n:
                raise ParameterError("dataset size does not match its spec")
            want = majority_count(self.spec.alpha, self.spec.n)
            if int((labels == MAJORITY).sum()) != want:
                raise ParameterError("majority count does not match its spec")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_minority(self) -> int:
        return int((self.labels == MINORITY).sum())

    @property
    def n_majority(self) -> int:
        return int((self.labels == MAJORITY).sum())

    def signs(self) -> np.ndarray:
        """Labels as +1 (minority) / -1 (majority)."""
        return np.where(self.labels == MINORITY, 1.0, -1.0)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.points[idx], self.labels[idx])


def _sample_union(rng: np.random.Generator, support: IntervalSet, count: int) -> np.ndarray:
    """Uniform draws from a union of disjoint intervals."""
    lengths = np.array([b - a for a, b in support.intervals])
    starts = np.array([a for a, _ in support.intervals])
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    u = rng.random(count) * edges[-1]
    k = np.searchsorted(edges, u, side="right") - 1
    k = np.clip(k, 0, len(lengths) - 1)
    return starts[k] + (u - edges[k])


def generate(spec: BackboneSpec) -> LabeledDataset:
    """Draw a dataset for ``spec``; deterministic given ``spec.seed``.

    The first coordinate of each point is uniform over its class support,
    the second is uniform on [0, 1]; the sample is then shuffled.
    """
    rng = make_rng(spec.seed)
    n_major = majority_count(spec.alpha, spec.n)
    n_minor = spec.n - n_major
    x1 = np.concatenate([
        _sample_union(rng, class_support(MINORITY, spec.mu), n_minor),
        _sample_union(rng, class_support(MAJORITY, spec.mu), n_major),
    ])
    x2 = rng.random(spec.n)
    labels = np.concatenate([
        np.full(n_minor, MINORITY, dtype=np.int64),
        np.full(n_major, MAJORITY, dtype=np.int64),
    ])
    order = rng.permutation(spec.n)
    return LabeledDataset(np.column_stack([x1, x2])[order], labels[order], spec)


def bayes_f1(mu: float, alpha: float) -> float:
    """Best achievable F1 (minority positive) under the exact densities and priors.

    Outside the ambiguous region the optimal rule follows the only class
    with positive density.  Inside it the two class densities are equal, so
    only the total ambiguous mass assigned to the minority matters; F1 is
    monotone in that mass, hence the optimum sits at one of the two extreme
    assignments, both available in closed form from interval lengths:

    * keep the ambiguous region for the majority: precision 1 and recall
      ``exclusive / support``;
    * claim the whole ambiguous region for the minority: recall 1 at a
      precision cost proportional to ``alpha * overlap / support``.
    """
    _check_mu(mu)
    _check_alpha(alpha)
    support = class_support(MINORITY, mu).total_length
    overlap = ambiguous_region(mu).total_length
    exclusive = support - overlap
    f1_cede = 2.0 * exclusive / (support + exclusive) if exclusive > 0 else 0.0
    f1_claim = 2.0 * (1.0 - alpha) / (2.0 * (1.0 - alpha) + alpha * overlap / support)
    return max(f1_cede, f1_claim)
