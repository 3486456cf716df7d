"""Rank-reduced approximations of a trained RBF SVM.

The Gram matrix of the support vectors is truncated to its leading
eigenvalues, a row basis of the truncated matrix (found by pivoted
elimination) picks the support vectors to keep, and every dropped vector is
projected, in the implicit feature space, onto the span of the kept ones.
The projection coordinates fold the dropped dual weights into the kept
weights; the bias is copied unchanged.

Reducing at the numeric rank of the Gram matrix ("the essential set") only
removes linearly dependent support vectors, so it reproduces the original
decision function to within roundoff.  Because dependence is judged through
a spectral cutoff, a removed vector can carry a tiny independent component;
with box-scale dual weights those components can add up past the exactness
contract, so the essential rank is escalated above the spectral rank until
the reduced decision surface agrees with the original to RECONSTRUCTION_TOL
on a fixed evaluation lattice.  Reducing below the essential rank produces a
deliberately impoverished model; comparing the series of such models against
the original is the basis of the analysis module.

A full series up to the essential rank would end in a long flat tail: once
the Gram spectrum has decayed a few orders of magnitude, stepping to the
next rank moves decision values by far less than the margin of any test
point, so successive members stop disagreeing anywhere.  The series is
therefore cut at the last informative rank -- the number of eigenvalues
above SERIES_RANK_TOL relative to the leading one -- which always lies at or
below the essential rank.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateModelError, NumericalError, ParameterError, ParseError
from .linalg import eigen_rank, eigh, pivot_rows, solve_cholesky, solve_spd
from .svm import RbfKernel, SvmModel, kernel_matrix, rbf_matrix, save_model, _g17, _load_document

REDUCED_FORMAT = "svmspectra/rbf-svm-reduced"

#: Relative jitter added to a retained-set Gram matrix that fails to solve.
PROJECTION_JITTER = 1e-10

#: Largest decision-value deviation an essential-set reduction may leave on
#: the evaluation lattice.  Kept an order of magnitude under the 1e-6
#: exact-reconstruction contract.
RECONSTRUCTION_TOL = 1e-7

#: Relative eigenvalue cutoff ending a reduction series.  A rank step whose
#: eigenvalue sits below this fraction of the leading one perturbs decision
#: values by roughly sqrt(ratio) of the decision scale -- too little to
#: relabel more than stray points -- so members past the cutoff would all
#: replay the base model's predictions.
SERIES_RANK_TOL = 1e-5

#: Evaluation lattice over the unit square used to certify reconstruction.
#: (An RKHS-norm test would be domain-free, but the quadratic form cancels
#: catastrophically in double precision at this tolerance, while decision
#: values subtract cleanly.)
_PROBE_SIDE = 101


@dataclass(frozen=True)
class ProjectionCoeffs:
    """Coordinates of each dropped vector in the span of the retained set.

    Row ``j`` of ``beta`` solves ``K_II beta_j = k_I(x_j)`` where ``K_II`` is
    the retained-set Gram matrix and ``k_I(x_j)_i = K(x_i, x_j)``.
    """

    retained: np.ndarray
    removed: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class ReducedModel:
    """A rank-``rank`` approximation of ``base`` on a subset of its support vectors."""

    base: SvmModel
    retained: np.ndarray
    removed: np.ndarray
    coeffs: np.ndarray
    rank: int
    bias: float

    def as_model(self) -> SvmModel:
        """View as a plain model (reduced weights are exempt from the box constraint)."""
        return SvmModel(
            support_vectors=self.base.support_vectors[self.retained],
            coeffs=self.coeffs,
            bias=self.bias,
            kernel=self.base.kernel,
            training_size=self.base.training_size,
            c=self.base.c,
        )


@dataclass(frozen=True)
class ReductionSeries:
    """Reduced models at every rank across the informative spectrum of ``base``.

    Ranks run from 1 to the number of Gram eigenvalues above SERIES_RANK_TOL
    of the largest (never past the essential rank).  The final member
    classifies like ``base`` up to stray boundary points; deeper ranks would
    not disagree with it anywhere on a test sample.
    """

    base: SvmModel
    models: tuple[ReducedModel, ...]

    @property
    def ranks(self) -> np.ndarray:
        return np.array([m.rank for m in self.models])


def project_onto(q: np.ndarray, retained: np.ndarray, removed: np.ndarray) -> ProjectionCoeffs:
    """Least-distance coordinates of the removed vectors over the retained span.

    Solves against the exact (untruncated) Gram matrix.  A near-singular
    retained block falls back to a jittered solve.
    """
    kii = q[np.ix_(retained, retained)]
    rhs = q[np.ix_(retained, removed)]
    if removed.size == 0:
        beta = np.zeros((0, retained.size))
    else:
        try:
            sol = solve_spd(kii, rhs)
        except NumericalError:
            jitter = PROJECTION_JITTER * np.trace(kii) / len(kii)
            sol = solve_cholesky(kii + jitter * np.eye(len(kii)), rhs)
        beta = np.atleast_2d(sol.T)
    return ProjectionCoeffs(retained, removed, beta)


def _probe_points() -> np.ndarray:
    axis = np.linspace(0.0, 1.0, _PROBE_SIDE)
    gx, gy = np.meshgrid(axis, axis)
    return np.column_stack([gx.ravel(), gy.ravel()])


class _Reducer:
    """Shared eigendecomposition for repeated reductions of one model.

    ``spectral_rank`` is the plain numeric rank of the Gram matrix; ``rank``
    (the essential rank) is the smallest subset size at or above it whose
    reduction reproduces the base decision surface within RECONSTRUCTION_TOL.
    ``series_rank`` is where a reduction series stops; it sits at or below
    ``spectral_rank``, so certification only runs when ``rank`` is asked for.
    """

    def __init__(self, model: SvmModel):
        self.model = model
        self.q = kernel_matrix(model)
        self.eig = eigh(self.q)
        self.spectral_rank = max(1, eigen_rank(self.eig))
        values = self.eig.values
        self.series_rank = max(1, int(np.sum(values > SERIES_RANK_TOL * values[0])))
        self._parts_cache: dict[int, tuple] = {}
        self._probe_k = None
        self._rank: int | None = None

    @property
    def rank(self) -> int:
        if self._rank is None:
            self._rank = self._certified_rank()
        return self._rank

    def truncated(self, r: int) -> np.ndarray:
        v = self.eig.vectors[:, :r]
        out = (v * self.eig.values[:r]) @ v.T
        return 0.5 * (out + out.T)

    def _parts(self, r: int) -> tuple:
        if r not in self._parts_cache:
            keep = np.sort(pivot_rows(self.truncated(r), r))
            mask = np.ones(len(self.q), dtype=bool)
            mask[keep] = False
            removed = np.flatnonzero(mask)
            proj = project_onto(self.q, keep, removed)
            coeffs = self.model.coeffs[keep] + proj.beta.T @ self.model.coeffs[removed]
            self._parts_cache[r] = (keep, removed, coeffs)
        return self._parts_cache[r]

    def _probe_deviation(self, keep: np.ndarray, coeffs: np.ndarray) -> float:
        if self._probe_k is None:
            self._probe_k = rbf_matrix(self.model.kernel, _probe_points(),
                                       self.model.support_vectors)
            # the copied bias cancels in the difference, so it is left out
            self._base_vals = self._probe_k @ self.model.coeffs
        return float(np.abs(self._probe_k[:, keep] @ coeffs - self._base_vals).max())

    def _certified_rank(self) -> int:
        n = len(self.q)
        for r in range(self.spectral_rank, n + 1):
            keep, removed, coeffs = self._parts(r)
            if removed.size == 0 or self._probe_deviation(keep, coeffs) <= RECONSTRUCTION_TOL:
                return r
        return n

    def _reduced(self, r: int) -> ReducedModel:
        keep, removed, coeffs = self._parts(r)
        return ReducedModel(
            base=self.model,
            retained=keep,
            removed=removed,
            coeffs=coeffs,
            rank=r,
            bias=self.model.bias,
        )

    def reduce(self, r: int) -> ReducedModel:
        if not 1 <= r <= self.rank:
            raise ParameterError(
                f"target rank must lie in [1, {self.rank}] (the essential rank), got {r}"
            )
        return self._reduced(r)


def essential_rank(model: SvmModel) -> int:
    """Size of the smallest pivot-selected subset certified to reproduce the
    decision surface; never below the numeric rank of the Gram matrix."""
    return _Reducer(model).rank


def essential_set(model: SvmModel) -> ReducedModel:
    """Drop only support vectors whose removal leaves the decision surface
    unchanged within RECONSTRUCTION_TOL."""
    reducer = _Reducer(model)
    return reducer.reduce(reducer.rank)


def reduce(model: SvmModel, r: int) -> ReducedModel:
    """Reduce ``model`` to ``r`` support vectors spanning the best rank-``r`` Gram."""
    return _Reducer(model).reduce(r)


def build_series(model: SvmModel) -> ReductionSeries:
    """One independent reduction at every informative rank of ``model``.

    The series ends where the Gram spectrum falls under SERIES_RANK_TOL of
    its leading eigenvalue; see ReductionSeries.
    """
    reducer = _Reducer(model)
    models = tuple(reducer._reduced(r) for r in range(1, reducer.series_rank + 1))
    return ReductionSeries(base=model, models=models)


def _as_model(model) -> SvmModel:
    return model.as_model() if isinstance(model, ReducedModel) else model


def _model_key(m: SvmModel) -> tuple:
    digest = hashlib.sha256()
    digest.update(m.support_vectors.tobytes())
    digest.update(m.coeffs.tobytes())
    return (m.n_sv, m.bias, digest.hexdigest())


def hyperplane_cosine(a, b) -> float:
    """Cosine of the angle between two decision hyperplanes in feature space.

    Both models must share the same kernel.  The operands are put in a
    canonical order first, which makes the result exactly symmetric.
    """
    ma, mb = _as_model(a), _as_model(b)
    if ma.kernel != mb.kernel:
        raise ContractError("models use different kernel parameters")
    if _model_key(mb) < _model_key(ma):
        ma, mb = mb, ma
    kaa = rbf_matrix(ma.kernel, ma.support_vectors, ma.support_vectors)
    np.fill_diagonal(kaa, 1.0)
    kbb = rbf_matrix(mb.kernel, mb.support_vectors, mb.support_vectors)
    np.fill_diagonal(kbb, 1.0)
    kab = rbf_matrix(ma.kernel, ma.support_vectors, mb.support_vectors)
    na = float(ma.coeffs @ kaa @ ma.coeffs)
    nb = float(mb.coeffs @ kbb @ mb.coeffs)
    if na <= 0.0 or nb <= 0.0:
        raise DegenerateModelError("a model has zero hyperplane norm in feature space")
    cos = float(ma.coeffs @ kab @ mb.coeffs) / np.sqrt(na * nb)
    return min(1.0, max(-1.0, cos))


def series_cosines(series: ReductionSeries) -> np.ndarray:
    """Cosine of every series entry against the base, via one shared Gram matrix."""
    q = kernel_matrix(series.base)
    cb = series.base.coeffs
    nb = float(cb @ q @ cb)
    if nb <= 0.0:
        raise DegenerateModelError("base model has zero hyperplane norm")
    out = np.empty(len(series.models))
    for pos, m in enumerate(series.models):
        idx = m.retained
        cross = float(cb @ q[:, idx] @ m.coeffs)
        norm = float(m.coeffs @ q[np.ix_(idx, idx)] @ m.coeffs)
        if norm <= 0.0:
            raise DegenerateModelError(f"rank-{m.rank} model has zero hyperplane norm")
        out[pos] = min(1.0, max(-1.0, cross / np.sqrt(nb * norm)))
    return out


def save_reduced_model(model: ReducedModel) -> bytes:
    """Serialize a reduced model; the base is referenced by content hash."""
    view = model.as_model()
    base_hash = hashlib.sha256(save_model(model.base)).hexdigest()
    rows = ",\n".join(
        f"    [{_g17(x1)}, {_g17(x2)}, {_g17(w)}]"
        for (x1, x2), w in zip(view.support_vectors, view.coeffs)
    )
    indices = ", ".join(str(int(i)) for i in model.retained)
    text = (
        "{\n"
        f'  "format": "{REDUCED_FORMAT}",\n'
        f'  "gamma": {_g17(view.kernel.gamma)},\n'
        f'  "c": {_g17(view.c)},\n'
        f'  "bias": {_g17(view.bias)},\n'
        f'  "training_size": {int(view.training_size)},\n'
        f'  "n_sv": {view.n_sv},\n'
        f'  "base_hash": "{base_hash}",\n'
        f'  "rank": {int(model.rank)},\n'
        f'  "retained_indices": [{indices}],\n'
        f'  "sv": [\n{rows}\n  ]\n'
        "}\n"
    )
    return text.encode("utf-8")


def load_reduced_model(blob: bytes):
    """Read back a reduced model file as ``(model_view, metadata)``.

    The base model is not embedded, so the result is the reduced model's
    plain view plus ``{"base_hash", "rank", "retained_indices"}``.
    """
    doc = _load_document(blob, REDUCED_FORMAT)
    try:
        sv = np.asarray(doc["sv"], dtype=float)
        if sv.ndim != 2 or sv.shape[1] != 3 or sv.shape[0] != int(doc["n_sv"]):
            raise ParseError("support-vector table does not match its declared shape")
        view = SvmModel(
            support_vectors=sv[:, :2],
            coeffs=sv[:, 2],
            bias=float(doc["bias"]),
            kernel=RbfKernel(float(doc["gamma"])),
            training_size=int(doc["training_size"]),
            c=float(doc["c"]),
        )
        meta = {
            "base_hash": str(doc["base_hash"]),
            "rank": int(doc["rank"]),
            "retained_indices": np.asarray(doc["retained_indices"], dtype=int),
        }
        return view, meta
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed reduced-model file: {exc}") from exc
