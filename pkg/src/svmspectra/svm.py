"""Soft-margin binary SVM with an RBF kernel, trained by sequential minimal optimization.

The decision function is ``f(x) = sum_i coeffs[i] * K(sv_i, x) + bias`` where
``coeffs[i]`` is the signed dual weight (multiplier times label).  The
minority class is the positive class; a decision value of exactly zero is
resolved to the majority class.

The solver is a working-set SMO: each update draws a KKT-violating point at
random (seeded) and pairs it with the maximally violating partner across the
two optimality thresholds, so training is deterministic for a given seed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .backbone import MAJORITY, MINORITY, LabeledDataset
from .errors import ParameterError, ParseError, TrainingError
from .seeding import make_rng

DEFAULT_KKT_TOL = 1e-3
MODEL_FORMAT = "svmspectra/rbf-svm"

_EPS = 1e-12
_BOUND_RTOL = 1e-8  # relative slack for treating a multiplier as on the box


@dataclass(frozen=True)
class RbfKernel:
    """K(x, z) = exp(-gamma * ||x - z||^2)."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class TrainConfig:
    """Box constraint, KKT tolerance, sweep cap, and solver seed."""

    c: float
    kkt_tol: float = DEFAULT_KKT_TOL
    max_passes: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ParameterError(f"c must be positive, got {self.c}")
        if not self.kkt_tol > 0:
            raise ParameterError("kkt_tol must be positive")
        if self.max_passes < 1:
            raise ParameterError("max_passes must be at least 1")


@dataclass(frozen=True)
class SvmModel:
    """Trained model: support vectors, signed dual weights, bias."""

    support_vectors: np.ndarray
    coeffs: np.ndarray
    bias: float
    kernel: RbfKernel
    training_size: int
    c: float
    converged: bool = True

    def __post_init__(self):
        sv = np.ascontiguousarray(self.support_vectors, dtype=float)
        co = np.ascontiguousarray(self.coeffs, dtype=float)
        if sv.ndim != 2 or sv.shape[1] != 2 or sv.shape[0] < 1:
            raise ParameterError(f"support vectors must have shape (m>=1, 2), got {sv.shape}")
        if co.shape != (sv.shape[0],):
            raise ParameterError("one coefficient per support vector required")
        sv.setflags(write=False)
        co.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "coeffs", co)
        if self.training_size < 1:
            raise ParameterError("training_size must be positive")

    @property
    def n_sv(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class DecisionValue:
    """Raw decision value and the label it resolves to (zero -> majority)."""

    value: float
    label: int


def squared_distances(xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    aa = (xa * xa).sum(axis=1)
    bb = (xb * xb).sum(axis=1)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (xa @ xb.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def rbf_matrix(kernel: RbfKernel, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Kernel values between two point sets, shape (len(xa), len(xb))."""
    return np.exp(-kernel.gamma * squared_distances(xa, xb))


def kernel_matrix(model: SvmModel) -> np.ndarray:
    """Gram matrix of the support vectors (exact unit diagonal)."""
    k = rbf_matrix(model.kernel, model.support_vectors, model.support_vectors)
    np.fill_diagonal(k, 1.0)
    return k


def smo_solve(k: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """SMO on a precomputed kernel matrix.

    Returns ``(alpha, bias, converged)``.  The equality constraint
    ``sum(alpha * y) = 0`` is preserved exactly by every pair update.

    Optimality is judged with the pairwise (two-threshold) criterion: the
    bias-free errors f_i - y_i of the points whose multiplier can still move
    up must not sit more than ``2 * kkt_tol`` below the largest error among
    the points that can move down.  Working pairs alternate between a
    violator drawn at random (seeded) and the maximally violating point; the
    partner is whichever admissible point promises the largest one-step dual
    improvement.  The final bias is the midpoint of the two thresholds, which
    bounds every single point's KKT violation by ``kkt_tol``.
    """
    n = y.size
    c, tol = cfg.c, cfg.kkt_tol
    dust = _BOUND_RTOL * c  # multipliers this close to a bound count as bound
    rng = make_rng(cfg.seed)
    alpha = np.zeros(n)
    fcache = np.zeros(n)  # sum_j alpha_j y_j K_ij, bias excluded
    pos = y > 0
    neg = ~pos
    diag = k.diagonal().copy()

    def take_step(i: int, j: int) -> bool:
        nonlocal fcache
        if i == j:
            return False
        yi, yj = y[i], y[j]
        ai, aj = alpha[i], alpha[j]
        s = yi * yj
        if s > 0:
            lo, hi = max(0.0, ai + aj - c), min(c, ai + aj)
        else:
            lo, hi = max(0.0, aj - ai), min(c, c + aj - ai)
        if hi - lo < _EPS:
            return False
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        gain = yj * ((fcache[i] - yi) - (fcache[j] - yj))  # d(dual)/d(alpha_j)
        if eta > _EPS:
            aj_new = min(hi, max(lo, aj + gain / eta))
        else:
            # flat or concave direction: compare the dual at both clip ends
            obj_lo = gain * (lo - aj) - 0.5 * eta * (lo - aj) ** 2
            obj_hi = gain * (hi - aj) - 0.5 * eta * (hi - aj) ** 2
            if obj_lo > obj_hi + _EPS:
                aj_new = lo
            elif obj_hi > obj_lo + _EPS:
                aj_new = hi
            else:
                return False
        # snap to the box when the bound is reachable, so that dust
        # multipliers do not linger; snapping past lo/hi would silently
        # break the equality constraint, hence the guards
        if lo == 0.0 and aj_new < dust:
            aj_new = 0.0
        elif hi == c and aj_new > c - dust:
            aj_new = c
        if abs(aj_new - aj) < _EPS * (aj_new + aj + _EPS):
            return False
        ai_new = min(c, max(0.0, ai + s * (aj - aj_new)))
        di = yi * (ai_new - ai)
        dj = yj * (aj_new - aj)
        fcache += di * k[i] + dj * k[j]
        alpha[i] = ai_new
        alpha[j] = aj_new
        return True

    def thresholds():
        f = fcache - y
        room_hi = alpha < c - dust
        room_lo = alpha > dust
        up = (pos & room_hi) | (neg & room_lo)
        dn = (neg & room_hi) | (pos & room_lo)
        return f, up, dn

    def best_partner(anchor: int, f: np.ndarray, side: np.ndarray, anchor_dn: bool) -> int:
        """Admissible partner with the largest second-order dual improvement."""
        diff = (f[anchor] - f) if anchor_dn else (f - f[anchor])
        eta = np.maximum(diag + k[anchor, anchor] - 2.0 * k[anchor], _EPS)
        score = np.where(side & (diff > 0.0), diff * diff / eta, -np.inf)
        j = int(np.argmax(score))
        return j if np.isfinite(score[j]) else -1

    converged = False
    b_up = -1.0
    b_dn = 1.0
    random_turn = True
    passes = 0
    while passes < cfg.max_passes and not converged:
        passes += 1
        stepped = 0
        for _ in range(n):
            f, up, dn = thresholds()
            if not up.any() or not dn.any():
                converged = True
                break
            i_up = int(np.flatnonzero(up)[np.argmin(f[up])])
            i_dn = int(np.flatnonzero(dn)[np.argmax(f[dn])])
            b_up, b_dn = f[i_up], f[i_dn]
            if b_dn - b_up <= 2.0 * tol:
                converged = True
                break
            took = False
            if random_turn:
                # positive entries mark violators on each side of the gap
                v_up = np.where(up, (b_dn - 2.0 * tol) - f, -np.inf)
                v_dn = np.where(dn, f - (b_up + 2.0 * tol), -np.inf)
                viol = np.flatnonzero((v_up > 0.0) | (v_dn > 0.0))
                i = int(viol[rng.integers(viol.size)])
                anchor_dn = v_dn[i] >= v_up[i]
                j = best_partner(i, f, up if anchor_dn else dn, anchor_dn)
                if j >= 0:
                    took = take_step(i, j)
            if not took:
                j = best_partner(i_dn, f, up, True)
                if j >= 0:
                    took = take_step(i_dn, j)
            if not took:
                took = take_step(i_dn, i_up)
            if not took:
                # last resort: seeded scan of every violator before giving up
                v_up = np.where(up, (b_dn - 2.0 * tol) - f, -np.inf)
                v_dn = np.where(dn, f - (b_up + 2.0 * tol), -np.inf)
                for i in rng.permutation(np.flatnonzero((v_up > 0.0) | (v_dn > 0.0))):
                    i = int(i)
                    j = i_dn if v_up[i] >= v_dn[i] else i_up
                    if i != j and take_step(i, j):
                        took = True
                        break
            random_turn = not random_turn
            if not took:
                break  # no violating pair admits a step; fall through as-is
            stepped += 1
        if stepped == 0 and not converged:
            break  # wedged short of the tolerance: report the best iterate
    f, up, dn = thresholds()
    if up.any():
        b_up = float(f[up].min())
    if dn.any():
        b_dn = float(f[dn].max())
    bias = -0.5 * (b_up + b_dn)
    return alpha, bias, converged


def train(data: LabeledDataset, cfg: TrainConfig, kernel: RbfKernel) -> SvmModel:
    """Train on a dataset; only points with a positive multiplier are kept."""
    x = np.asarray(data.points, dtype=float)
    y = data.signs()
    if np.unique(data.labels).size < 2:
        raise TrainingError("training data must contain both classes")
    k = rbf_matrix(kernel, x, x)
    np.fill_diagonal(k, 1.0)
    alpha, bias, converged = smo_solve(k, y, cfg)
    if not converged:
        warnings.warn(
            f"SMO did not satisfy the KKT conditions within {cfg.max_passes} passes; "
            "returning the best iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    keep = alpha > _BOUND_RTOL * cfg.c
    if not keep.any():
        raise TrainingError("solver returned an empty support set")
    return SvmModel(
        support_vectors=x[keep],
        coeffs=alpha[keep] * y[keep],
        bias=float(bias),
        kernel=kernel,
        training_size=len(y),
        c=float(cfg.c),
        converged=converged,
    )


def decision_values(model: SvmModel, points: np.ndarray) -> np.ndarray:
    """Raw decision values for a batch of points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return rbf_matrix(model.kernel, points, model.support_vectors) @ model.coeffs + model.bias


def decision(model: SvmModel, point) -> DecisionValue:
    """Decision value and label for a single point."""
    value = float(decision_values(model, np.asarray(point, dtype=float).reshape(1, 2))[0])
    return DecisionValue(value, MINORITY if value > 0.0 else MAJORITY)


def predict(model: SvmModel, points: np.ndarray) -> np.ndarray:
    """Labels for a batch of points; a value of zero falls to the majority."""
    return np.where(decision_values(model, points) > 0.0, MINORITY, MAJORITY)


def dual_objective(k: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Dual objective sum(alpha) - 0.5 * alpha' (yy' * K) alpha."""
    w = alpha * y
    return float(alpha.sum() - 0.5 * (w @ k @ w))


def _g17(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ParameterError("model fields must be finite to serialize")
    return format(x, ".17g")


def save_model(model: SvmModel) -> bytes:
    """Serialize to a canonical JSON document with 17-significant-digit floats.

    The byte stream is deterministic, so ``save(load(save(m)))`` is
    byte-identical to ``save(m)``.
    """
    rows = ",\n".join(
        f"    [{_g17(x1)}, {_g17(x2)}, {_g17(w)}]"
        for (x1, x2), w in zip(model.support_vectors, model.coeffs)
    )
    text = (
        "{\n"
        f'  "format": "{MODEL_FORMAT}",\n'
        f'  "gamma": {_g17(model.kernel.gamma)},\n'
        f'  "c": {_g17(model.c)},\n'
        f'  "bias": {_g17(model.bias)},\n'
        f'  "training_size": {int(model.training_size)},\n'
        f'  "n_sv": {model.n_sv},\n'
        f'  "sv": [\n{rows}\n  ]\n'
        "}\n"
    )
    return text.encode("utf-8")


def _load_document(blob: bytes, expected_format: str) -> dict:
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        offset = getattr(exc, "pos", getattr(exc, "start", None))
        raise ParseError(f"malformed model file: {exc}", offset=offset) from exc
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise ParseError(f"not a {expected_format!r} document")
    return doc


def load_model(blob: bytes) -> SvmModel:
    """Inverse of :func:`save_model`; reproduces decision values bit for bit."""
    doc = _load_document(blob, MODEL_FORMAT)
    try:
        sv = np.asarray(doc["sv"], dtype=float)
        if sv.ndim != 2 or sv.shape[1] != 3 or sv.shape[0] != int(doc["n_sv"]):
            raise ParseError("support-vector table does not match its declared shape")
        return SvmModel(
            support_vectors=sv[:, :2],
            coeffs=sv[:, 2],
            bias=float(doc["bias"]),
            kernel=RbfKernel(float(doc["gamma"])),
            training_size=int(doc["training_size"]),
            c=float(doc["c"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed model file: {exc}") from exc
