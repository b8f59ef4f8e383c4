"""Random invertible leaky-tanh MLPs used as ground-truth mixing functions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from .exceptions import GenerationError, InputError, NumericError

__all__ = [
    "MlpMixing",
    "leaky_tanh",
    "leaky_tanh_deriv",
    "leaky_tanh_inverse",
    "sample_mlp_weights",
    "sample_mixing",
    "mix",
    "unmix",
]

SLOPE = 0.1
DET_FLOOR = 0.1
MAX_ATTEMPTS = 10_000


def leaky_tanh(x):
    return np.tanh(x) + SLOPE * x


def leaky_tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t + SLOPE


def leaky_tanh_inverse(y, tol=1e-14, max_iter=100):
    """Solve ``tanh(x) + 0.1 x = y`` element-wise.

    Newton steps are kept inside a bracketing interval; a step that leaves
    the bracket is replaced by bisection.  Since |tanh| < 1 the root lies in
    ``[(y - 1) / 0.1, (y + 1) / 0.1]``.
    """
    y = np.asarray(y, dtype=np.float64)
    lo = (y - 1.0) / SLOPE
    hi = (y + 1.0) / SLOPE
    x = y / (1.0 + SLOPE)
    scale = np.maximum(1.0, np.abs(y))
    for _ in range(max_iter):
        f = leaky_tanh(x) - y
        done = np.abs(f) <= tol * scale
        if np.all(done):
            return x
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        step = x - f / leaky_tanh_deriv(x)
        bad = (step <= lo) | (step >= hi)
        x = np.where(done, x, np.where(bad, 0.5 * (lo + hi), step))
    f = leaky_tanh(x) - y
    if not np.all(np.abs(f) <= 1e2 * tol * scale):
        raise NumericError(f"leaky-tanh inverse did not converge, residual {np.max(np.abs(f)):.3g}")
    return x


@dataclass(frozen=True)
class MlpMixing:
    """``x = σ(W3 σ(W2 σ(W1 v)))`` with σ(t) = tanh(t) + 0.1 t."""

    weights: Tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        dim = ws[0].shape[0]
        for w in ws:
            if w.shape != (dim, dim):
                raise InputError(f"mixing layers must be square {dim}x{dim}, got {w.shape}")
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "weights": [w.tolist() for w in self.weights]}

    @classmethod
    def from_dict(cls, d) -> "MlpMixing":
        return cls(tuple(np.array(w, dtype=np.float64) for w in d["weights"]))


def sample_mlp_weights(rng: np.random.Generator, shape, square_det_floor=DET_FLOOR) -> np.ndarray:
    """Uniform[0, 1) entries; square matrices are redrawn until |det| >= floor."""
    rows, cols = shape
    for _ in range(MAX_ATTEMPTS):
        w = rng.uniform(0.0, 1.0, size=shape)
        if rows != cols or abs(np.linalg.det(w)) >= square_det_floor:
            return w
    raise GenerationError(f"no weight matrix with |det| >= {square_det_floor} after {MAX_ATTEMPTS} draws")


def sample_mixing(dim: int, rng: np.random.Generator, n_layers: int = 3) -> MlpMixing:
    if dim < 1:
        raise InputError("dim must be >= 1")
    return MlpMixing(tuple(sample_mlp_weights(rng, (dim, dim)) for _ in range(n_layers)))


def _check_input(m: MlpMixing, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != m.dim:
        raise InputError(f"expected last dimension {m.dim}, got {v.shape[-1]}")
    return v


def mix(m: MlpMixing, v, per_layer=False):
    """Apply the mixing to a point or a batch (rows).

    Returns ``(x, log_abs_det)``; with ``per_layer=True`` the second element
    is the list of per-layer log-determinants instead of their sum.
    """
    v = _check_input(m, v)
    h = v
    logdets = []
    for w in m.weights:
        pre = h @ w.T
        _, logabs = np.linalg.slogdet(w)
        logdets.append(logabs + np.log(leaky_tanh_deriv(pre)).sum(axis=-1))
        h = leaky_tanh(pre)
    if per_layer:
        return h, logdets
    return h, sum(logdets)


def unmix(m: MlpMixing, x, tol: float = 1e-12):
    """Numeric inverse of :func:`mix`."""
    if tol <= 0:
        raise InputError("tol must be positive")
    x = _check_input(m, x)
    h = x
    for w in reversed(m.weights):
        pre = leaky_tanh_inverse(h, tol=min(tol, 1e-14))
        lu = scipy.linalg.lu_factor(w)
        h = scipy.linalg.lu_solve(lu, pre.T).T
    return h
