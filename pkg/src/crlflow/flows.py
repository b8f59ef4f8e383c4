"""Invertible flow layers with exact log-determinants.

Conventions: every layer's differentiable ``forward`` runs in the *density*
direction (data -> latent for the encoder, latent -> noise for the
triangular flow) on :class:`~crlflow.diff.Tensor` batches.  The opposite
direction is only needed for sampling and round-trip checks and is done in
plain numpy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import diff as D
from .diff import ParameterSet, Tensor
from .exceptions import InputError

__all__ = [
    "SplineConfig",
    "RqSpline",
    "rq_spline",
    "rq_spline_inverse",
    "rq_forward",
    "rq_inverse",
    "Mlp",
    "CouplingLayer",
    "PermutationLayer",
    "FlowStack",
    "TriangularFlow",
    "build_flow_stack",
    "stack_apply",
    "coupling_apply",
    "triangular_apply",
]


@dataclass(frozen=True)
class SplineConfig:
    bins: int = 8
    bound: float = 10.0
    min_width: float = 1e-3
    min_height: float = 1e-3
    min_derivative: float = 1e-3

    @property
    def n_params(self) -> int:
        return 3 * self.bins - 1

    @property
    def derivative_shift(self) -> float:
        # softplus(0 + shift) + min_derivative == 1, so zero parameters give the identity
        return float(np.log(np.expm1(1.0 - self.min_derivative)))


DEFAULT_SPLINE = SplineConfig()


# --- rational-quadratic spline ----------------------------------------------

def _bins(u: Tensor, minimum: float, bound: float) -> Tensor:
    K = u.shape[1]
    e = D.exp(D.sub(u, u.value.max(axis=1, keepdims=True)))
    soft = D.div(e, D.tsum(e, axis=1, keepdims=True))
    return D.mul(D.add(minimum, D.mul(soft, 1.0 - minimum * K)), 2.0 * bound)


def _knots(u: Tensor, minimum: float, bound: float) -> Tensor:
    B, K = u.shape
    cum = D.cumsum(_bins(u, minimum, bound), axis=1)
    lo = np.full((B, 1), -bound)
    hi = np.full((B, 1), bound)
    return D.concat([lo, D.add(D.columns(cum, slice(0, K - 1)), -bound), hi], axis=1)


def _spline_geometry(uw, uh, ud, cfg: SplineConfig):
    uw, uh, ud = D.as_tensor(uw), D.as_tensor(uh), D.as_tensor(ud)
    B = uw.shape[0]
    xk = _knots(uw, cfg.min_width, cfg.bound)
    yk = _knots(uh, cfg.min_height, cfg.bound)
    ones = np.ones((B, 1))
    inner = D.add(D.softplus(D.add(ud, cfg.derivative_shift)), cfg.min_derivative)
    dk = D.concat([ones, inner, ones], axis=1)
    return xk, yk, dk


def _bin_index(knots: np.ndarray, x: np.ndarray, K: int) -> np.ndarray:
    idx = (x >= knots).sum(axis=1, keepdims=True) - 1
    return np.clip(idx, 0, K - 1)


def rq_spline(x, uw, uh, ud, cfg: SplineConfig = DEFAULT_SPLINE):
    """Monotone rational-quadratic spline on [-B, B] with identity tails.

    ``x`` is (N, 1); ``uw``, ``uh`` are (N, K) and ``ud`` is (N, K-1)
    unnormalised parameters.  Returns (y, log dy/dx), both (N, 1) tensors.
    """
    x = D.as_tensor(x)
    K = cfg.bins
    inside = np.abs(x.value) <= cfg.bound
    xk, yk, dk = _spline_geometry(uw, uh, ud, cfg)
    xc = D.where(inside, x, 0.0)
    idx = _bin_index(xk.value, xc.value, K)
    x0 = D.gather(xk, idx)
    w = D.sub(D.gather(xk, idx + 1), x0)
    y0 = D.gather(yk, idx)
    h = D.sub(D.gather(yk, idx + 1), y0)
    d0 = D.gather(dk, idx)
    d1 = D.gather(dk, idx + 1)
    s = D.div(h, w)
    theta = D.div(D.sub(xc, x0), w)
    omt = D.sub(1.0, theta)
    t1 = D.mul(theta, omt)
    t2 = D.square(theta)
    num = D.mul(h, D.add(D.mul(s, t2), D.mul(d0, t1)))
    den = D.add(s, D.mul(D.sub(D.add(d0, d1), D.mul(2.0, s)), t1))
    y_in = D.add(y0, D.div(num, den))
    dnum = D.mul(D.square(s), D.add(D.add(D.mul(d1, t2), D.mul(D.mul(2.0, s), t1)),
                                    D.mul(d0, D.square(omt))))
    logd_in = D.sub(D.log(dnum), D.mul(2.0, D.log(den)))
    return D.where(inside, y_in, x), D.where(inside, logd_in, 0.0)


def rq_spline_inverse(y, uw, uh, ud, cfg: SplineConfig = DEFAULT_SPLINE):
    """Analytic inverse of :func:`rq_spline` (numpy in, numpy out).

    Returns (x, log dy/dx evaluated at x).
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    K = cfg.bins
    xk, yk, dk = (t.value for t in _spline_geometry(uw, uh, ud, cfg))
    inside = np.abs(y) <= cfg.bound
    yc = np.where(inside, y, 0.0)
    idx = _bin_index(yk, yc, K)

    def g(a, off=0):
        return np.take_along_axis(a, idx + off, axis=1)

    x0, y0 = g(xk), g(yk)
    w, h = g(xk, 1) - x0, g(yk, 1) - y0
    d0, d1 = g(dk), g(dk, 1)
    s = h / w
    dy = yc - y0
    a = h * (s - d0) + dy * (d1 + d0 - 2 * s)
    b = h * d0 - dy * (d1 + d0 - 2 * s)
    c = -s * dy
    disc = np.maximum(b * b - 4 * a * c, 0.0)
    theta = (2 * c) / (-b - np.sqrt(disc))
    x_in = theta * w + x0
    t1 = theta * (1 - theta)
    den = s + (d1 + d0 - 2 * s) * t1
    dnum = s * s * (d1 * theta ** 2 + 2 * s * t1 + d0 * (1 - theta) ** 2)
    logd = np.log(dnum) - 2 * np.log(den)
    return np.where(inside, x_in, y), np.where(inside, logd, 0.0)


@dataclass
class RqSpline:
    """A single scalar spline with explicit unnormalised parameters."""

    widths: np.ndarray
    heights: np.ndarray
    derivatives: np.ndarray
    cfg: SplineConfig = DEFAULT_SPLINE

    @classmethod
    def identity(cls, cfg: SplineConfig = DEFAULT_SPLINE):
        return cls(np.zeros(cfg.bins), np.zeros(cfg.bins), np.zeros(cfg.bins - 1), cfg)

    @classmethod
    def random(cls, rng, cfg: SplineConfig = DEFAULT_SPLINE, scale=1.0):
        return cls(rng.normal(0, scale, cfg.bins), rng.normal(0, scale, cfg.bins),
                   rng.normal(0, scale, cfg.bins - 1), cfg)

    def _params(self, n):
        return (np.tile(self.widths, (n, 1)), np.tile(self.heights, (n, 1)),
                np.tile(self.derivatives, (n, 1)))


def rq_forward(sp: RqSpline, x):
    """Vectorised over ``x``; returns (y, log_deriv) with the shape of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, 1)
    y, ld = rq_spline(flat, *sp._params(flat.shape[0]), cfg=sp.cfg)
    return y.value.reshape(x.shape), ld.value.reshape(x.shape)


def rq_inverse(sp: RqSpline, y):
    y = np.asarray(y, dtype=np.float64)
    x, ld = rq_spline_inverse(y.reshape(-1, 1), *sp._params(y.size), cfg=sp.cfg)
    return x.reshape(y.shape), ld.reshape(y.shape)


# --- conditioner --------------------------------------------------------------

class Mlp:
    """Three affine layers with tanh between them; the last layer starts at zero."""

    def __init__(self, params: ParameterSet, prefix: str, n_in: int, n_out: int,
                 hidden: int, rng: np.random.Generator, zero_last=True):
        self.names = []
        sizes = [n_in, hidden, hidden, n_out]
        for k in range(3):
            bound = 1.0 / np.sqrt(sizes[k])
            if k == 2 and zero_last:
                w = np.zeros((sizes[k], sizes[k + 1]))
                b = np.zeros(sizes[k + 1])
            else:
                w = rng.uniform(-bound, bound, (sizes[k], sizes[k + 1]))
                b = rng.uniform(-bound, bound, sizes[k + 1])
            params.add(f"{prefix}.w{k}", w)
            params.add(f"{prefix}.b{k}", b)
            self.names.append((f"{prefix}.w{k}", f"{prefix}.b{k}"))
        self.params = params

    def __call__(self, x) -> Tensor:
        h = x
        for k, (wn, bn) in enumerate(self.names):
            h = D.affine(h, self.params[wn], self.params[bn])
            if k < 2:
                h = D.tanh(h)
        return h


def _split_spline_params(out: Tensor, t: int, cfg: SplineConfig):
    K = cfg.bins
    base = t * cfg.n_params
    return (D.columns(out, slice(base, base + K)),
            D.columns(out, slice(base + K, base + 2 * K)),
            D.columns(out, slice(base + 2 * K, base + 3 * K - 1)))


# --- layers -------------------------------------------------------------------

class CouplingLayer:
    """Transforms the ``transformed`` coordinates conditioned on the ``passive`` ones."""

    kind = "coupling"

    def __init__(self, dim: int, passive: Sequence[int], params: ParameterSet, prefix: str,
                 rng: np.random.Generator, family="spline", hidden=128,
                 spline: SplineConfig = DEFAULT_SPLINE):
        passive = sorted(int(i) for i in passive)
        transformed = [i for i in range(dim) if i not in passive]
        if not passive or not transformed:
            raise InputError("a coupling mask must leave at least one coordinate on each side")
        if family not in ("spline", "affine"):
            raise InputError(f"unknown transform family {family!r}")
        self.dim, self.passive, self.transformed = dim, passive, transformed
        self.family, self.spline, self.hidden = family, spline, hidden
        per = spline.n_params if family == "spline" else 2
        self.per = per
        self.net = Mlp(params, prefix, len(passive), per * len(transformed), hidden, rng)

    def config(self):
        return {"kind": self.kind, "dim": self.dim, "passive": self.passive,
                "family": self.family, "hidden": self.hidden}

    def _transform(self, x_t: Tensor, out: Tensor, t: int):
        if self.family == "spline":
            return rq_spline(x_t, *_split_spline_params(out, t, self.spline), cfg=self.spline)
        shift = D.columns(out, 2 * t)
        log_scale = D.columns(out, 2 * t + 1)
        return D.add(D.mul(x_t, D.exp(log_scale)), shift), log_scale

    def forward(self, x: Tensor):
        x = D.as_tensor(x)
        out = self.net(D.columns(x, self.passive))
        cols = [None] * self.dim
        logdet = None
        for i in self.passive:
            cols[i] = D.columns(x, i)
        for t, i in enumerate(self.transformed):
            y, ld = self._transform(D.columns(x, i), out, t)
            cols[i] = y
            logdet = ld if logdet is None else D.add(logdet, ld)
        return D.concat(cols, axis=1), D.reshape(logdet, (-1,))

    def inverse(self, z: np.ndarray):
        z = np.asarray(z, dtype=np.float64)
        out = self.net(D.constant(z[:, self.passive])).value
        x = z.copy()
        logdet = np.zeros(z.shape[0])
        for t, i in enumerate(self.transformed):
            if self.family == "spline":
                K = self.spline.bins
                base = t * self.spline.n_params
                xi, ld = rq_spline_inverse(z[:, i], out[:, base:base + K], out[:, base + K:base + 2 * K],
                                           out[:, base + 2 * K:base + 3 * K - 1], self.spline)
                x[:, i] = xi[:, 0]
                logdet -= ld[:, 0]
            else:
                shift, log_scale = out[:, 2 * t], out[:, 2 * t + 1]
                x[:, i] = (z[:, i] - shift) * np.exp(-log_scale)
                logdet -= log_scale
        return x, logdet


class PermutationLayer:
    kind = "permutation"

    def __init__(self, order: Sequence[int]):
        order = [int(i) for i in order]
        if sorted(order) != list(range(len(order))):
            raise InputError(f"{order} is not a permutation")
        self.order = order
        self.inv = list(np.argsort(order))
        self.dim = len(order)

    def config(self):
        return {"kind": self.kind, "order": self.order}

    def forward(self, x):
        x = D.as_tensor(x)
        return D.columns(x, self.order), D.constant(np.zeros(x.shape[0]))

    def inverse(self, z):
        z = np.asarray(z, dtype=np.float64)
        return z[:, self.inv], np.zeros(z.shape[0])


class FlowStack:
    """Sequential composition of flow layers; log-determinants add."""

    def __init__(self, layers: Optional[List] = None, dim: Optional[int] = None):
        self.layers = list(layers or [])
        self.dim = dim if dim is not None else (self.layers[0].dim if self.layers else None)

    def __len__(self):
        return len(self.layers)

    def forward(self, x, per_layer=False):
        h = D.as_tensor(x)
        total = D.constant(np.zeros(h.shape[0]))
        parts = []
        for layer in self.layers:
            h, ld = layer.forward(h)
            parts.append(ld)
            total = D.add(total, ld)
        return (h, total, parts) if per_layer else (h, total)

    def inverse(self, z):
        h = np.asarray(z, dtype=np.float64)
        total = np.zeros(h.shape[0])
        for layer in reversed(self.layers):
            h, ld = layer.inverse(h)
            total += ld
        return h, total

    def config(self):
        return [layer.config() for layer in self.layers]


def build_flow_stack(dim: int, n_layers: int, params: ParameterSet, rng: np.random.Generator,
                     prefix="enc", family="spline", hidden=128,
                     spline: SplineConfig = DEFAULT_SPLINE) -> FlowStack:
    """``n_layers`` couplings with alternating masks, each followed by a reversal permutation."""
    if dim == 1:
        if n_layers:
            raise InputError("coupling layers need dim >= 2")
        return FlowStack([], dim=1)
    layers = []
    for k in range(n_layers):
        parity = k % 2
        passive = [i for i in range(dim) if i % 2 == parity]
        if len(passive) == dim:
            passive = passive[:-1]
        layers.append(CouplingLayer(dim, passive, params, f"{prefix}.{k}", rng, family, hidden, spline))
        layers.append(PermutationLayer(list(range(dim))[::-1]))
    return FlowStack(layers, dim=dim)


class TriangularFlow:
    """Autoregressive spline flow with a triangular Jacobian and no permutations.

    Density direction (``forward``): latent z -> noise ε, where in each layer
    coordinate j is mapped by a spline whose parameters depend only on the
    layer's inputs with index < j.  The first coordinate uses free
    parameters.  ``forward`` returns the per-coordinate log-derivatives, i.e.
    the diagonal of the log-Jacobian, which the reduced-form base needs to
    split the density into per-node conditionals.
    """

    kind = "triangular"

    def __init__(self, dim: int, n_layers: int, params: ParameterSet, rng: np.random.Generator,
                 prefix="scm", hidden=128, spline: SplineConfig = DEFAULT_SPLINE):
        self.dim, self.n_layers, self.hidden, self.spline = dim, n_layers, hidden, spline
        self.params = params
        self.free = []
        self.nets = []
        for k in range(n_layers):
            name = f"{prefix}.{k}.free"
            params.add(name, np.zeros(spline.n_params))
            self.free.append(name)
            self.nets.append([Mlp(params, f"{prefix}.{k}.c{j}", j, spline.n_params, hidden, rng)
                              for j in range(1, dim)])

    def config(self):
        return {"kind": self.kind, "dim": self.dim, "n_layers": self.n_layers, "hidden": self.hidden}

    def _layer_params(self, k, h, j, N):
        if j == 0:
            free = D.reshape(self.params[self.free[k]], (1, -1))
            out = D.mul(np.ones((N, 1)), free)
        else:
            out = self.nets[k][j - 1](h)
        return _split_spline_params(out, 0, self.spline)

    def forward(self, z):
        h = D.as_tensor(z)
        N = h.shape[0]
        logdiag = D.constant(np.zeros((N, self.dim)))
        for k in range(self.n_layers):
            cols, lds = [], []
            for j in range(self.dim):
                cond = D.columns(h, slice(0, j)) if j else None
                y, ld = rq_spline(D.columns(h, j), *self._layer_params(k, cond, j, N), cfg=self.spline)
                cols.append(y)
                lds.append(ld)
            h = D.concat(cols, axis=1)
            logdiag = D.add(logdiag, D.concat(lds, axis=1))
        return h, logdiag

    def inverse(self, eps):
        """Noise -> latent, solving coordinates in order within each layer."""
        h = np.asarray(eps, dtype=np.float64).copy()
        N = h.shape[0]
        logdiag = np.zeros((N, self.dim))
        for k in reversed(range(self.n_layers)):
            x = np.empty_like(h)
            for j in range(self.dim):
                cond = D.constant(x[:, :j]) if j else None
                uw, uh, ud = (t.value for t in self._layer_params(k, cond, j, N))
                xj, ld = rq_spline_inverse(h[:, j], uw, uh, ud, self.spline)
                x[:, j] = xj[:, 0]
                logdiag[:, j] -= ld[:, 0]
            h = x
        return h, logdiag


# --- functional wrappers (numpy in / numpy out) ---------------------------------

def coupling_apply(layer: CouplingLayer, z, direction="forward"):
    if direction == "forward":
        out, ld = layer.forward(D.constant(np.atleast_2d(z)))
        return out.value, ld.value
    if direction == "inverse":
        return layer.inverse(np.atleast_2d(z))
    raise InputError(f"unknown direction {direction!r}")


def stack_apply(fs: FlowStack, z, direction="forward"):
    if direction == "forward":
        out, ld = fs.forward(D.constant(np.atleast_2d(z)))
        return out.value, ld.value
    if direction == "inverse":
        return fs.inverse(np.atleast_2d(z))
    raise InputError(f"unknown direction {direction!r}")


def triangular_apply(tf: TriangularFlow, eps, direction="forward"):
    """``forward``: z = g(ε) (sampling direction); ``inverse``: ε = g⁻¹(z).

    The log-determinant returned is that of the map applied.
    """
    if direction == "forward":
        z, logdiag = tf.inverse(np.atleast_2d(eps))
        return z, logdiag.sum(axis=1)
    if direction == "inverse":
        e, logdiag = tf.forward(D.constant(np.atleast_2d(eps)))
        return e.value, logdiag.value.sum(axis=1)
    raise InputError(f"unknown direction {direction!r}")
