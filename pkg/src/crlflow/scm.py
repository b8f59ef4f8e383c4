"""Latent structural causal models with Gaussian-family mechanisms.

Every mechanism is a Gaussian conditional ``N(mean(v_pa), std(v_pa)^2)``, which
gives exact densities and makes ancestral sampling a single affine step per
node.  Beyond sampling and densities this module hosts the theory-level
quantities: causal influence, element-wise reparametrisations of a latent
representation, induced intervened mechanisms and the genericity gap.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .exceptions import GenerationError, InputError, NumericError
from .graph import Dag, Permutation, parse_dag
from .mixing import leaky_tanh, sample_mlp_weights

__all__ = [
    "LinearGaussian",
    "LocScaleNet",
    "FixedMarginal",
    "Scm",
    "InterventionSpec",
    "LatentBatch",
    "MonotoneMap",
    "sample_latents",
    "log_density",
    "intervene",
    "marginal_rule",
    "causal_influence",
    "causal_influence_from_samples",
    "ScmView",
    "TransformedView",
    "transform_representation",
    "inverse_transform_representation",
    "induced_intervened_density",
    "genericity_gap",
    "WITNESSES",
    "sample_random_scm",
    "gaussian_logpdf",
]

LOG_2PI = float(np.log(2 * np.pi))
DEFAULT_QUAD_NODES = 200
INNER_MC_DRAWS = 10_000


def gaussian_logpdf(x, mean, std):
    z = (x - mean) / std
    return -0.5 * z * z - np.log(std) - 0.5 * LOG_2PI


# --- mechanisms ---------------------------------------------------------------

@dataclass(frozen=True)
class LinearGaussian:
    weights: Tuple[float, ...] = ()
    noise_mean: float = 0.0
    noise_std: float = 1.0
    kind = "linear_gaussian"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.noise_std > 0:
            raise InputError("noise std must be positive")

    @property
    def n_parents(self):
        return len(self.weights)

    def conditional(self, pa: np.ndarray):
        mean = self.noise_mean + (pa @ np.asarray(self.weights) if self.weights else 0.0)
        return np.broadcast_to(mean, pa.shape[:-1]), self.noise_std

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights),
                "noise_mean": self.noise_mean, "noise_std": self.noise_std}


def _net(weights, x):
    h = x
    for w in weights:
        h = leaky_tanh(h @ w.T)
    return h[..., 0]


@dataclass(frozen=True)
class LocScaleNet:
    """``V_i = beta * f_loc(v_pa) + f_scale(v_pa) * U_i``.

    Both functions are random leaky-tanh MLPs (k x k, k x k, 1 x k layers);
    the scale network output passes through softplus so the conditional std
    is positive.  Root nodes (k = 0) reduce to a standard normal.
    """

    loc_weights: Tuple[np.ndarray, ...] = ()
    scale_weights: Tuple[np.ndarray, ...] = ()
    beta: float = 10.0
    kind = "loc_scale"

    def __post_init__(self):
        for name in ("loc_weights", "scale_weights"):
            ws = tuple(np.array(w, dtype=np.float64) for w in getattr(self, name))
            for w in ws:
                w.setflags(write=False)
            object.__setattr__(self, name, ws)

    @property
    def n_parents(self):
        return self.loc_weights[0].shape[1] if self.loc_weights else 0

    def scale(self, pa: np.ndarray):
        if not self.scale_weights:
            return np.ones(pa.shape[:-1])
        return np.logaddexp(0.0, _net(self.scale_weights, pa))

    def conditional(self, pa: np.ndarray):
        if not self.loc_weights:
            return np.zeros(pa.shape[:-1]), 1.0
        return self.beta * _net(self.loc_weights, pa), self.scale(pa)

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta,
                "loc_weights": [w.tolist() for w in self.loc_weights],
                "scale_weights": [w.tolist() for w in self.scale_weights]}


@dataclass(frozen=True)
class FixedMarginal:
    mean: float = 0.0
    std: float = 1.0
    kind = "fixed_marginal"

    def __post_init__(self):
        if not self.std > 0:
            raise InputError("marginal std must be positive")

    def conditional(self, pa: np.ndarray):
        return np.full(pa.shape[:-1], float(self.mean)), self.std

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean, "std": self.std}


Mechanism = Union[LinearGaussian, LocScaleNet, FixedMarginal]


def mechanism_from_dict(d) -> Mechanism:
    kind = d["kind"]
    if kind == LinearGaussian.kind:
        return LinearGaussian(tuple(d["weights"]), d["noise_mean"], d["noise_std"])
    if kind == LocScaleNet.kind:
        return LocScaleNet(tuple(np.array(w) for w in d["loc_weights"]),
                           tuple(np.array(w) for w in d["scale_weights"]), d["beta"])
    if kind == FixedMarginal.kind:
        return FixedMarginal(d["mean"], d["std"])
    raise InputError(f"unknown mechanism kind {kind!r}")


@dataclass(frozen=True)
class Scm:
    dag: Dag
    mechanisms: Tuple[Mechanism, ...]

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        if len(self.mechanisms) != self.dag.n:
            raise InputError(f"need {self.dag.n} mechanisms, got {len(self.mechanisms)}")
        for j, mech in enumerate(self.mechanisms, start=1):
            k = len(self.dag.parents(j))
            if not isinstance(mech, FixedMarginal) and mech.n_parents != k:
                raise InputError(f"mechanism {j} takes {mech.n_parents} parents, graph has {k}")

    @property
    def n(self) -> int:
        return self.dag.n

    def conditional(self, j: int, values: np.ndarray):
        """(mean, std) of node ``j`` given the parent columns of ``values``."""
        pa = [p - 1 for p in self.dag.parents(j)]
        return self.mechanisms[j - 1].conditional(values[..., pa])

    def node_logpdf(self, j: int, values: np.ndarray) -> np.ndarray:
        mean, std = self.conditional(j, values)
        return gaussian_logpdf(values[..., j - 1], mean, std)

    def to_dict(self) -> dict:
        return {"dag": self.dag.to_text(), "mechanisms": [m.to_dict() for m in self.mechanisms]}

    @classmethod
    def from_dict(cls, d) -> "Scm":
        return cls(parse_dag(d["dag"]), tuple(mechanism_from_dict(m) for m in d["mechanisms"]))


@dataclass(frozen=True)
class InterventionSpec:
    target: int
    mean: float
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise InputError("intervention std must be positive")

    def logpdf(self, v):
        return gaussian_logpdf(v, self.mean, self.std)

    def pdf(self, v):
        return np.exp(self.logpdf(v))

    def to_dict(self):
        return {"target": self.target, "mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["target"]), float(d["mean"]), float(d["std"]))


@dataclass
class LatentBatch:
    values: np.ndarray
    exogenous: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InputError("latent batch must be an N x n matrix")
        if self.exogenous is not None and np.shape(self.exogenous) != self.values.shape:
            raise InputError("exogenous shape must match values")

    @property
    def n(self):
        return self.values.shape[1]


# --- sampling and density -----------------------------------------------------

def sample_latents(s: Scm, N: int, rng: np.random.Generator, keep_exogenous=False) -> LatentBatch:
    """Ancestral sampling in node order (valid because edges point from low to high index)."""
    if N < 1:
        raise InputError("N must be >= 1")
    u = rng.standard_normal((N, s.n))
    v = np.zeros((N, s.n))
    for j in range(1, s.n + 1):
        mean, std = s.conditional(j, v)
        v[:, j - 1] = mean + std * u[:, j - 1]
    return LatentBatch(v, u if keep_exogenous else None)


def log_density(s: Scm, v) -> Union[float, np.ndarray]:
    """Causal Markov factorisation ``sum_i log p_i(v_i | v_pa(i))`` for a point or batch of rows."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != s.n:
        raise InputError(f"expected {s.n} coordinates, got {v.shape[-1]}")
    if not np.all(np.isfinite(v)):
        raise InputError("log_density needs finite input")
    total = sum(s.node_logpdf(j, v) for j in range(1, s.n + 1))
    return float(total) if v.ndim == 1 else total


def intervene(s: Scm, spec: InterventionSpec) -> Scm:
    """Perfect intervention: the target's mechanism becomes a parent-free Gaussian."""
    s.dag.check_vertex(spec.target)
    mechs = list(s.mechanisms)
    mechs[spec.target - 1] = FixedMarginal(spec.mean, spec.std)
    return Scm(s.dag, tuple(mechs))


def _gaussian_marginals(s: Scm):
    """Means and variances of every node when all mechanisms are linear; None otherwise."""
    n = s.n
    B = np.zeros((n, n))
    c = np.zeros(n)
    d = np.zeros(n)
    for j, mech in enumerate(s.mechanisms, start=1):
        if isinstance(mech, LinearGaussian):
            for p, w in zip(s.dag.parents(j), mech.weights):
                B[j - 1, p - 1] = w
            c[j - 1], d[j - 1] = mech.noise_mean, mech.noise_std
        elif isinstance(mech, FixedMarginal):
            c[j - 1], d[j - 1] = mech.mean, mech.std
        elif isinstance(mech, LocScaleNet) and mech.n_parents == 0:
            c[j - 1], d[j - 1] = 0.0, 1.0
        else:
            return None
    A = np.linalg.inv(np.eye(n) - B)
    cov = A @ np.diag(d ** 2) @ A.T
    return A @ c, np.diag(cov).copy()


def marginal_rule(s: Scm, i: int, n_quad=DEFAULT_QUAD_NODES, rng=None, mc_draws=INNER_MC_DRAWS):
    """Nodes and log-weights integrating against the marginal of ``V_i``.

    Gauss-Hermite when the marginal is Gaussian, else equally weighted
    draws from the SCM.
    """
    g = _gaussian_marginals(s)
    if g is not None:
        mean, var = g
        x, w = np.polynomial.hermite_e.hermegauss(n_quad)
        return mean[i - 1] + np.sqrt(var[i - 1]) * x, np.log(w / w.sum())
    if rng is None:
        raise InputError("a random stream is needed for a non-Gaussian marginal")
    draws = sample_latents(s, mc_draws, rng).values[:, i - 1]
    return draws, np.full(mc_draws, -np.log(mc_draws))


# --- causal influence ---------------------------------------------------------

class ScmView:
    """Mechanism access for causal-influence estimation directly on V."""

    def __init__(self, s: Scm, n_quad=DEFAULT_QUAD_NODES, rng=None):
        self.scm = s
        self.dag = s.dag
        self.n_quad = n_quad
        self.rng = rng

    def marginal_rule(self, i):
        return marginal_rule(self.scm, i, self.n_quad, self.rng)

    def cond_logpdf(self, j, values):
        return self.scm.node_logpdf(j, values)

    def cond_logpdf_inner(self, j, values, i, nodes):
        """(N, K) matrix of log p_j(v_j | v_pa) with v_i replaced by each node."""
        N, K = values.shape[0], nodes.size
        tiled = np.repeat(values[:, None, :], K, axis=1)
        tiled[:, :, i - 1] = nodes[None, :]
        return self.scm.node_logpdf(j, tiled.reshape(N * K, -1)).reshape(N, K)


def _chunks(N, K, budget=2_000_000):
    step = max(1, budget // max(K, 1))
    for start in range(0, N, step):
        yield slice(start, min(N, start + step))


def causal_influence_from_samples(view, i: int, j: int, values: np.ndarray):
    """Monte-Carlo KL between P and the distribution with the i->j arrow cut.

    The cut mechanism integrates ``p_j(v_j | v_pa)`` against the marginal of
    ``V_i`` using ``view.marginal_rule(i)``.  Returns (estimate, std_err).
    """
    if not view.dag.has_edge(i, j):
        raise InputError(f"edge {i}->{j} not in graph")
    nodes, logw = view.marginal_rule(i)
    terms = np.empty(values.shape[0])
    for sl in _chunks(values.shape[0], nodes.size):
        chunk = values[sl]
        full = view.cond_logpdf(j, chunk)
        cut = logsumexp(view.cond_logpdf_inner(j, chunk, i, nodes) + logw[None, :], axis=1)
        terms[sl] = full - cut
    N = terms.size
    se = float(terms.std(ddof=1) / np.sqrt(N)) if N > 1 else float("inf")
    return float(terms.mean()), se


def causal_influence(s: Scm, i: int, j: int, N: int, rng: np.random.Generator,
                     n_quad=DEFAULT_QUAD_NODES):
    if not s.dag.has_edge(i, j):
        raise InputError(f"edge {i}->{j} not in graph")
    values = sample_latents(s, N, rng).values
    return causal_influence_from_samples(ScmView(s, n_quad, rng), i, j, values)


# --- element-wise reparametrisations ------------------------------------------

@dataclass(frozen=True)
class MonotoneMap:
    """Strictly monotone differentiable scalar map with an inverse.

    ``inverse`` may be omitted, in which case it is computed by safeguarded
    Newton iteration.
    """

    forward: Callable
    derivative: Callable
    inverse_fn: Optional[Callable] = None
    name: str = "map"

    def __call__(self, v):
        return self.forward(v)

    def inverse(self, z, tol=1e-12, max_iter=200):
        if self.inverse_fn is not None:
            return self.inverse_fn(z)
        return _newton_inverse(self.forward, self.derivative, z, tol, max_iter)

    def inverse_map(self) -> "MonotoneMap":
        """ψ = φ⁻¹ as a map with derivative 1 / φ'(ψ(z))."""
        return MonotoneMap(self.inverse, lambda z: 1.0 / self.derivative(self.inverse(z)),
                           self.forward, name=f"inv({self.name})")

    def is_monotone(self, grid=None) -> bool:
        grid = np.linspace(-5, 5, 201) if grid is None else grid
        d = self.derivative(grid)
        y = self.forward(grid)
        if np.all(d > 0):
            return bool(np.all(np.diff(y) > 0))
        if np.all(d < 0):
            return bool(np.all(np.diff(y) < 0))
        return False

    @classmethod
    def affine(cls, scale, shift=0.0):
        if scale == 0:
            raise InputError("affine scale must be nonzero")
        return cls(lambda v: scale * v + shift, lambda v: np.full(np.shape(v), float(scale)),
                   lambda z: (z - shift) / scale, name=f"affine({scale},{shift})")

    @classmethod
    def tanh_bump(cls, c=0.3):
        """v + c tanh(v); increasing for c > -1."""
        return cls(lambda v: v + c * np.tanh(v), lambda v: 1.0 + c * (1.0 - np.tanh(v) ** 2),
                   name=f"tanh_bump({c})")

    @classmethod
    def exp_map(cls, a=0.5, scale=1.0):
        """scale * exp(a v): a diffeomorphism of R onto (0, inf) (or its negative)."""
        if a == 0 or scale == 0:
            raise InputError("exp map needs nonzero rate and scale")
        return cls(lambda v: scale * np.exp(a * v), lambda v: scale * a * np.exp(a * v),
                   lambda z: np.log(z / scale) / a, name=f"exp({a},{scale})")

    @classmethod
    def cubic(cls, c=0.1):
        """v + c v^3 for c >= 0."""
        return cls(lambda v: v + c * v ** 3, lambda v: 1.0 + 3 * c * v ** 2, name=f"cubic({c})")

    @classmethod
    def identity(cls):
        return cls.affine(1.0, 0.0)


def _newton_inverse(f, df, z, tol=1e-12, max_iter=200):
    """Solve f(x) = z for strictly monotone f: expand a bracket, then Newton with bisection fallback."""
    z = np.asarray(z, dtype=np.float64)
    increasing = float(df(np.zeros(1))[0]) > 0
    sign = 1.0 if increasing else -1.0

    def g(x):
        return sign * (f(x) - z)

    lo = np.full(z.shape, -1.0)
    hi = np.full(z.shape, 1.0)
    for _ in range(200):
        need = g(lo) > 0
        if not np.any(need):
            break
        lo = np.where(need, 2 * lo, lo)
    for _ in range(200):
        need = g(hi) < 0
        if not np.any(need):
            break
        hi = np.where(need, 2 * hi, hi)
    x = 0.5 * (lo + hi)
    scale = np.maximum(1.0, np.abs(z))
    for _ in range(max_iter):
        gx = g(x)
        done = np.abs(gx) <= tol * scale
        if np.all(done):
            return x
        lo = np.where(gx < 0, x, lo)
        hi = np.where(gx > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - gx / (sign * df(x))
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        x = np.where(done, x, np.where(bad, 0.5 * (lo + hi), step))
        if np.all((hi - lo) <= 1e-15 * np.maximum(1.0, np.abs(x))):
            return x
    raise NumericError("monotone inverse did not converge")


def _check_maps(maps, n):
    if len(maps) != n:
        raise InputError(f"need {n} maps, got {len(maps)}")
    for k, m in enumerate(maps, start=1):
        if not m.is_monotone():
            raise InputError(f"map {k} ({m.name}) is not strictly monotone on the probe grid")


def transform_representation(b: LatentBatch, p: Permutation, maps: Sequence[MonotoneMap]) -> LatentBatch:
    """Z with column π(i) equal to φ_i applied to column i of V."""
    if p.n != b.n:
        raise InputError("permutation size must match the latent dimension")
    _check_maps(maps, b.n)
    z = np.empty_like(b.values)
    for i in range(1, b.n + 1):
        z[:, p(i) - 1] = maps[i - 1](b.values[:, i - 1])
    return LatentBatch(z)


def inverse_transform_representation(zb: LatentBatch, p: Permutation, maps: Sequence[MonotoneMap]) -> LatentBatch:
    v = np.empty_like(zb.values)
    for i in range(1, zb.n + 1):
        v[:, i - 1] = maps[i - 1].inverse(zb.values[:, p(i) - 1])
    return LatentBatch(v)


class TransformedView:
    """Mechanisms of Z = P_{π⁻¹} ∘ φ(V) obtained by change of variables.

    ``q_{π(j)}(z_{π(j)} | z_pa) = p_j(ψ_j(z_{π(j)}) | ψ(z_pa)) |ψ_j'(z_{π(j)})|``
    and the marginal rule for ``Z_{π(i)}`` pushes V's rule through φ_i.
    """

    def __init__(self, s: Scm, p: Permutation, maps: Sequence[MonotoneMap],
                 n_quad=DEFAULT_QUAD_NODES, rng=None):
        _check_maps(maps, s.n)
        self.scm, self.perm, self.maps = s, p, list(maps)
        self.inv = p.inverse()
        self.dag = Dag(s.n, frozenset((p(a), p(b)) for a, b in s.dag.edges)) if all(
            p(a) < p(b) for a, b in s.dag.edges) else None
        if self.dag is None:
            raise InputError("permutation does not preserve the causal order")
        self.base = ScmView(s, n_quad, rng)

    def _to_v(self, z):
        v = np.empty_like(z)
        for i in range(1, self.scm.n + 1):
            v[..., i - 1] = self.maps[i - 1].inverse(z[..., self.perm(i) - 1])
        return v

    def _log_jac(self, jz, z):
        j = self.inv(jz)
        psi = self.maps[j - 1].inverse_map()
        return np.log(np.abs(psi.derivative(z[..., jz - 1])))

    def marginal_rule(self, iz):
        i = self.inv(iz)
        nodes, logw = self.base.marginal_rule(i)
        return self.maps[i - 1](nodes), logw

    def cond_logpdf(self, jz, z):
        return self.scm.node_logpdf(self.inv(jz), self._to_v(z)) + self._log_jac(jz, z)

    def cond_logpdf_inner(self, jz, z, iz, nodes):
        i = self.inv(iz)
        v = self._to_v(z)
        v_nodes = self.maps[i - 1].inverse(nodes)
        inner = self.base.cond_logpdf_inner(self.inv(jz), v, i, v_nodes)
        return inner + self._log_jac(jz, z)[:, None]


def induced_intervened_density(ptilde: Callable, psi: MonotoneMap, z):
    """Density of Z = φ(V) for V ~ p̃, written via ψ = φ⁻¹: p̃(ψ(z)) |ψ'(z)|."""
    return ptilde(psi(z)) * np.abs(psi.derivative(z))


# --- genericity gap -----------------------------------------------------------

WITNESSES = {
    "linear": lambda y: y,
    "square": lambda y: y * y,
    "log": np.log,
    "sqrt": np.sqrt,
}


def genericity_gap(base: Scm, int1: InterventionSpec, int2: InterventionSpec,
                   witness: Union[str, Callable], N: int, rng: np.random.Generator):
    """MC estimate of E_{P^e0}[φ(r)] - E_{P^e1}[φ(r)] with r = p̃_2(v_2) / p_2(v_2 | v_1).

    Returns (gap, combined std_err); e0 and e1 are sampled independently.
    """
    if not base.dag.has_edge(1, 2) or base.dag.parents(2) != (1,):
        raise InputError("genericity gap needs a base SCM whose node 2 has exactly parent 1")
    if int1.target != 1 or int2.target != 2:
        raise InputError("int1 must target node 1 and int2 node 2")
    phi = WITNESSES[witness] if isinstance(witness, str) else witness

    def expectation(s):
        v = sample_latents(s, N, rng).values
        log_r = int2.logpdf(v[:, 1]) - base.node_logpdf(2, v)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            vals = np.asarray(phi(np.exp(log_r)), dtype=np.float64)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise NumericError(f"witness returned {vals[k]} at ratio exp({log_r[k]:.6g})")
        return vals.mean(), vals.var(ddof=1) / N

    m0, v0 = expectation(base)
    m1, v1 = expectation(intervene(base, int1))
    return float(m0 - m1), float(np.sqrt(v0 + v1))


# --- random SCMs ---------------------------------------------------------------

def _complete_dag(n):
    return Dag(n, frozenset(itertools.combinations(range(1, n + 1), 2)))


def _sample_net(k, rng):
    return (sample_mlp_weights(rng, (k, k)), sample_mlp_weights(rng, (k, k)),
            sample_mlp_weights(rng, (1, k)))


def _scale_ok(mech: LocScaleNet, k: int, floor=1e-3, points=41) -> bool:
    axis = np.linspace(-5, 5, points)
    grid = np.array(list(itertools.product(axis, repeat=k)))
    return bool(np.all(np.abs(mech.scale(grid)) >= floor))


def sample_random_scm(kind: str, n: int, rng: np.random.Generator, beta: float = 10.0,
                      dag: Optional[Dag] = None, max_attempts=1000) -> Scm:
    """Random SCM over ``dag`` (default: the complete order-consistent DAG).

    ``linear-gaussian``: each edge weight uniform on [-10, -2] ∪ [2, 10], unit noise.
    ``loc-scale``: location/scale networks drawn like the mixing MLPs, parent strength ``beta``.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    dag = _complete_dag(n) if dag is None else dag
    if dag.n != n:
        raise InputError("dag size must equal n")
    mechs = []
    for j in range(1, n + 1):
        k = len(dag.parents(j))
        if kind in ("linear-gaussian", "linear_gaussian"):
            w = rng.uniform(2.0, 10.0, size=k) * rng.choice([-1.0, 1.0], size=k)
            mechs.append(LinearGaussian(tuple(w), 0.0, 1.0))
        elif kind in ("loc-scale", "loc_scale"):
            if k == 0:
                mechs.append(LocScaleNet((), (), beta))
                continue
            for _ in range(max_attempts):
                mech = LocScaleNet(_sample_net(k, rng), _sample_net(k, rng), beta)
                if _scale_ok(mech, k):
                    break
            else:
                raise GenerationError("could not draw a scale network bounded away from zero")
            mechs.append(mech)
        else:
            raise InputError(f"unknown SCM kind {kind!r}")
    return Scm(dag, tuple(mechs))


def bivariate_linear_scm(alpha: float, noise_std=1.0) -> Scm:
    """V1 := U1, V2 := alpha V1 + U2."""
    return Scm(Dag(2, frozenset({(1, 2)})),
               (LinearGaussian((), 0.0, noise_std), LinearGaussian((alpha,), 0.0, noise_std)))
