"""Candidate generative models: flow encoder + environment-conditional causal base."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from . import diff as D
from .diff import ParameterSet, Tensor
from .exceptions import FormatError, InputError
from .flows import SplineConfig, TriangularFlow, build_flow_stack
from .graph import Dag, parse_dag
from .rng import as_rng
from .scm import LOG_2PI

__all__ = [
    "ArchConfig",
    "CandidateSpec",
    "ParametricBase",
    "ReducedFormBase",
    "CandidateModel",
    "build_candidate",
    "base_log_density",
    "log_likelihood",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1
STD_FLOOR = 1e-4
# softplus(raw) + floor == 1 at raw == _UNIT_STD_RAW
_UNIT_STD_RAW = float(np.log(np.expm1(1.0 - STD_FLOOR)))
FAMILIES = ("parametric", "reduced-form")


@dataclass(frozen=True)
class ArchConfig:
    n_layers: int = 12
    hidden: int = 128
    family: str = "spline"
    bins: int = 8
    bound: float = 10.0
    tri_layers: int = 6
    tri_hidden: int = 64

    def __post_init__(self):
        if self.n_layers < 0 or self.tri_layers < 1:
            raise InputError("layer counts must be non-negative (triangular depth >= 1)")
        if self.hidden < 1 or self.tri_hidden < 1 or self.bins < 2 or self.bound <= 0:
            raise InputError("invalid architecture sizes")

    @property
    def spline(self) -> SplineConfig:
        return SplineConfig(bins=self.bins, bound=self.bound)


@dataclass(frozen=True)
class CandidateSpec:
    """A candidate graph plus an environment -> inferred-target assignment.

    ``targets`` is a tuple of ``(env, target)`` pairs, ``target`` being a
    1-based vertex or ``None`` for an observational environment.
    """

    graph: Dag
    targets: Tuple[Tuple[int, Optional[int]], ...]
    base_family: str = "parametric"
    equivalence_group: Optional[int] = None
    index: int = 0

    def __post_init__(self):
        if self.base_family not in FAMILIES:
            raise InputError(f"unknown base family {self.base_family!r}")
        pairs = tuple(sorted((int(e), None if t is None else int(t))
                             for e, t in dict(self.targets).items()))
        if len(pairs) != len(self.targets):
            raise InputError("at most one target per environment")
        for e, t in pairs:
            if e < 0:
                raise InputError(f"environment labels must be non-negative, got {e}")
            if t is not None:
                self.graph.check_vertex(t)
        object.__setattr__(self, "targets", pairs)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def envs(self):
        return [e for e, _ in self.targets]

    def target_of(self, env: int) -> Optional[int]:
        d = dict(self.targets)
        if env not in d:
            raise InputError(f"environment {env} is not covered by candidate {self.index}")
        return d[env]

    def intervened_nodes(self):
        return sorted({t for _, t in self.targets if t is not None})

    def targets_text(self) -> str:
        return ";".join(f"{e}:{'-' if t is None else t}" for e, t in self.targets)

    def to_dict(self) -> dict:
        return {"graph": self.graph.to_text(), "targets": [[e, t] for e, t in self.targets],
                "base_family": self.base_family, "equivalence_group": self.equivalence_group,
                "index": self.index}

    @classmethod
    def from_dict(cls, d) -> "CandidateSpec":
        return cls(parse_dag(d["graph"]), tuple((e, t) for e, t in d["targets"]),
                   d["base_family"], d.get("equivalence_group"), d.get("index", 0))


def _gauss(z, mean, std):
    r = D.div(D.sub(z, mean), std)
    return D.sub(D.add(D.mul(D.square(r), -0.5), -0.5 * LOG_2PI), D.log(std))


def _std(raw):
    return D.add(D.softplus(raw), STD_FLOOR)


class ParametricBase:
    """Gaussian base mechanisms with learnable intervened marginals.

    Node i uses ``N(a_i . z_pa, s_i^2)`` when it has parents in the
    candidate graph and ``N(m_i, r_i^2)`` otherwise; intervened nodes use
    their own ``N(mt_i, st_i^2)``.  Marginal parameters exist for every node
    so candidates differ only in the regression block.
    """

    def __init__(self, spec: CandidateSpec, params: ParameterSet):
        self.spec, self.params = spec, params
        g = spec.graph
        for i in g.vertices:
            params.add(f"base.mu{i}", np.zeros(1))
            params.add(f"base.sm{i}", np.full(1, _UNIT_STD_RAW))
            if g.parents(i):
                params.add(f"base.a{i}", np.zeros(len(g.parents(i))))
                params.add(f"base.sc{i}", np.full(1, _UNIT_STD_RAW))
        for i in spec.intervened_nodes():
            params.add(f"base.mut{i}", np.zeros(1))
            params.add(f"base.st{i}", np.full(1, _UNIT_STD_RAW))

    def node_terms(self, z: Tensor, i: int):
        p = self.params
        zi = D.columns(z, i - 1)
        pa = self.spec.graph.parents(i)
        if pa:
            w = D.reshape(p[f"base.a{i}"], (-1, 1))
            mean = D.matmul(D.columns(z, [k - 1 for k in pa]), w)
            obs = _gauss(zi, mean, _std(p[f"base.sc{i}"]))
        else:
            obs = _gauss(zi, p[f"base.mu{i}"], _std(p[f"base.sm{i}"]))
        if i not in self.spec.intervened_nodes():
            return obs, None
        return obs, _gauss(zi, p[f"base.mut{i}"], _std(p[f"base.st{i}"]))

    def log_density(self, z: Tensor, row_targets: np.ndarray) -> Tensor:
        total = None
        for i in self.spec.graph.vertices:
            obs, intv = self.node_terms(z, i)
            mask = (row_targets == i)[:, None]
            term = obs if intv is None or not mask.any() else D.where(mask, intv, obs)
            total = term if total is None else D.add(total, term)
        return D.reshape(total, (-1,))

    def summary(self) -> dict:
        return {k: self.params[k].value.tolist() for k in self.params if k.startswith("base.")}


class ReducedFormBase:
    """Triangular flow for the unintervened mechanisms; intervened nodes are fixed N(0, 1)."""

    def __init__(self, spec: CandidateSpec, params: ParameterSet, arch: ArchConfig,
                 rng: np.random.Generator):
        self.spec = spec
        self.flow = TriangularFlow(spec.n, arch.tri_layers, params, rng, prefix="scm",
                                   hidden=arch.tri_hidden, spline=arch.spline)

    def log_density(self, z: Tensor, row_targets: np.ndarray) -> Tensor:
        eps, logdiag = self.flow.forward(z)
        obs = D.add(D.add(D.mul(D.square(eps), -0.5), -0.5 * LOG_2PI), logdiag)
        mask = row_targets[:, None] == np.arange(1, self.spec.n + 1)[None, :]
        if mask.any():
            intv = D.add(D.mul(D.square(z), -0.5), -0.5 * LOG_2PI)
            obs = D.where(mask, intv, obs)
        return D.tsum(obs, axis=1)


class CandidateModel:
    """Encoder flow ``h`` (data -> latent) plus a causal base for one candidate."""

    def __init__(self, spec: CandidateSpec, arch: ArchConfig, rng: np.random.Generator):
        self.spec, self.arch = spec, arch
        self.dim = spec.n
        self.params = ParameterSet()
        self.encoder = build_flow_stack(self.dim, arch.n_layers if self.dim > 1 else 0, self.params,
                                        rng, prefix="enc", family=arch.family, hidden=arch.hidden,
                                        spline=arch.spline)
        if spec.base_family == "parametric":
            self.base = ParametricBase(spec, self.params)
        else:
            self.base = ReducedFormBase(spec, self.params, arch, rng)
        lut = np.full(max(spec.envs) + 1, -1, dtype=np.int64)
        for e, t in spec.targets:
            lut[e] = 0 if t is None else t
        self._lut = lut

    def row_targets(self, env) -> np.ndarray:
        env = np.asarray(env, dtype=np.int64).reshape(-1)
        if env.size and (env.min() < 0 or env.max() >= self._lut.size or (self._lut[env] < 0).any()):
            bad = sorted(set(env.tolist()) - set(self.spec.envs))
            raise InputError(f"unknown environment label(s) {bad} for candidate {self.spec.index}")
        return self._lut[env]

    def _check_x(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise InputError(f"expected an (N, {self.dim}) array, got shape {X.shape}")
        return X

    def base_log_density(self, z, env) -> Tensor:
        return self.base.log_density(D.as_tensor(z), self.row_targets(env))

    def log_likelihood(self, X, env) -> Tensor:
        """Per-row ``log q_e(h(x)) + log|det J_h(x)|``."""
        X = self._check_x(X)
        targets = self.row_targets(env)
        z, logdet = self.encoder.forward(D.constant(X))
        return D.add(self.base.log_density(z, targets), logdet)

    def mean_log_likelihood(self, X, env, chunk=8192) -> float:
        X = self._check_x(X)
        env = np.asarray(env)
        total = 0.0
        with D.no_grad():
            for s in range(0, X.shape[0], chunk):
                total += float(np.sum(self.log_likelihood(X[s:s + chunk], env[s:s + chunk]).value))
        return total / X.shape[0]

    def encode(self, X, chunk=8192) -> np.ndarray:
        X = self._check_x(X)
        out = []
        with D.no_grad():
            for s in range(0, X.shape[0], chunk):
                out.append(self.encoder.forward(D.constant(X[s:s + chunk]))[0].value)
        return np.concatenate(out, axis=0) if out else np.empty((0, self.dim))

    def decode(self, Z) -> np.ndarray:
        return self.encoder.inverse(np.atleast_2d(np.asarray(Z, dtype=np.float64)))[0]

    def n_encoder_params(self) -> int:
        return int(sum(t.value.size for k, t in self.params.items() if k.startswith("enc.")))

    def n_base_params(self) -> int:
        return self.params.size() - self.n_encoder_params()


def build_candidate(spec: CandidateSpec, arch: ArchConfig, rng, envs=None, dim=None) -> CandidateModel:
    """Fresh model with identity encoder and neutral base.

    ``envs`` / ``dim`` describe the dataset the model will be fitted on and
    are checked against the candidate.
    """
    if dim is not None and int(dim) != spec.n:
        raise InputError(f"candidate has {spec.n} latents but the data has dimension {dim}")
    if envs is not None:
        missing = sorted(set(int(e) for e in envs) - set(spec.envs))
        if missing:
            raise InputError(f"candidate {spec.index} assigns no target to environment(s) {missing}")
    return CandidateModel(spec, arch, as_rng(rng))


def base_log_density(mo: CandidateModel, z, env) -> Tensor:
    return mo.base_log_density(z, env)


def log_likelihood(mo: CandidateModel, x, env) -> Tensor:
    return mo.log_likelihood(x, env)


# --- checkpoints ----------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "values": " ".join(f"{v:.17g}" for v in a.reshape(-1))}


def _decode_array(d) -> np.ndarray:
    vals = np.array([float(v) for v in d["values"].split()], dtype=np.float64)
    return vals.reshape(d["shape"])


def checkpoint_dict(mo: CandidateModel, extra: Optional[dict] = None) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "spec": mo.spec.to_dict(),
        "arch": asdict(mo.arch),
        "layers": mo.encoder.config(),
        "params": {k: _encode_array(t.value) for k, t in mo.params.items()},
        "extra": extra or {},
    }


def model_from_checkpoint(d: dict) -> CandidateModel:
    if d.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {d.get('version')!r}")
    try:
        spec = CandidateSpec.from_dict(d["spec"])
        mo = CandidateModel(spec, ArchConfig(**d["arch"]), np.random.default_rng(0))
        values = {k: _decode_array(v) for k, v in d["params"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed checkpoint: {exc}") from exc
    if set(values) != set(mo.params):
        raise FormatError("checkpoint parameters do not match the architecture")
    mo.params.load(values)
    return mo


def save_checkpoint(mo: CandidateModel, path, extra: Optional[dict] = None):
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(mo, extra), fh, indent=1, sort_keys=True)


def load_checkpoint(path) -> CandidateModel:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return model_from_checkpoint(d)
