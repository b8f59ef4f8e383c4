"""Multi-environment datasets: generation under shared mixing, splitting, CSV persistence."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FormatError, InputError
from .mixing import MlpMixing, mix
from .rng import as_rng, child_rng
from .scm import InterventionSpec, Scm, intervene, sample_latents

__all__ = [
    "EnvironmentSpec",
    "MultiEnvDataset",
    "bivariate_envs",
    "paired_envs",
    "per_node_envs",
    "ENV_PRESETS",
    "generate",
    "split",
    "write",
    "read",
    "metadata_path",
]

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)
SHIFTS = (2.0, -2.0)


@dataclass(frozen=True)
class EnvironmentSpec:
    label: int
    interventions: Tuple[InterventionSpec, ...] = ()

    def __post_init__(self):
        if self.label < 0:
            raise InputError("environment labels are non-negative integers")
        object.__setattr__(self, "interventions", tuple(self.interventions))
        targets = [iv.target for iv in self.interventions]
        if len(set(targets)) != len(targets):
            raise InputError(f"environment {self.label} intervenes on a node twice")

    @property
    def observational(self) -> bool:
        return not self.interventions

    @property
    def targets(self):
        return tuple(iv.target for iv in self.interventions)

    def to_dict(self):
        return {"label": self.label, "interventions": [iv.to_dict() for iv in self.interventions]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["label"]), tuple(InterventionSpec.from_dict(x) for x in d["interventions"]))


def _shift(rng) -> float:
    return float(rng.choice(SHIFTS))


def bivariate_envs(rng: np.random.Generator, n: int = 2) -> List[EnvironmentSpec]:
    """Observational e=0 plus e=i intervening on node i with mean drawn from {+2, -2}."""
    envs = [EnvironmentSpec(0)]
    for i in range(1, n + 1):
        envs.append(EnvironmentSpec(i, (InterventionSpec(i, _shift(rng), 1.0),)))
    return envs


def per_node_envs(rng: np.random.Generator, n: int, observational: bool = False) -> List[EnvironmentSpec]:
    """One intervened environment per node, label i for node i."""
    envs = [EnvironmentSpec(0)] if observational else []
    for i in range(1, n + 1):
        envs.append(EnvironmentSpec(i, (InterventionSpec(i, _shift(rng), 1.0),)))
    return envs


def paired_envs(n: int, observational: bool = False) -> List[EnvironmentSpec]:
    """Two environments per node, means +2 and -2; node i gets labels 2i-1 and 2i."""
    envs = [EnvironmentSpec(0)] if observational else []
    for i in range(1, n + 1):
        for k, m in enumerate(SHIFTS):
            envs.append(EnvironmentSpec(2 * i - 1 + k, (InterventionSpec(i, m, 1.0),)))
    return envs


ENV_PRESETS = ("bivariate", "per-node", "paired")


@dataclass
class MultiEnvDataset:
    env: np.ndarray
    X: np.ndarray
    V: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.env = np.asarray(self.env, dtype=np.int64).reshape(-1)
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] != self.env.size:
            raise InputError("X must be an N x d matrix with one env label per row")
        if self.V is not None:
            self.V = np.asarray(self.V, dtype=np.float64)
            if self.V.ndim != 2 or self.V.shape[0] != self.env.size:
                raise InputError("V must have one row per observation")
        known = self.metadata.get("envs")
        if known is not None and self.env.size:
            labels = {e["label"] for e in known}
            extra = set(np.unique(self.env).tolist()) - labels
            if extra:
                raise InputError(f"rows carry environment labels {sorted(extra)} missing from metadata")

    def __len__(self):
        return self.env.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def labels(self):
        return sorted(set(self.env.tolist()))

    def subset(self, idx) -> "MultiEnvDataset":
        idx = np.asarray(idx)
        return MultiEnvDataset(self.env[idx], self.X[idx], None if self.V is None else self.V[idx],
                               dict(self.metadata))

    def where_env(self, label) -> "MultiEnvDataset":
        return self.subset(np.flatnonzero(self.env == label))


def generate(s: Scm, m: MlpMixing, envs: Sequence[EnvironmentSpec], N_per_env: int, seed: int,
             extra_metadata: Optional[dict] = None) -> MultiEnvDataset:
    """Sample each environment from its intervened SCM and push through the shared mixing.

    Environment ``e`` uses the child stream ``(seed, "env<e>")``.
    """
    if m.dim != s.dag.n:
        raise InputError(f"mixing dimension {m.dim} differs from latent count {s.dag.n}")
    if N_per_env < 1:
        raise InputError("N_per_env must be positive")
    labels = [e.label for e in envs]
    if len(set(labels)) != len(labels):
        raise InputError("duplicate environment labels")
    env_col, xs, vs = [], [], []
    for e in envs:
        scm_e = s
        for iv in e.interventions:
            if not 1 <= iv.target <= s.dag.n:
                raise InputError(f"environment {e.label}: target {iv.target} outside 1..{s.dag.n}")
            scm_e = intervene(scm_e, iv)
        v = sample_latents(scm_e, N_per_env, child_rng(seed, f"env{e.label}")).values
        x, _ = mix(m, v)
        env_col.append(np.full(N_per_env, e.label, dtype=np.int64))
        xs.append(x)
        vs.append(v)
    meta = {"scm": s.to_dict(), "mixing": m.to_dict(), "envs": [e.to_dict() for e in envs],
            "seed": int(seed), "n_per_env": int(N_per_env), "has_latents": True}
    meta.update(extra_metadata or {})
    return MultiEnvDataset(np.concatenate(env_col), np.concatenate(xs), np.concatenate(vs), meta)


def split(d: MultiEnvDataset, fractions=SPLIT_FRACTIONS, rng=None):
    """Global shuffle (across environments) then contiguous train/val/test parts."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise InputError("fractions must be three positive numbers summing to 1")
    N = len(d)
    if N == 0:
        raise InputError("cannot split an empty dataset")
    order = as_rng(rng).permutation(N)
    n_train = int(round(fractions[0] * N))
    n_val = int(round(fractions[1] * N))
    n_val = min(n_val, N - n_train)
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple(d.subset(p) for p in parts)


# --- persistence ------------------------------------------------------------------

def metadata_path(path) -> str:
    return os.fspath(path) + ".meta.json"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write(d: MultiEnvDataset, path):
    """CSV ``env,x_1..x_d[,v_1..v_n]`` plus a JSON metadata sidecar."""
    meta = dict(d.metadata)
    meta["format"] = {"d": d.d, "n": None if d.V is None else int(d.V.shape[1])}
    header = ["env"] + [f"x_{k + 1}" for k in range(d.d)]
    if d.V is not None:
        header += [f"v_{k + 1}" for k in range(d.V.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in range(len(d)):
            row = [str(int(d.env[r]))] + [_fmt(v) for v in d.X[r]]
            if d.V is not None:
                row += [_fmt(v) for v in d.V[r]]
            w.writerow(row)
    with open(metadata_path(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def read(path) -> MultiEnvDataset:
    try:
        with open(metadata_path(path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"{metadata_path(path)}: metadata sidecar missing") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{metadata_path(path)}: line {exc.lineno}: {exc.msg}") from exc
    fmt = meta.pop("format", None)
    if not isinstance(fmt, dict) or "d" not in fmt:
        raise FormatError(f"{metadata_path(path)}: line 1: no 'format' block")
    d, n = int(fmt["d"]), fmt.get("n")
    has_v = n is not None
    if bool(meta.get("has_latents", has_v)) and not has_v:
        raise FormatError(f"{metadata_path(path)}: metadata promises latents but declares none")
    expected = ["env"] + [f"x_{k + 1}" for k in range(d)]
    if has_v:
        expected += [f"v_{k + 1}" for k in range(int(n))]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: line 1: empty file")
        if header != expected:
            missing = [c for c in expected if c not in header]
            what = f"missing columns {missing}" if missing else f"unexpected header {header}"
            raise FormatError(f"{path}: line 1: {what}")
        env, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise FormatError(f"{path}: line {lineno}: expected {len(expected)} fields, got {len(row)}")
            try:
                env.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from exc
    vals = np.array(rows, dtype=np.float64).reshape(len(rows), len(expected) - 1)
    labels = {e["label"] for e in meta.get("envs", [])} if "envs" in meta else None
    if labels is not None:
        for k, e in enumerate(env):
            if e not in labels:
                raise FormatError(f"{path}: line {k + 2}: environment {e} not declared in metadata")
    V = vals[:, d:] if has_v else None
    return MultiEnvDataset(np.array(env, dtype=np.int64), vals[:, :d], V, meta)
