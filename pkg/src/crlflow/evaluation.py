"""Identification metrics and theory checks, plus report assembly."""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from .exceptions import EvaluationError, InputError, NumericError
from .graph import Dag, Permutation, is_crl_graph_isomorphism
from .rng import as_rng
from .scm import (
    DEFAULT_QUAD_NODES,
    InterventionSpec,
    LatentBatch,
    MonotoneMap,
    Scm,
    ScmView,
    TransformedView,
    causal_influence_from_samples,
    genericity_gap,
    induced_intervened_density,
    intervene,
    sample_latents,
    transform_representation,
)

__all__ = [
    "mcc",
    "correlation_matrix",
    "delta_val_ll",
    "InfluenceCheck",
    "influence_invariance_check",
    "GenericityRecord",
    "genericity_record",
    "rank_partial_corr_test",
    "ci_verdicts",
    "ci_invariance_check",
    "grid_inverse_cdf_sampler",
    "MinimalityRecord",
    "minimality_check",
    "EvalReport",
    "assemble_report",
    "write_long_csv",
]

MCC_METHODS = ("pearson", "spearman")


# --- MCC -----------------------------------------------------------------------

def _standardize(A: np.ndarray, name: str) -> np.ndarray:
    sd = A.std(axis=0)
    if np.any(sd == 0) or not np.all(np.isfinite(sd)):
        k = int(np.argmax((sd == 0) | ~np.isfinite(sd)))
        raise EvaluationError(f"column {k + 1} of {name} is constant")
    return (A - A.mean(axis=0)) / sd


def correlation_matrix(Z, V, method="pearson") -> np.ndarray:
    """``C[a, b] = corr(Z[:, a], V[:, b])``."""
    Z = np.asarray(Z, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if Z.ndim != 2 or Z.shape != V.shape:
        raise InputError(f"Z and V must be matrices of equal shape, got {Z.shape} and {V.shape}")
    if Z.shape[0] < 3:
        raise InputError("need at least 3 rows")
    if method not in MCC_METHODS:
        raise InputError(f"unknown method {method!r}")
    if method == "spearman":
        Z = stats.rankdata(Z, axis=0)
        V = stats.rankdata(V, axis=0)
    Zs, Vs = _standardize(Z, "Z"), _standardize(V, "V")
    return Zs.T @ Vs / Z.shape[0]


def mcc(Z, V, method="pearson") -> float:
    """Mean absolute correlation under the best one-to-one column matching."""
    C = np.abs(correlation_matrix(Z, V, method))
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(np.clip(C[rows, cols].mean(), 0.0, 1.0))


def delta_val_ll(val_ll: Dict[int, float], reference: int) -> Dict[int, float]:
    """``reference - candidate`` per candidate (mean per-sample nats)."""
    if hasattr(val_ll, "val_lls"):
        val_ll = val_ll.val_lls()
    if reference not in val_ll:
        raise InputError(f"reference candidate {reference} not in report")
    ref = val_ll[reference]
    return {k: ref - v for k, v in val_ll.items()}


# --- causal-influence invariance -----------------------------------------------

@dataclass
class InfluenceCheck:
    i: int
    j: int
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    combined_se: float
    passed: bool
    label: str = ""


def influence_invariance_check(s: Scm, i: int, j: int, p: Permutation, maps: Sequence[MonotoneMap],
                               N: int, rng, n_quad=DEFAULT_QUAD_NODES, shared=False, bias=0.0,
                               label="") -> InfluenceCheck:
    """Influence of i->j on V versus influence of p(i)->p(j) on Z = P∘φ(V).

    The two sides use independent samples unless ``shared``.  ``bias`` is
    added to the right-hand side (mutation testing of the check itself).
    """
    rng = as_rng(rng)
    if not s.dag.has_edge(i, j):
        raise InputError(f"edge {i}->{j} not in the graph")
    edges = [(p(a), p(b)) for a, b in s.dag.edges]
    if any(a >= b for a, b in edges):
        raise InputError("permutation does not map the graph to an order-consistent graph")
    if not is_crl_graph_isomorphism(s.dag, Dag(s.n, frozenset(edges)), p):
        raise InputError("permutation is not a graph isomorphism")
    v_lhs = sample_latents(s, N, rng).values
    v_rhs = v_lhs if shared else sample_latents(s, N, rng).values
    lhs, lse = causal_influence_from_samples(ScmView(s, n_quad, rng), i, j, v_lhs)
    z = transform_representation(LatentBatch(v_rhs), p, maps).values
    rhs, rse = causal_influence_from_samples(TransformedView(s, p, maps, n_quad, rng), p(i), p(j), z)
    rhs += bias
    se = float(np.hypot(lse, rse))
    return InfluenceCheck(i, j, lhs, rhs, lse, rse, se, bool(abs(lhs - rhs) <= 3 * se), label)


# --- genericity gap -------------------------------------------------------------

@dataclass
class GenericityRecord:
    witness: str
    gap: float
    std_err: float
    nonzero: bool
    label: str = ""
    error: str = ""


def genericity_record(base: Scm, int1: InterventionSpec, int2: InterventionSpec, witness: str,
                      N: int, rng, label="") -> GenericityRecord:
    try:
        gap, se = genericity_gap(base, int1, int2, witness, N, as_rng(rng))
    except NumericError as exc:
        return GenericityRecord(witness, float("nan"), float("nan"), False, label, str(exc))
    return GenericityRecord(witness, gap, se, bool(abs(gap) > 3 * se), label)


# --- rank-based conditional independence ------------------------------------------

def _normal_scores(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    return stats.norm.ppf(stats.rankdata(A, axis=0) / (n + 1))


def rank_partial_corr_test(data, i: int, j: int, cond: Sequence[int] = ()):
    """Partial correlation of normal scores with a Fisher-z test.

    Columns are 1-based.  Returns ``(r, p_value)``.
    """
    data = np.asarray(data, dtype=np.float64)
    cond = list(cond)
    if i == j or i in cond or j in cond:
        raise InputError("i, j and the conditioning set must be disjoint")
    cols = [i - 1, j - 1] + [c - 1 for c in cond]
    S = _normal_scores(data[:, cols])
    a, b = S[:, 0], S[:, 1]
    if cond:
        C = np.column_stack([np.ones(S.shape[0]), S[:, 2:]])
        a = a - C @ np.linalg.lstsq(C, a, rcond=None)[0]
        b = b - C @ np.linalg.lstsq(C, b, rcond=None)[0]
    r = float(np.corrcoef(a, b)[0, 1])
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    dof = S.shape[0] - len(cond) - 3
    z = np.arctanh(r) * np.sqrt(dof)
    return r, float(2 * stats.norm.sf(abs(z)))


def ci_verdicts(data, alpha=0.01, max_cond=1) -> Dict[tuple, bool]:
    """``{(i, j, S): independent?}`` for all pairs and conditioning sets up to ``max_cond``."""
    n = np.shape(data)[1]
    out = {}
    for i, j in itertools.combinations(range(1, n + 1), 2):
        rest = [k for k in range(1, n + 1) if k not in (i, j)]
        for size in range(0, max_cond + 1):
            for S in itertools.combinations(rest, size):
                out[(i, j, S)] = rank_partial_corr_test(data, i, j, S)[1] > alpha
    return out


def ci_invariance_check(V, p: Permutation, maps: Sequence[MonotoneMap], alpha=0.01, max_cond=1):
    """Compare CI verdicts on V with those on Z = P∘φ(V) (relabelled back through p).

    Returns ``(agree, verdicts_v, verdicts_z)``.
    """
    V = np.asarray(V, dtype=np.float64)
    Z = transform_representation(LatentBatch(V), p, maps).values
    before = ci_verdicts(V, alpha, max_cond)
    after_raw = ci_verdicts(Z, alpha, max_cond)
    after = {}
    for (i, j, S), verdict in before.items():
        a, b = sorted((p(i), p(j)))
        after[(i, j, S)] = after_raw[(a, b, tuple(sorted(p(k) for k in S)))]
    return before == after, before, after


# --- minimality construction ------------------------------------------------------

def grid_inverse_cdf_sampler(density: Callable, grid: np.ndarray, size: int, rng) -> np.ndarray:
    """Draw from a 1-D density by trapezoid CDF on an increasing grid and linear interpolation."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise InputError("grid must be strictly increasing with at least 3 points")
    f = np.asarray(density(grid), dtype=np.float64)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise EvaluationError("density must be finite and non-negative on the grid")
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid))])
    if cdf[-1] <= 0:
        raise EvaluationError("density has no mass on the grid")
    cdf /= cdf[-1]
    u = as_rng(rng).uniform(size=size)
    return np.interp(u, cdf, grid)


@dataclass
class MinimalityRecord:
    target: int
    ks: List[float]
    critical: float
    passed: bool
    mismatch_ks: List[float] = field(default_factory=list)
    mismatch_rejected: bool = False
    label: str = ""


def _ks_critical(n, m, alpha):
    return float(np.sqrt(-np.log(alpha / 2) / 2) * np.sqrt((n + m) / (n * m)))


def _sample_induced(s: Scm, p: Permutation, maps, iv: InterventionSpec, psi_i: MonotoneMap,
                    N: int, rng, grid_points=20001, half_width=12.0):
    """Ancestral sampling of Z where the intervened coordinate uses the induced mechanism.

    Unintervened coordinates follow the transformed mechanisms, i.e. draw
    ``V_j`` from ``p_j(. | ψ(z_pa))`` and map it through φ_j.
    """
    n = s.n
    z = np.empty((N, n))
    v = np.empty((N, n))  # ψ(z) column by column, in V labelling
    i = iv.target
    for k in range(1, n + 1):
        col = p(k) - 1
        if k == i:
            lo, hi = iv.mean - half_width * iv.std, iv.mean + half_width * iv.std
            ends = np.sort(maps[k - 1](np.array([lo, hi])))
            grid = np.linspace(ends[0], ends[1], grid_points)
            dens = lambda t: induced_intervened_density(iv.pdf, psi_i, t)
            z[:, col] = grid_inverse_cdf_sampler(dens, grid, N, rng)
            v[:, k - 1] = psi_i(z[:, col])
        else:
            mean, std = s.conditional(k, v)
            v[:, k - 1] = mean + std * rng.standard_normal(N)
            z[:, col] = maps[k - 1](v[:, k - 1])
    return z


def minimality_check(s: Scm, p: Permutation, maps: Sequence[MonotoneMap], iv: InterventionSpec, N: int,
                     rng, alpha=0.01, mismatch_scale=1.5, label="") -> MinimalityRecord:
    """Two-sample KS per coordinate: φ-pushed intervened V-samples versus Z-samples
    whose intervened coordinate follows ``p̃(ψ(z))|ψ'(z)|``.

    The same comparison with ψ replaced by ``mismatch_scale * ψ`` should fail.
    """
    rng = as_rng(rng)
    i = iv.target
    s_int = intervene(s, iv)
    ref = transform_representation(LatentBatch(sample_latents(s_int, N, rng).values), p, maps).values
    psi = maps[i - 1].inverse_map()
    z_ok = _sample_induced(s, p, maps, iv, psi, N, rng)
    bad = MonotoneMap(lambda t: mismatch_scale * psi(t), lambda t: mismatch_scale * psi.derivative(t),
                      name=f"{mismatch_scale}*{psi.name}")
    z_bad = _sample_induced(s, p, maps, iv, bad, N, rng)
    crit = _ks_critical(N, N, alpha)
    ks = [float(stats.ks_2samp(ref[:, c], z_ok[:, c]).statistic) for c in range(s.n)]
    ks_bad = [float(stats.ks_2samp(ref[:, c], z_bad[:, c]).statistic) for c in range(s.n)]
    return MinimalityRecord(i, ks, crit, bool(max(ks) < crit), ks_bad, bool(max(ks_bad) >= crit), label)


# --- reports ----------------------------------------------------------------------

@dataclass
class EvalReport:
    candidates: List[dict] = field(default_factory=list)
    reference: Optional[int] = None
    influence: List[dict] = field(default_factory=list)
    genericity: List[dict] = field(default_factory=list)
    minimality: List[dict] = field(default_factory=list)
    ci: List[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(_jsonable(self.to_dict()), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_candidate_csv(self, path):
        cols = ["candidate", "graph", "targets", "val_ll", "delta_ll", "mcc_pearson", "mcc_spearman"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for c in self.candidates:
                w.writerow([_cell(c.get(k)) for k in cols])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def assemble_report(search, checks: Optional[dict] = None, reference: Optional[int] = None,
                    metadata: Optional[dict] = None) -> EvalReport:
    """Merge a search report and theory-check records into one serializable report."""
    checks = checks or {}
    vals = search.val_lls()
    deltas = delta_val_ll(vals, reference) if reference is not None and reference in vals else {}
    rows = []
    for e in search.entries:
        rows.append({
            "candidate": e.spec.index,
            "graph": e.spec.graph.to_text(),
            "targets": e.spec.targets_text(),
            "equivalence_group": e.spec.equivalence_group,
            "val_ll": e.val_ll,
            "delta_ll": deltas.get(e.spec.index),
            "mcc_pearson": e.mcc,
            "mcc_spearman": e.mcc_spearman,
            "error": e.error,
        })
    meta = {"ll_units": "mean per-sample log-likelihood, nats",
            "mcc": "columns standardized; optimal assignment on |corr|; held-out test split"}
    meta.update(metadata or {})

    def recs(key):
        return [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in checks.get(key, [])]

    return EvalReport(rows, reference, recs("influence"), recs("genericity"), recs("minimality"),
                      recs("ci"), _jsonable(meta))


def write_long_csv(rows, path):
    """Rows of ``(seed, candidate, metric, value)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "candidate", "metric", "value"])
        for seed, cand, metric, value in rows:
            w.writerow([seed, cand, metric, _cell(float(value)) if value is not None else ""])
