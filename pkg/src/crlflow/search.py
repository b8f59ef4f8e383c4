"""Candidate enumeration and likelihood-ranked model selection."""
from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .evaluation import mcc
from .exceptions import CrlError, InputError, SearchError
from .graph import Dag, enumerate_order_consistent_dags
from .model import ArchConfig, CandidateSpec, build_candidate, checkpoint_dict
from .rng import child_seed
from .train import TrainConfig, fit_with_restarts, write_history

__all__ = [
    "MODES",
    "enumerate_candidates",
    "CandidateResult",
    "SearchReport",
    "run_search",
    "well_specified_index",
]

MODES = ("full-bivariate", "fixed-order-targets")
MAX_EXHAUSTIVE_N = 4


def _complete(n):
    return Dag(n, frozenset(itertools.combinations(range(1, n + 1), 2)))


def _relabel(g: Dag, perm) -> frozenset:
    return frozenset((perm[a - 1], perm[b - 1]) for a, b in g.edges)


def enumerate_candidates(n: int, mode: str, observational: Optional[bool] = None,
                         reference_graph: Optional[Dag] = None) -> List[CandidateSpec]:
    """Candidate specs in canonical order (the list position is the candidate index).

    ``full-bivariate``: graphs {empty, 1->2} x {aligned, swapped} with an
    observational environment 0 and environment i intervening on node i.

    ``fixed-order-targets``: every permutation ``t`` of the targets, environment
    k being assigned target ``t[k-1]``, with the reduced-form base.  Given a
    reference graph, permutations that relabel it to the same graph share an
    equivalence group (the smallest member index).
    """
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}; choose from {MODES}")
    if mode == "full-bivariate":
        if n != 2:
            raise InputError("full-bivariate enumeration requires n = 2")
        obs = True if observational is None else observational
        specs = []
        for g in enumerate_order_consistent_dags(2):
            for perm in ((1, 2), (2, 1)):
                targets = ([(0, None)] if obs else []) + [(1, perm[0]), (2, perm[1])]
                specs.append(CandidateSpec(g, tuple(targets), "parametric", None, len(specs)))
        return specs
    if not 2 <= n <= MAX_EXHAUSTIVE_N:
        raise InputError(f"fixed-order-targets enumeration supports 2 <= n <= {MAX_EXHAUSTIVE_N}")
    if reference_graph is not None and reference_graph.n != n:
        raise InputError("reference graph size must equal n")
    obs = False if observational is None else observational
    specs, groups = [], {}
    for perm in itertools.permutations(range(1, n + 1)):
        group = None
        if reference_graph is not None:
            group = groups.setdefault(_relabel(reference_graph, perm), len(specs))
        targets = ([(0, None)] if obs else []) + [(k, perm[k - 1]) for k in range(1, n + 1)]
        specs.append(CandidateSpec(_complete(n), tuple(targets), "reduced-form", group, len(specs)))
    return specs


def well_specified_index(specs: Sequence[CandidateSpec], true_graph: Optional[Dag] = None) -> int:
    """Index of the candidate with aligned targets (and the true graph when graphs vary)."""
    for s in specs:
        aligned = all(t is None or t == e for e, t in s.targets)
        if aligned and (true_graph is None or s.base_family != "parametric" or s.graph == true_graph):
            return s.index
    raise InputError("no well-specified candidate in the list")


@dataclass
class CandidateResult:
    spec: CandidateSpec
    val_ll: Optional[float] = None
    mcc: Optional[float] = None
    mcc_spearman: Optional[float] = None
    seed: int = 0
    restart: int = 0
    history: List[dict] = field(default_factory=list)
    checkpoint: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "val_ll": self.val_ll, "mcc": self.mcc,
                "mcc_spearman": self.mcc_spearman, "seed": self.seed, "restart": self.restart,
                "history": self.history, "checkpoint": self.checkpoint, "error": self.error}

    @classmethod
    def from_dict(cls, d) -> "CandidateResult":
        d = dict(d)
        d["spec"] = CandidateSpec.from_dict(d["spec"])
        return cls(**d)


@dataclass
class SearchReport:
    entries: List[CandidateResult]
    ranking: List[int]
    selected: int
    metadata: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict, repr=False, compare=False)

    def entry(self, index: int) -> CandidateResult:
        for e in self.entries:
            if e.spec.index == index:
                return e
        raise InputError(f"no candidate {index} in report")

    def val_lls(self) -> Dict[int, float]:
        return {e.spec.index: e.val_ll for e in self.entries if e.ok}

    def selected_equivalent_to(self, index: int) -> bool:
        a, b = self.entry(self.selected).spec, self.entry(index).spec
        if a.index == b.index:
            return True
        return a.equivalence_group is not None and a.equivalence_group == b.equivalence_group

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries], "ranking": self.ranking,
                "selected": self.selected, "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d) -> "SearchReport":
        return cls([CandidateResult.from_dict(e) for e in d["entries"]], list(d["ranking"]),
                   int(d["selected"]), d.get("metadata", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SearchReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_csv(self, path):
        best = self.entry(self.selected).val_ll
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["candidate", "graph", "targets", "val_ll", "delta_ll_vs_best", "mcc", "selected"])
            for idx in self.ranking:
                e = self.entry(idx)
                w.writerow([idx, e.spec.graph.to_text(), e.spec.targets_text(),
                            "" if e.val_ll is None else f"{e.val_ll:.17g}",
                            "" if e.val_ll is None else f"{best - e.val_ll:.17g}",
                            "" if e.mcc is None else f"{e.mcc:.17g}",
                            int(idx == self.selected)])


def rank(entries: Sequence[CandidateResult]) -> List[int]:
    """Successful candidates by validation LL (descending, ties by index), then failures."""
    ok = sorted((e for e in entries if e.ok), key=lambda e: (-e.val_ll, e.spec.index))
    bad = sorted((e for e in entries if not e.ok), key=lambda e: e.spec.index)
    return [e.spec.index for e in ok + bad]


def _fit_one(job):
    spec, arch, cfg, seed, train, val, test, out_dir = job
    res = CandidateResult(spec, seed=seed)
    try:
        builder = lambda rng: build_candidate(spec, arch, rng, envs=np.unique(train[1]), dim=train[0].shape[1])
        fr = fit_with_restarts(builder, train, val, cfg, seed=seed)
    except CrlError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        return res, None
    res.val_ll, res.restart, res.history = fr.final_val_ll, fr.restart, fr.history
    if test is not None and test[2] is not None:
        Z = fr.model.encode(test[0])
        try:
            res.mcc = mcc(Z, test[2], "pearson")
            res.mcc_spearman = mcc(Z, test[2], "spearman")
        except CrlError:
            pass  # degenerate encoding: leave MCC empty, the LL ranking still holds
    ckpt = checkpoint_dict(fr.model, {"seed": seed, "restart": fr.restart})
    if out_dir is not None:
        res.checkpoint = os.path.join(out_dir, f"candidate{spec.index}.ckpt.json")
        with open(res.checkpoint, "w") as fh:
            json.dump(ckpt, fh, indent=1, sort_keys=True)
        write_history(fr, os.path.join(out_dir, f"candidate{spec.index}.history.csv"))
    return res, ckpt


def _triple(d, with_v=False):
    if d is None:
        return None
    return (d.X, d.env, d.V if with_v else None)


def run_search(splits, candidates: Sequence[CandidateSpec], cfg: TrainConfig, arch: ArchConfig,
               seed: Optional[int] = None, workers: int = 1, out_dir=None) -> SearchReport:
    """Fit every candidate (with restarts), rank by final validation LL, select the best.

    ``splits`` is ``(train, val, test)`` datasets; MCC is computed on ``test``
    when it carries ground-truth latents.  Candidate k is fitted with seed
    ``child_seed(seed, "candidate<k>")``.
    """
    if not candidates:
        raise InputError("no candidates")
    train, val, test = splits
    seed = cfg.seed if seed is None else seed
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    jobs = [(spec, arch, cfg, child_seed(seed, f"candidate{spec.index}"), _triple(train)[:2],
             _triple(val)[:2], _triple(test, True), out_dir) for spec in candidates]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    entries = [r for r, _ in results]
    if not any(e.ok for e in entries):
        raise SearchError("every candidate failed: " + "; ".join(f"{e.spec.index}: {e.error}" for e in entries))
    ranking = rank(entries)
    return SearchReport(entries, ranking, ranking[0], {"seed": int(seed)},
                        {r.spec.index: c for r, c in results})
