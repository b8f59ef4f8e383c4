"""Desk-scale identifiability experiments with an on-disk cache.

Each (experiment, seed) outcome is stored as JSON under ``tests/.experiment_cache``,
keyed by a hash of the resolved experiment config and the source of every module
the pipeline touches, so stale results are never reused.  Run as a script to fill
the cache ahead of the test session::

    python tests/experiment_cache.py bivariate 0 1 2
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from crlflow.experiments import experiment_config, run_seed

CACHE = Path(__file__).resolve().parent / ".experiment_cache"
SEEDS = tuple(range(10))
KINDS = {"bivariate": "bivariate-parametric", "trivariate": "trivariate-reduced-form"}
PIPELINE_MODULES = ("diff", "flows", "graph", "mixing", "rng", "scm", "data", "model", "train",
                    "search", "evaluation", "experiments")


def config_for(name):
    cfg = experiment_config(KINDS[name], "desk")
    return dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, restarts=3))


def cache_key(name) -> str:
    import crlflow

    h = hashlib.sha256()
    h.update(json.dumps(dataclasses.asdict(config_for(name)), sort_keys=True).encode())
    src = Path(crlflow.__file__).parent
    for mod in PIPELINE_MODULES:
        h.update((src / f"{mod}.py").read_bytes())
    return h.hexdigest()[:16]


def _path(name, seed) -> Path:
    return CACHE / f"{name}-{cache_key(name)}" / f"seed{seed}.json"


def summarize(outcome) -> dict:
    rep = outcome.report
    return {
        "seed": outcome.seed,
        "selected": rep.selected,
        "well_specified": outcome.well_specified,
        "correct": outcome.correct,
        "ranking": rep.ranking,
        "candidates": [{"index": e.spec.index, "graph": e.spec.graph.to_text(),
                        "targets": e.spec.targets_text(), "group": e.spec.equivalence_group,
                        "val_ll": e.val_ll, "mcc": e.mcc, "mcc_spearman": e.mcc_spearman,
                        "error": e.error} for e in rep.entries],
    }


def load(name, seed):
    p = _path(name, seed)
    if p.exists():
        return json.loads(p.read_text())
    return None


def run(name, seed) -> dict:
    got = load(name, seed)
    if got is not None:
        return got
    t = time.time()
    out = summarize(run_seed(config_for(name), seed))
    out["seconds"] = time.time() - t
    p = _path(name, seed)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(".tmp")
    tmp.write_text(json.dumps(out, indent=1, sort_keys=True))
    os.replace(tmp, p)
    return out


def results(name, seeds=SEEDS):
    return [run(name, s) for s in seeds]


if __name__ == "__main__":
    name = sys.argv[1]
    for s in [int(a) for a in sys.argv[2:]] or SEEDS:
        r = run(name, s)
        print(name, s, "selected", r["selected"], "correct", r["correct"],
              "seconds", round(r.get("seconds", 0.0)), flush=True)
