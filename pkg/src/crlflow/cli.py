"""``crlflow`` command line: generate, search, eval, check, report."""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import os
import statistics
import sys
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional

from . import data as data_mod
from .checks import CheckConfig, run_all
from .evaluation import assemble_report, write_long_csv
from .exceptions import (
    ConfigError,
    CrlError,
    FormatError,
    InputError,
    NumericError,
    SearchError,
    TrainingError,
)
from .experiments import KINDS, ExperimentConfig, candidates_for, experiment_config, make_dataset, run_seed
from .model import ArchConfig
from .search import SearchReport, well_specified_index
from .train import PROFILES, TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
COMMANDS = ("generate", "search", "eval", "check", "report")

_EXPERIMENT_KEYS = ("kind", "n", "d", "n_per_env", "env_preset", "observational", "graph", "scm_kind", "beta")


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    seeds: tuple = tuple(range(10))
    check: CheckConfig = field(default_factory=CheckConfig)
    check_seed: int = 0
    out: str = "runs"
    profile: str = "desk"

    @property
    def arch(self) -> ArchConfig:
        return self.experiment.arch

    @property
    def train(self) -> TrainConfig:
        return self.experiment.train


# --- config <-> text ------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _parse(text: str, like, path: str):
    try:
        if isinstance(like, bool):
            t = text.strip().lower()
            if t in ("true", "yes", "1", "on"):
                return True
            if t in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            items = [x.strip() for x in text.split(",") if x.strip()]
            if like and isinstance(like[0], (int, float)) and not isinstance(like[0], bool):
                return tuple(type(like[0])(x) for x in items)
            return tuple(items)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def to_sections(rc: RunConfig) -> dict:
    exp = rc.experiment
    return {
        "experiment": {**{k: getattr(exp, k) for k in _EXPERIMENT_KEYS}, "seeds": tuple(rc.seeds)},
        "architecture": dataclasses.asdict(exp.arch),
        "train": {k: v for k, v in dataclasses.asdict(exp.train).items() if k != "seed"},
        "check": {**dataclasses.asdict(rc.check), "seed": rc.check_seed},
        "output": {"dir": rc.out},
    }


def to_ini(rc: RunConfig) -> str:
    cp = configparser.ConfigParser()
    for sec, kv in to_sections(rc).items():
        cp[sec] = {k: _fmt(v) for k, v in kv.items()}
    buf = io.StringIO()
    buf.write(f"# profile: {rc.profile}\n")
    cp.write(buf)
    return buf.getvalue()


def _apply(obj, values: dict, section: str):
    changes = {}
    names = {f.name for f in fields(obj)}
    for k, text in values.items():
        if k not in names:
            raise ConfigError(f"{section}.{k}: unknown key")
        changes[k] = _parse(text, getattr(obj, k), f"{section}.{k}")
    try:
        return replace(obj, **changes)
    except (InputError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def resolve_config(profile="desk", path=None, kind=None, seed=None, out=None) -> RunConfig:
    """Profile defaults, then the config file, then command-line flags."""
    if profile not in PROFILES:
        raise ConfigError(f"--profile: unknown profile {profile!r}")
    cp = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    known = {"experiment", "architecture", "train", "check", "output"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{sec}: unknown section")
    sec = {s: dict(cp[s]) for s in cp.sections()}
    exp_vals = dict(sec.get("experiment", {}))
    kind = kind or exp_vals.pop("kind", None) or KINDS[0]
    exp_vals.pop("kind", None)
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind: unknown kind {kind!r}")
    exp = experiment_config(kind, profile)
    seeds_text = exp_vals.pop("seeds", None)
    exp_fields = {k: v for k, v in exp_vals.items()}
    try:
        arch = _apply(exp.arch, sec.get("architecture", {}), "architecture")
        train = _apply(exp.train, sec.get("train", {}), "train")
        exp = _apply(replace(exp, arch=arch, train=train), exp_fields, "experiment")
    except InputError as exc:
        raise ConfigError(str(exc)) from None
    seeds = tuple(range(10)) if seeds_text is None else _parse(seeds_text, (0,), "experiment.seeds")
    if seed is not None:
        seeds = (int(seed),)
    if not seeds:
        raise ConfigError("experiment.seeds: seed list must be non-empty")
    check_vals = dict(sec.get("check", {}))
    check_seed = int(_parse(check_vals.pop("seed", "0"), 0, "check.seed"))
    if seed is not None:
        check_seed = int(seed)
    check = _apply(CheckConfig(), check_vals, "check")
    out_dir = out or sec.get("output", {}).get("dir", "runs")
    return RunConfig(exp, tuple(int(s) for s in seeds), check, check_seed, out_dir, profile)


# --- artifacts --------------------------------------------------------------------

def _config_block(rc: RunConfig, seed=None) -> dict:
    sec = to_sections(rc)
    block = {s: {k: list(v) if isinstance(v, tuple) else v for k, v in kv.items()} for s, kv in sec.items()}
    return {"profile": rc.profile, "sections": block, "master_seed": seed}


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)


def _seed_dir(rc: RunConfig, seed: int) -> str:
    d = os.path.join(rc.out, f"seed{seed}")
    os.makedirs(d, exist_ok=True)
    return d


def _load_or_make(rc: RunConfig, seed: int):
    path = os.path.join(rc.out, f"seed{seed}", "dataset.csv")
    if os.path.exists(path):
        ds = data_mod.read(path)
        if ds.metadata.get("config") == _config_block(rc, seed):
            return ds
    return make_dataset(rc.experiment, seed)


def cmd_generate(rc: RunConfig) -> int:
    for seed in rc.seeds:
        ds = make_dataset(rc.experiment, seed)
        ds.metadata["config"] = _config_block(rc, seed)
        data_mod.write(ds, os.path.join(_seed_dir(rc, seed), "dataset.csv"))
        print(f"seed {seed}: {len(ds)} rows, environments {ds.labels}")
    return EXIT_OK


def cmd_search(rc: RunConfig, workers=1) -> int:
    for seed in rc.seeds:
        d = _seed_dir(rc, seed)
        ds = _load_or_make(rc, seed)
        outcome = run_seed(rc.experiment, seed, workers=workers, out_dir=os.path.join(d, "candidates"),
                           dataset=ds)
        rep = outcome.report
        rep.metadata["config"] = _config_block(rc, seed)
        rep.metadata["well_specified"] = outcome.well_specified
        rep.save(os.path.join(d, "search.json"))
        rep.write_csv(os.path.join(d, "search.csv"))
        print(f"seed {seed}: selected {rep.selected} (well-specified {outcome.well_specified}); "
              f"ranking {rep.ranking}")
    return EXIT_OK


def _load_search(rc: RunConfig, seed: int) -> SearchReport:
    path = os.path.join(rc.out, f"seed{seed}", "search.json")
    if not os.path.exists(path):
        raise InputError(f"{path}: no search report; run `search` first")
    try:
        return SearchReport.load(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def cmd_eval(rc: RunConfig) -> int:
    rows = []
    for seed in rc.seeds:
        rep = _load_search(rc, seed)
        ref = rep.metadata.get("well_specified")
        ev = assemble_report(rep, reference=ref, metadata={"config": _config_block(rc, seed)})
        d = _seed_dir(rc, seed)
        ev.save(os.path.join(d, "eval.json"))
        ev.write_candidate_csv(os.path.join(d, "eval.csv"))
        for c in ev.candidates:
            for metric in ("val_ll", "delta_ll", "mcc_pearson", "mcc_spearman"):
                if c.get(metric) is not None:
                    rows.append((seed, c["candidate"], metric, c[metric]))
    write_long_csv(rows, os.path.join(rc.out, "eval_long.csv"))
    return EXIT_OK


def cmd_check(rc: RunConfig) -> int:
    results = run_all(rc.check, rc.check_seed)
    _dump({"config": _config_block(rc, rc.check_seed), "suites": [r.to_dict() for r in results]},
          os.path.join(rc.out, "check.json"))
    with open(os.path.join(rc.out, "check.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["suite", "passed", "summary"])
        for r in results:
            w.writerow([r.name, int(r.passed), json.dumps(r.summary, sort_keys=True)])
    for r in results:
        print(f"{r.name}: {'PASS' if r.passed else 'FAIL'} {json.dumps(r.summary, sort_keys=True)}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_report(rc: RunConfig) -> int:
    rows, per_seed = [], []
    for seed in rc.seeds:
        rep = _load_search(rc, seed)
        ws = rep.metadata.get("well_specified")
        best = rep.entry(rep.selected).val_ll
        for e in rep.entries:
            k = e.spec.index
            if e.val_ll is not None:
                rows.append((seed, k, "val_ll", e.val_ll))
                rows.append((seed, k, "delta_ll_vs_best", best - e.val_ll))
                if ws is not None and rep.entry(ws).val_ll is not None:
                    rows.append((seed, k, "delta_ll_vs_well_specified", rep.entry(ws).val_ll - e.val_ll))
            if e.mcc is not None:
                rows.append((seed, k, "mcc", e.mcc))
            rows.append((seed, k, "selected", float(k == rep.selected)))
        per_seed.append({"seed": seed, "selected": rep.selected, "well_specified": ws,
                         "correct": ws is not None and rep.selected_equivalent_to(ws),
                         "selected_mcc": rep.entry(rep.selected).mcc,
                         "well_specified_mcc": None if ws is None else rep.entry(ws).mcc})
    write_long_csv(rows, os.path.join(rc.out, "report_long.csv"))
    mccs = [p["well_specified_mcc"] for p in per_seed if p["well_specified_mcc"] is not None]
    summary = {"config": _config_block(rc), "seeds": per_seed,
               "n_correct": sum(p["correct"] for p in per_seed), "n_seeds": len(per_seed),
               "median_well_specified_mcc": statistics.median(mccs) if mccs else None}
    _dump(summary, os.path.join(rc.out, "report_summary.json"))
    print(f"correct selection in {summary['n_correct']}/{summary['n_seeds']} seeds")
    return EXIT_OK


# --- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crlflow", description="Causal representation learning from "
                                "unknown interventions with flow models.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="run a single seed (overrides the seed list)")
    p.add_argument("--workers", type=int, default=1, help="concurrent candidate fits")
    p.add_argument("--profile", default="desk", choices=sorted(PROFILES))
    p.add_argument("--kind", choices=KINDS, help="experiment kind (overrides the config)")
    p.add_argument("--print-defaults", action="store_true", help="print the resolved config and exit")
    return p


def _marker(rc_out: str, command: str) -> str:
    return os.path.join(rc_out, f"{command}.failed")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = resolve_config(args.profile, args.config, args.kind, args.seed, args.out)
        if args.workers < 1:
            raise ConfigError("--workers: must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_defaults:
        sys.stdout.write(to_ini(rc))
        return EXIT_OK
    if args.command is None:
        print("a command is required", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(rc.out, exist_ok=True)
    marker = _marker(rc.out, args.command)
    if os.path.exists(marker):
        os.remove(marker)
    with open(os.path.join(rc.out, f"{args.command}.config.ini"), "w") as fh:
        fh.write(to_ini(rc))
    handlers = {"generate": cmd_generate, "search": lambda r: cmd_search(r, args.workers),
                "eval": cmd_eval, "check": cmd_check, "report": cmd_report}
    try:
        code = handlers[args.command](rc)
    except (ConfigError, InputError, FormatError) as exc:
        code, msg = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except (NumericError, TrainingError, SearchError) as exc:
        code, msg = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except CrlError as exc:
        code, msg = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    else:
        msg = "check failed" if code == EXIT_CHECK else None
    if code != EXIT_OK:
        with open(marker, "w") as fh:
            fh.write((msg or "failed") + "\n")
        if msg and code != EXIT_CHECK:
            print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
