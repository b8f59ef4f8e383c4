"""Maximum-likelihood fitting with Adam, cosine-annealed step size and random restarts."""
from __future__ import annotations

import csv
import ctypes
import ctypes.util
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import diff as D
from .exceptions import InputError, NumericError, TrainingError
from .rng import child_rng, child_seed

__all__ = [
    "TrainConfig",
    "PROFILES",
    "Adam",
    "cosine_lr",
    "FitResult",
    "fit",
    "fit_with_restarts",
    "write_history",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 4096
    lr_start: float = 5e-3
    lr_end: float = 1e-7
    schedule: str = "cosine"
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if not 0 < self.lr_end <= self.lr_start:
            raise InputError("need 0 < lr_end <= lr_start")
        if self.schedule != "cosine":
            raise InputError(f"unknown schedule {self.schedule!r}")
        if self.restarts < 1:
            raise InputError("restarts must be >= 1")


# Named scales. "paper" follows the published setup, "desk" is the laptop-sized variant.
PROFILES = {
    "paper": {"n_per_env": 200_000, "epochs": 200, "batch_size": 4096, "n_layers": 12},
    "desk": {"n_per_env": 20_000, "epochs": 50, "batch_size": 1024, "n_layers": 6},
}


def cosine_lr(step: int, total: int, start: float, end: float) -> float:
    """Cosine decay hitting ``start`` at step 0 and ``end`` at step ``total - 1``."""
    if total <= 1:
        return start
    return end + 0.5 * (start - end) * (1.0 + math.cos(math.pi * step / (total - 1)))


class Adam:
    def __init__(self, params: D.ParameterSet, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(t.value) for k, t in params.trainable()}
        self.v = {k: np.zeros_like(t.value) for k, t in params.trainable()}

    def step(self, grads: dict, lr: float):
        """Gradient *descent* step on the loss whose gradients are given."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, t in self.params.trainable():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            t.value = t.value - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class FitResult:
    params: dict
    history: List[dict]
    seed: int
    model: object = field(default=None, repr=False, compare=False)
    restart: int = 0

    @property
    def final_val_ll(self) -> float:
        return self.history[-1]["val_ll"]

    def history_rows(self):
        return [(h["epoch"], h["train_ll"], h["val_ll"], h["lr"]) for h in self.history]


def write_history(result: FitResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_ll", "val_ll", "lr"])
        for e, tr, va, lr in result.history_rows():
            w.writerow([e, f"{tr:.17g}", f"{va:.17g}", f"{lr:.17g}"])


_ALLOCATOR_TUNED = False


def _tune_allocator():
    """Keep large temporaries on the heap instead of fresh mmaps (glibc only).

    Each training step allocates and frees many batch-sized arrays; with the
    default dynamic mmap threshold every one of them page-faults anew.
    """
    global _ALLOCATOR_TUNED
    if _ALLOCATOR_TUNED or not sys.platform.startswith("linux"):
        return
    _ALLOCATOR_TUNED = True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        libc.mallopt(-3, 1 << 28)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 28)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass


def _as_arrays(data):
    X, env = data
    X = np.asarray(X, dtype=np.float64)
    env = np.asarray(env, dtype=np.int64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != env.size:
        raise InputError("expected (X, env) with one label per row")
    if X.shape[0] == 0:
        raise InputError("datasets must be non-empty")
    return X, env


def fit(model, train, val, cfg: TrainConfig, seed: Optional[int] = None) -> FitResult:
    """Minimize the mean negative log-likelihood over shuffled pooled mini-batches.

    ``train`` and ``val`` are ``(X, env)`` pairs.  Shuffling uses the stream
    ``(seed, "shuffle")``; ``seed`` defaults to ``cfg.seed``.
    """
    _tune_allocator()
    Xtr, etr = _as_arrays(train)
    Xva, eva = _as_arrays(val)
    if Xtr.shape[1] != model.dim or Xva.shape[1] != model.dim:
        raise InputError(f"data dimension does not match the model ({model.dim})")
    model.row_targets(etr)
    model.row_targets(eva)
    seed = cfg.seed if seed is None else seed
    rng = child_rng(seed, "shuffle")
    N = Xtr.shape[0]
    B = min(cfg.batch_size, N)
    per_epoch = math.ceil(N / B)
    total = cfg.epochs * per_epoch
    opt = Adam(model.params)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(N)
        ll_sum = 0.0
        for b in range(per_epoch):
            idx = order[b * B:(b + 1) * B]
            lr = cosine_lr(step, total, cfg.lr_start, cfg.lr_end)
            try:
                ll = model.log_likelihood(Xtr[idx], etr[idx])
                loss = D.mul(D.mean(ll), -1.0)
                grads = D.evaluate_and_backward(loss, model.params)
            except NumericError as exc:
                raise TrainingError(f"non-finite value at epoch {epoch}, batch {b}: {exc}") from exc
            if not math.isfinite(float(loss.value)):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(grads, lr)
            ll_sum += float(np.sum(ll.value))
            step += 1
        try:
            val_ll = model.mean_log_likelihood(Xva, eva)
        except NumericError as exc:
            raise TrainingError(f"non-finite validation value at epoch {epoch}: {exc}") from exc
        history.append({"epoch": epoch, "train_ll": ll_sum / N, "val_ll": val_ll, "lr": lr})
    return FitResult(model.params.values(), history, int(seed), model)


def restart_seeds(seed: int, k: int) -> List[int]:
    return [child_seed(seed, f"restart{r}") for r in range(k)]


def fit_with_restarts(builder: Callable, train, val, cfg: TrainConfig, k: Optional[int] = None,
                      seed: Optional[int] = None) -> FitResult:
    """``k`` independent fits; keep the one with the highest final validation LL.

    ``builder(rng)`` must return a fresh model.  With ``k == 1`` the single
    fit uses ``seed`` itself, so it coincides with :func:`fit`.
    """
    k = cfg.restarts if k is None else k
    if k < 1:
        raise InputError("k must be >= 1")
    seed = cfg.seed if seed is None else seed
    seeds = [seed] if k == 1 else restart_seeds(seed, k)
    best, errors = None, []
    for r, s in enumerate(seeds):
        try:
            model = builder(child_rng(s, "init"))
            res = fit(model, train, val, cfg, seed=s)
        except (TrainingError, NumericError) as exc:
            errors.append(f"restart {r} (seed {s}): {exc}")
            continue
        res.restart = r
        if best is None or res.final_val_ll > best.final_val_ll:
            best = res
    if best is None:
        raise TrainingError("all restarts failed: " + "; ".join(errors))
    return best
