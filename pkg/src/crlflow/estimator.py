"""scikit-learn style wrappers around candidate fitting and search."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import MultiEnvDataset
from .exceptions import InputError
from .graph import parse_dag
from .model import ArchConfig, CandidateSpec, build_candidate, model_from_checkpoint
from .rng import child_rng
from .search import enumerate_candidates, run_search
from .train import TrainConfig, fit_with_restarts

__all__ = ["CausalFlow", "CandidateSearch"]


def _check_env(env, n_rows):
    env = np.asarray(env)
    if env.ndim != 1 or env.shape[0] != n_rows:
        raise InputError(f"env must be a 1-D array of length {n_rows}")
    if not np.issubdtype(env.dtype, np.integer):
        if not np.all(np.equal(np.mod(env, 1), 0)):
            raise InputError("env labels must be integers")
        env = env.astype(np.int64)
    return env


def _holdout(ds: MultiEnvDataset, fraction, rng):
    if not 0.0 < fraction < 1.0:
        raise InputError("validation_fraction must be in (0, 1)")
    order = rng.permutation(len(ds))
    n_val = max(1, int(round(fraction * len(ds))))
    if n_val >= len(ds):
        raise InputError("too few rows for a validation holdout")
    return ds.subset(order[n_val:]), ds.subset(order[:n_val])


class _FlowParams:
    def _arch(self):
        return ArchConfig(n_layers=self.n_layers, hidden=self.hidden, bins=self.bins, bound=self.bound)

    def _train_cfg(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr_start=self.lr_start,
                           lr_end=self.lr_end, restarts=self.restarts, seed=self.random_state)


class CausalFlow(_FlowParams, TransformerMixin, BaseEstimator):
    """One candidate model: flow encoder plus a graph/target-aware latent base.

    ``targets`` maps environment labels to intervened latent nodes (``None`` for
    observational); ``graph`` uses the ``"n=2; edges=1->2"`` text form.
    ``transform`` returns the encoded latents, ``score`` the mean log-likelihood.
    """

    def __init__(self, graph="n=2; edges=1->2", targets=None, base_family="parametric",
                 n_layers=6, hidden=128, bins=8, bound=10.0, epochs=50, batch_size=1024,
                 lr_start=5e-3, lr_end=1e-7, restarts=3, validation_fraction=0.15, random_state=0):
        self.graph = graph
        self.targets = targets
        self.base_family = base_family
        self.n_layers = n_layers
        self.hidden = hidden
        self.bins = bins
        self.bound = bound
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.restarts = restarts
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _spec(self, labels):
        g = parse_dag(self.graph)
        targets = self.targets
        if targets is None:
            targets = {int(e): (int(e) if 1 <= e <= g.n else None) for e in labels}
        return CandidateSpec(g, tuple(dict(targets).items()), self.base_family)

    def fit(self, X, env):
        X = check_array(X, dtype=np.float64)
        env = _check_env(env, X.shape[0])
        spec = self._spec(np.unique(env))
        tr, va = _holdout(MultiEnvDataset(env, X), self.validation_fraction,
                          child_rng(self.random_state, "holdout"))
        train, val = (tr.X, tr.env), (va.X, va.env)
        arch = self._arch()
        builder = lambda rng: build_candidate(spec, arch, rng, envs=np.unique(env), dim=X.shape[1])
        result = fit_with_restarts(builder, train, val, self._train_cfg(), seed=self.random_state)
        self.model_ = result.model
        self.spec_ = spec
        self.history_ = result.history
        self.val_ll_ = result.final_val_ll
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.model_.encode(X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        return self.model_.decode(check_array(Z, dtype=np.float64))

    def score_samples(self, X, env):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        env = _check_env(env, X.shape[0])
        return self.model_.log_likelihood(X, env).value

    def score(self, X, env):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return self.model_.mean_log_likelihood(X, _check_env(env, X.shape[0]))


class CandidateSearch(_FlowParams, BaseEstimator):
    """Fit every enumerated candidate and keep the best by validation log-likelihood."""

    def __init__(self, mode="full-bivariate", observational=None, reference_graph=None,
                 n_layers=6, hidden=128, bins=8, bound=10.0, epochs=50, batch_size=1024,
                 lr_start=5e-3, lr_end=1e-7, restarts=3, validation_fraction=0.15, random_state=0):
        self.mode = mode
        self.observational = observational
        self.reference_graph = reference_graph
        self.n_layers = n_layers
        self.hidden = hidden
        self.bins = bins
        self.bound = bound
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.restarts = restarts
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, env, latents=None):
        X = check_array(X, dtype=np.float64)
        env = _check_env(env, X.shape[0])
        ref = None if self.reference_graph is None else parse_dag(self.reference_graph)
        specs = enumerate_candidates(X.shape[1], self.mode, self.observational, ref)
        V = None if latents is None else check_array(latents, dtype=np.float64)
        ds = MultiEnvDataset(env, X, V)
        tr, va = _holdout(ds, self.validation_fraction, child_rng(self.random_state, "holdout"))
        test = None if V is None else ds
        report = run_search((tr, va, test), specs, self._train_cfg(), self._arch(),
                            seed=self.random_state)
        self.report_ = report
        self.candidates_ = specs
        self.ranking_ = report.ranking
        self.selected_ = report.selected
        self.val_lls_ = report.val_lls()
        self.best_model_ = model_from_checkpoint(report.checkpoints[report.selected])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "best_model_")
        return self.best_model_.encode(check_array(X, dtype=np.float64))

    def score(self, X, env):
        check_is_fitted(self, "best_model_")
        X = check_array(X, dtype=np.float64)
        return self.best_model_.mean_log_likelihood(X, _check_env(env, X.shape[0]))
