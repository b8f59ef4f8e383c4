import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from crlflow.evaluation import (
    EvalReport,
    assemble_report,
    ci_invariance_check,
    ci_verdicts,
    delta_val_ll,
    grid_inverse_cdf_sampler,
    influence_invariance_check,
    mcc,
    minimality_check,
    rank_partial_corr_test,
    write_long_csv,
)
from crlflow.exceptions import EvaluationError, InputError
from crlflow.graph import Dag, Permutation
from crlflow.scm import (
    InterventionSpec,
    MonotoneMap,
    bivariate_linear_scm,
    sample_latents,
    sample_random_scm,
)
from crlflow.search import CandidateResult, SearchReport, enumerate_candidates, rank


def brute_force_mcc(Z, V):
    Zs = (Z - Z.mean(0)) / Z.std(0)
    Vs = (V - V.mean(0)) / V.std(0)
    C = np.abs(Zs.T @ Vs / Z.shape[0])
    n = C.shape[0]
    return max(np.mean([C[k, p[k]] for k in range(n)]) for p in itertools.permutations(range(n)))


def test_mcc_identity_and_permuted_scaling():
    V = np.random.default_rng(0).normal(size=(5000, 3))
    assert mcc(V, V) == pytest.approx(1.0, abs=1e-12)
    Z = V[:, [2, 0, 1]] * np.array([-3.0, 0.5, 7.0]) + 4.0
    assert mcc(Z, V) == pytest.approx(1.0, abs=1e-12)


def test_mcc_independent_columns_small():
    rng = np.random.default_rng(1)
    N = 20_000
    val = mcc(rng.normal(size=(N, 2)), rng.normal(size=(N, 2)))
    assert val < 5 / math.sqrt(N)


def test_spearman_ignores_monotone_warping():
    V = np.random.default_rng(2).normal(size=(3000, 2))
    Z = np.column_stack([np.exp(2 * V[:, 1]), V[:, 0] ** 3])
    assert mcc(Z, V, "spearman") == pytest.approx(1.0, abs=1e-12)
    assert mcc(Z, V, "pearson") < 0.95


def test_mcc_constant_column():
    V = np.random.default_rng(3).normal(size=(50, 2))
    Z = V.copy()
    Z[:, 1] = 1.0
    with pytest.raises(EvaluationError, match="column 2"):
        mcc(Z, V)
    with pytest.raises(InputError):
        mcc(V[:, :1], V)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4))
def test_mcc_matches_brute_force_matching(seed, n):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(200, n))
    Z = V @ rng.normal(size=(n, n)) + rng.normal(size=(200, n))
    assert mcc(Z, V) == pytest.approx(brute_force_mcc(Z, V), abs=1e-12)


def test_delta_val_ll():
    assert delta_val_ll({0: 1.0, 1: 0.25, 2: 1.5}, 0) == {0: 0.0, 1: 0.75, 2: -0.5}
    with pytest.raises(InputError):
        delta_val_ll({0: 1.0}, 3)


def test_influence_invariance_holds_for_monotone_maps():
    s = bivariate_linear_scm(2.0)
    maps = [MonotoneMap.tanh_bump(0.5), MonotoneMap.cubic(0.2)]
    rec = influence_invariance_check(s, 1, 2, Permutation.identity(2), maps, 40_000,
                                     np.random.default_rng(4))
    assert rec.passed
    assert rec.lhs == pytest.approx(0.5 * math.log(5.0), abs=4 * rec.lhs_se)


def test_influence_check_detects_injected_bias():
    s = bivariate_linear_scm(2.0)
    maps = [MonotoneMap.affine(2.0), MonotoneMap.identity()]
    rec = influence_invariance_check(s, 1, 2, Permutation.identity(2), maps, 40_000,
                                     np.random.default_rng(5), bias=0.5)
    assert not rec.passed


def test_influence_check_validates_permutation():
    s = sample_random_scm("linear-gaussian", 3, np.random.default_rng(6), dag=Dag.from_edges(3, [(1, 2)]))
    maps = [MonotoneMap.identity()] * 3
    with pytest.raises(InputError):
        influence_invariance_check(s, 1, 2, Permutation((2, 1, 3)), maps, 10, 0)
    with pytest.raises(InputError):
        influence_invariance_check(s, 1, 3, Permutation.identity(3), maps, 10, 0)


def test_rank_partial_correlation_oracle():
    # chain 1 -> 2 -> 3: dependent marginally, independent given the middle node
    s = sample_random_scm("linear-gaussian", 3, np.random.default_rng(7), dag=Dag.from_edges(3, [(1, 2), (2, 3)]))
    V = sample_latents(s, 20_000, np.random.default_rng(8)).values
    assert rank_partial_corr_test(V, 1, 3)[1] < 1e-6
    assert rank_partial_corr_test(V, 1, 3, [2])[1] > 1e-3
    # unconditional statistic is the Spearman correlation up to the normal-scores transform
    r, _ = rank_partial_corr_test(V, 1, 2)
    assert r == pytest.approx(stats.spearmanr(V[:, 0], V[:, 1])[0], abs=0.01)


def test_ci_invariance_under_relabelling():
    s = sample_random_scm("linear-gaussian", 3, np.random.default_rng(9), dag=Dag.from_edges(3, [(1, 3), (2, 3)]))
    V = sample_latents(s, 20_000, np.random.default_rng(10)).values
    maps = [MonotoneMap.exp_map(0.4, 1.0), MonotoneMap.cubic(0.1), MonotoneMap.affine(-2.0)]
    agree, before, after = ci_invariance_check(V, Permutation((2, 1, 3)), maps)
    assert agree
    assert before[(1, 2, ())] and not before[(1, 2, (3,))]
    assert len(ci_verdicts(V)) == 6


def test_grid_sampler_matches_normal():
    draws = grid_inverse_cdf_sampler(stats.norm(1.0, 2.0).pdf, np.linspace(-15, 17, 20001), 20_000,
                                     np.random.default_rng(11))
    assert stats.kstest(draws, stats.norm(1.0, 2.0).cdf).pvalue > 1e-3
    with pytest.raises(InputError):
        grid_inverse_cdf_sampler(stats.norm.pdf, np.array([0.0, 1.0]), 5, 0)
    with pytest.raises(EvaluationError):
        grid_inverse_cdf_sampler(lambda t: np.zeros_like(t), np.linspace(0, 1, 5), 5, 0)


def test_minimality_construction():
    s = bivariate_linear_scm(1.5)
    maps = [MonotoneMap.tanh_bump(0.4), MonotoneMap.affine(-1.5, 0.5)]
    rec = minimality_check(s, Permutation.identity(2), maps, InterventionSpec(1, 2.0, 1.0), 20_000,
                           np.random.default_rng(12))
    assert rec.passed
    assert rec.mismatch_rejected


def _search_report():
    specs = enumerate_candidates(2, "full-bivariate")
    entries = [CandidateResult(s, val_ll=v, mcc=m, mcc_spearman=m)
               for s, v, m in zip(specs, [1.0, 1.5, 0.5, 0.25], [0.9, 0.8, 0.7, 0.6])]
    return SearchReport(entries, rank(entries), 1)


def test_report_round_trip(tmp_path):
    rep = assemble_report(_search_report(), {"genericity": [{"witness": "log", "gap": np.float64(0.5)}]},
                          reference=1, metadata={"seed": np.int64(3)})
    rows = {r["candidate"]: r for r in rep.candidates}
    assert rows[0]["delta_ll"] == 0.5 and rows[1]["delta_ll"] == 0.0
    rep.save(tmp_path / "e.json")
    back = EvalReport.load(tmp_path / "e.json")
    assert back.candidates == rep.candidates
    assert back.metadata["seed"] == 3
    rep.write_candidate_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[0].startswith("candidate,graph")


def test_long_csv(tmp_path):
    write_long_csv([(0, 1, "val_ll", 0.1), (0, 1, "mcc", None)], tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text() == "seed,candidate,metric,value\n0,1,val_ll,0.10000000000000001\n0,1,mcc,\n"
