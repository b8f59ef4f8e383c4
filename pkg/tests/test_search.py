import csv

import numpy as np
import pytest

from crlflow.data import bivariate_envs, generate, split
from crlflow.exceptions import InputError, SearchError
from crlflow.graph import Dag
from crlflow.mixing import sample_mixing
from crlflow.model import ArchConfig, CandidateSpec
from crlflow.rng import child_rng
from crlflow.scm import bivariate_linear_scm
from crlflow.search import (
    CandidateResult,
    SearchReport,
    enumerate_candidates,
    rank,
    run_search,
    well_specified_index,
)
from crlflow.train import TrainConfig

TINY = ArchConfig(n_layers=1, hidden=4, bins=3)


def test_fixed_order_counts():
    assert len(enumerate_candidates(3, "fixed-order-targets")) == 6
    assert len(enumerate_candidates(4, "fixed-order-targets")) == 24
    specs = enumerate_candidates(3, "fixed-order-targets", observational=True)
    assert all(dict(s.targets)[0] is None for s in specs)
    assert all(s.base_family == "reduced-form" for s in specs)


def test_first_fixed_order_candidate_is_aligned():
    specs = enumerate_candidates(3, "fixed-order-targets")
    assert specs[0].targets == ((1, 1), (2, 2), (3, 3))
    assert well_specified_index(specs) == 0


def test_equivalence_groups_follow_graph_automorphisms():
    fork = Dag.from_edges(3, [(1, 2), (1, 3)])
    groups = [s.equivalence_group for s in enumerate_candidates(3, "fixed-order-targets", reference_graph=fork)]
    # swapping the two children of the fork leaves it unchanged
    assert groups[0] == groups[1] == 0
    assert len(set(groups)) == 3
    empty = Dag(3, frozenset())
    assert {s.equivalence_group for s in enumerate_candidates(3, "fixed-order-targets",
                                                             reference_graph=empty)} == {0}
    full = Dag.from_edges(3, [(1, 2), (1, 3), (2, 3)])
    assert len({s.equivalence_group for s in enumerate_candidates(3, "fixed-order-targets",
                                                                 reference_graph=full)}) == 6


def test_enumeration_rejects_bad_input():
    with pytest.raises(InputError):
        enumerate_candidates(3, "full-bivariate")
    with pytest.raises(InputError):
        enumerate_candidates(5, "fixed-order-targets")
    with pytest.raises(InputError):
        enumerate_candidates(2, "everything")


def test_well_specified_bivariate():
    specs = enumerate_candidates(2, "full-bivariate")
    edge = Dag.from_edges(2, [(1, 2)])
    idx = well_specified_index(specs, edge)
    assert specs[idx].graph == edge and specs[idx].targets == ((0, None), (1, 1), (2, 2))


def _result(index, val_ll, error=None):
    spec = CandidateSpec(Dag(2, frozenset()), ((1, 1), (2, 2)), index=index)
    return CandidateResult(spec, val_ll=val_ll, error=error)


def test_rank_ties_and_failures():
    entries = [_result(0, 1.0), _result(1, 2.0), _result(2, None, "TrainingError: x"), _result(3, 2.0),
               _result(4, -1.0)]
    assert rank(entries) == [1, 3, 0, 4, 2]


def test_equivalence_helper():
    specs = enumerate_candidates(3, "fixed-order-targets", reference_graph=Dag.from_edges(3, [(1, 2), (1, 3)]))
    entries = [CandidateResult(s, val_ll=float(-s.index)) for s in specs]
    rep = SearchReport(entries, rank(entries), 1)
    assert rep.selected_equivalent_to(0)
    assert not rep.selected_equivalent_to(2)


@pytest.fixture(scope="module")
def searched(tmp_path_factory):
    rng = child_rng(0, "search-tests")
    d = generate(bivariate_linear_scm(2.5), sample_mixing(2, rng), bivariate_envs(rng), 300, seed=1)
    splits = split(d, rng=np.random.default_rng(2))
    out = tmp_path_factory.mktemp("search")
    cfg = TrainConfig(epochs=1, batch_size=256, restarts=1)
    return run_search(splits, enumerate_candidates(2, "full-bivariate"), cfg, TINY, seed=3, out_dir=out), splits, out


def test_search_selects_highest_likelihood(searched):
    rep, _, _ = searched
    lls = rep.val_lls()
    assert sorted(lls) == [0, 1, 2, 3]
    assert rep.selected == rep.ranking[0] == max(lls, key=lambda k: (lls[k], -k))
    assert all(0.0 <= e.mcc <= 1.0 for e in rep.entries)


def test_search_artifacts(searched, tmp_path):
    rep, _, out = searched
    for i in range(4):
        assert (out / f"candidate{i}.ckpt.json").exists()
        assert (out / f"candidate{i}.history.csv").exists()
    rep.write_csv(tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 4
    assert [int(r["candidate"]) for r in rows] == rep.ranking
    assert float(rows[0]["delta_ll_vs_best"]) == 0.0
    assert sum(int(r["selected"]) for r in rows) == 1


def test_report_round_trip(searched, tmp_path):
    rep, _, _ = searched
    rep.save(tmp_path / "r.json")
    back = SearchReport.load(tmp_path / "r.json")
    assert back == rep


def test_search_is_deterministic(searched):
    rep, splits, _ = searched
    cfg = TrainConfig(epochs=1, batch_size=256, restarts=1)
    again = run_search(splits, enumerate_candidates(2, "full-bivariate")[:2], cfg, TINY, seed=3)
    for e in again.entries:
        assert e.val_ll == rep.entry(e.spec.index).val_ll


def test_all_failing_candidates_raise(searched):
    _, splits, _ = searched
    wrong = [CandidateSpec(Dag(2, frozenset()), ((1, 1), (2, 2)))]  # no target for environment 0
    with pytest.raises(SearchError):
        run_search(splits, wrong, TrainConfig(epochs=1, restarts=1), TINY, seed=0)
