import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlflow.exceptions import InputError
from crlflow.graph import (
    Dag,
    Permutation,
    d_separated,
    enumerate_order_consistent_dags,
    is_crl_graph_isomorphism,
    parse_dag,
    post_intervention_graph,
)


def descendants(g, v):
    out, stack = set(), [v]
    while stack:
        for c in g.children(stack.pop()):
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def simple_paths(g, i, j):
    """All undirected simple paths from i to j in the skeleton."""
    nbrs = {v: set(g.parents(v)) | set(g.children(v)) for v in g.vertices}
    out = []

    def walk(path):
        v = path[-1]
        if v == j:
            out.append(list(path))
            return
        for w in nbrs[v]:
            if w not in path:
                walk(path + [w])

    walk([i])
    return out


def path_blocked(g, path, S):
    for a, b, c in zip(path, path[1:], path[2:]):
        collider = g.has_edge(a, b) and g.has_edge(c, b)
        if collider:
            if b not in S and not (descendants(g, b) & S):
                return True
        elif b in S:
            return True
    return False


def dsep_oracle(g, i, j, S):
    S = set(S)
    return all(path_blocked(g, p, S) for p in simple_paths(g, i, j))


def test_enumeration_small_cases():
    assert enumerate_order_consistent_dags(1) == [Dag(1, frozenset())]
    two = enumerate_order_consistent_dags(2)
    assert [sorted(g.edges) for g in two] == [[], [(1, 2)]]
    assert len(enumerate_order_consistent_dags(3)) == 8


@pytest.mark.parametrize("n", range(0, 6))
def test_enumeration_count_and_distinct(n):
    dags = enumerate_order_consistent_dags(n)
    assert len(dags) == 2 ** (n * (n - 1) // 2)
    assert len(set(dags)) == len(dags)
    assert all(a < b for g in dags for a, b in g.edges)


def test_enumeration_binary_counting_order():
    three = enumerate_order_consistent_dags(3)
    assert sorted(three[1].edges) == [(1, 2)]
    assert sorted(three[2].edges) == [(1, 3)]
    assert sorted(three[4].edges) == [(2, 3)]
    assert sorted(three[7].edges) == [(1, 2), (1, 3), (2, 3)]


def test_dsep_textbook_cases():
    chain = Dag.from_edges(3, [(1, 2), (2, 3)])
    assert d_separated(chain, 1, 3, {2})
    assert not d_separated(chain, 1, 3)
    collider = Dag.from_edges(3, [(1, 3), (2, 3)])
    assert d_separated(collider, 1, 2)
    assert not d_separated(collider, 1, 2, {3})


def test_dsep_collider_descendant_opens_path():
    g = Dag.from_edges(4, [(1, 3), (2, 3), (3, 4)])
    assert not d_separated(g, 1, 2, {4})


@pytest.mark.parametrize("n", [2, 3, 4])
def test_dsep_matches_path_enumeration(n):
    for g in enumerate_order_consistent_dags(n):
        for i, j in itertools.combinations(range(1, n + 1), 2):
            rest = [v for v in range(1, n + 1) if v not in (i, j)]
            for k in range(len(rest) + 1):
                for S in itertools.combinations(rest, k):
                    assert d_separated(g, i, j, S) == dsep_oracle(g, i, j, S), (g, i, j, S)
                    assert d_separated(g, j, i, S) == d_separated(g, i, j, S)


def test_dsep_rejects_bad_queries():
    g = Dag.from_edges(2, [(1, 2)])
    with pytest.raises(InputError):
        d_separated(g, 1, 1)
    with pytest.raises(InputError):
        d_separated(g, 1, 2, {1})
    with pytest.raises(InputError):
        d_separated(g, 1, 5)


def test_post_intervention_examples():
    assert post_intervention_graph(Dag.from_edges(2, [(1, 2)]), {2}).edges == frozenset()
    fork = Dag.from_edges(3, [(1, 2), (1, 3)])
    assert post_intervention_graph(fork, {1}) == fork
    assert post_intervention_graph(fork, {3}).edges == frozenset({(1, 2)})


dags3 = st.sampled_from(enumerate_order_consistent_dags(3))
targets3 = st.sets(st.integers(1, 3))


@given(dags3, targets3)
def test_post_intervention_idempotent(g, T):
    once = post_intervention_graph(g, T)
    assert post_intervention_graph(once, T) == once
    assert all(b not in T for _, b in once.edges)


def test_isomorphism_examples():
    collider = Dag.from_edges(3, [(1, 3), (2, 3)])
    assert is_crl_graph_isomorphism(collider, collider, Permutation((2, 1, 3)))
    edge = Dag.from_edges(2, [(1, 2)])
    assert not is_crl_graph_isomorphism(edge, edge, Permutation((2, 1)))


@settings(max_examples=60)
@given(st.integers(1, 5).flatmap(lambda n: st.sampled_from(enumerate_order_consistent_dags(n))))
def test_identity_is_isomorphism(g):
    assert is_crl_graph_isomorphism(g, g, Permutation.identity(g.n))


def test_dag_invariants_enforced():
    with pytest.raises(InputError):
        Dag.from_edges(2, [(2, 1)])
    with pytest.raises(InputError):
        Dag.from_edges(2, [(1, 1)])
    with pytest.raises(InputError):
        Dag.from_edges(2, [(1, 3)])


@given(st.integers(1, 4).flatmap(lambda n: st.sampled_from(enumerate_order_consistent_dags(n))))
def test_text_round_trip(g):
    assert parse_dag(g.to_text()) == g


def test_permutation_algebra():
    p = Permutation((2, 3, 1))
    assert p.compose(p.inverse()) == Permutation.identity(3)
    assert [p(i) for i in (1, 2, 3)] == [2, 3, 1]
    with pytest.raises(InputError):
        Permutation((1, 1))
