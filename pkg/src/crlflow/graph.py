"""DAGs over 1-based latent indices whose edges respect the order 1 < 2 < ... < n."""
from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Tuple

from .exceptions import InputError

__all__ = [
    "Dag",
    "Permutation",
    "enumerate_order_consistent_dags",
    "d_separated",
    "post_intervention_graph",
    "is_crl_graph_isomorphism",
    "parse_dag",
]


@dataclass(frozen=True)
class Dag:
    n: int
    edges: FrozenSet[Tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.n < 0:
            raise InputError("vertex count must be non-negative")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (1 <= i < j <= self.n):
                raise InputError(f"edge {i}->{j} violates 1 <= i < j <= n={self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]] = ()) -> "Dag":
        return cls(n, frozenset(edges))

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    def sorted_edges(self):
        return sorted(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edges

    def parents(self, j: int) -> Tuple[int, ...]:
        return tuple(sorted(i for i, k in self.edges if k == j))

    def children(self, i: int) -> Tuple[int, ...]:
        return tuple(sorted(k for j, k in self.edges if j == i))

    def ancestors(self, nodes: Iterable[int]) -> set:
        """``nodes`` together with all their ancestors."""
        out = set(nodes)
        frontier = list(out)
        while frontier:
            v = frontier.pop()
            for p in self.parents(v):
                if p not in out:
                    out.add(p)
                    frontier.append(p)
        return out

    def check_vertex(self, v: int):
        if not (1 <= v <= self.n):
            raise InputError(f"vertex {v} out of range 1..{self.n}")

    def to_text(self) -> str:
        return f"n={self.n}; edges=" + ",".join(f"{i}->{j}" for i, j in self.sorted_edges())

    def __str__(self):
        return self.to_text()


_TEXT_RE = re.compile(r"^n=(\d+);edges=(.*)$")


def parse_dag(text: str) -> Dag:
    """Parse ``n=3; edges=1->2,1->3`` (whitespace-insensitive)."""
    compact = re.sub(r"\s+", "", text)
    m = _TEXT_RE.match(compact)
    if not m:
        raise InputError(f"malformed graph text: {text!r}")
    n = int(m.group(1))
    edges = []
    if m.group(2):
        for item in m.group(2).split(","):
            try:
                i, j = item.split("->")
                edges.append((int(i), int(j)))
            except ValueError:
                raise InputError(f"malformed edge {item!r} in {text!r}") from None
    if len(set(edges)) != len(edges):
        raise InputError(f"duplicate edge in {text!r}")
    return Dag(n, frozenset(edges))


@dataclass(frozen=True)
class Permutation:
    """Bijection on {1..n}; ``mapping[i - 1]`` is the image of ``i``."""

    mapping: Tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        if sorted(mapping) != list(range(1, len(mapping) + 1)):
            raise InputError(f"{mapping} is not a permutation of 1..{len(mapping)}")
        object.__setattr__(self, "mapping", mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @property
    def n(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        return self.mapping[i - 1]

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.mapping, start=1):
            inv[j - 1] = i
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """``self ∘ other``."""
        return Permutation(tuple(self(other(i)) for i in range(1, self.n + 1)))


def enumerate_order_consistent_dags(n: int) -> list:
    """All 2^(n(n-1)/2) DAGs with edges i->j, i<j, in binary-counting order.

    Bit k of the counter toggles the k-th edge of the lexicographically
    sorted candidate edge list.
    """
    if n < 0:
        raise InputError("n must be non-negative")
    possible = list(itertools.combinations(range(1, n + 1), 2))
    out = []
    for mask in range(2 ** len(possible)):
        edges = frozenset(e for k, e in enumerate(possible) if mask >> k & 1)
        out.append(Dag(n, edges))
    return out


def d_separated(g: Dag, i: int, j: int, S: Iterable[int] = ()) -> bool:
    """True iff ``i`` and ``j`` are d-separated by ``S`` in ``g`` (reachability / Bayes-ball)."""
    S = set(S)
    for v in (i, j, *S):
        g.check_vertex(v)
    if i == j:
        raise InputError("query vertices must differ")
    if i in S or j in S:
        raise InputError("query vertices must not be in the conditioning set")

    anc = g.ancestors(S)
    # state: (vertex, arrived_from_child) -- "up" travel means we came from a child
    visited = set()
    queue = deque([(i, True)])
    while queue:
        v, from_child = queue.popleft()
        if (v, from_child) in visited:
            continue
        visited.add((v, from_child))
        if v == j:
            return False
        if from_child:
            if v not in S:
                for p in g.parents(v):
                    queue.append((p, True))
                for c in g.children(v):
                    queue.append((c, False))
        else:
            if v not in S:
                for c in g.children(v):
                    queue.append((c, False))
            if v in anc:
                for p in g.parents(v):
                    queue.append((p, True))
    return True


def post_intervention_graph(g: Dag, targets: Iterable[int]) -> Dag:
    targets = set(targets)
    for t in targets:
        g.check_vertex(t)
    return Dag(g.n, frozenset(e for e in g.edges if e[1] not in targets))


def is_crl_graph_isomorphism(g1: Dag, g2: Dag, p: Permutation) -> bool:
    """Whether relabelling ``g1`` by ``p`` gives exactly ``g2``."""
    if not (g1.n == g2.n == p.n):
        raise InputError(f"size mismatch: {g1.n}, {g2.n}, {p.n}")
    for a in range(1, g1.n + 1):
        for b in range(1, g1.n + 1):
            if a != b and g1.has_edge(a, b) != g2.has_edge(p(a), p(b)):
                return False
    return True
