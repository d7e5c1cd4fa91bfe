"""Full Steiner topologies, rooted skeleton trees and coincident-node merging.

Terminals are labelled ``0 .. N-1`` and Steiner nodes ``N .. 2N-3``. In a
full Steiner topology every Steiner node has degree three and every
terminal degree one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .exceptions import InputError

__all__ = [
    "SteinerTopology",
    "SkeletonTree",
    "MergedNetwork",
    "enumerate_full_topologies",
    "count_full_topologies",
    "build_skeleton",
    "merge_coincident",
    "topology_splits",
    "format_topology",
]


@dataclass(frozen=True)
class SteinerTopology:
    n_terminals: int
    n_steiner: int
    edges_e1: tuple  # (terminal, steiner), sorted
    edges_e2: tuple  # (steiner, steiner) with first < second, sorted

    @property
    def steiner_ids(self) -> range:
        return range(self.n_terminals, self.n_terminals + self.n_steiner)

    def terminals_of(self, s: int) -> tuple:
        return tuple(t for t, u in self.edges_e1 if u == s)

    def attachment(self, terminal: int) -> int:
        for t, s in self.edges_e1:
            if t == terminal:
                return s
        raise KeyError(terminal)

    def neighbours(self, s: int) -> tuple:
        return tuple(sorted(b if a == s else a for a, b in self.edges_e2 if s in (a, b)))

    def validate(self) -> None:
        n, m = self.n_terminals, self.n_steiner
        nodes = n + m
        edges = list(self.edges_e1) + list(self.edges_e2)
        if len(edges) != nodes - 1:
            raise InputError(f"topology has {len(edges)} edges, a tree on {nodes} nodes needs {nodes - 1}")
        parent = list(range(nodes))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in edges:
            ra, rb = find(a), find(b)
            if ra == rb:
                raise InputError("topology contains a cycle")
            parent[ra] = rb
        degree = [0] * nodes
        for a, b in edges:
            degree[a] += 1
            degree[b] += 1
        if any(degree[t] != 1 for t in range(n)):
            raise InputError("terminals of a full topology must have degree 1")
        if any(degree[s] != 3 for s in range(n, nodes)):
            raise InputError("Steiner nodes of a full topology must have degree 3")


def _normalise(n: int, edges) -> SteinerTopology:
    e1, e2 = [], []
    for a, b in edges:
        a, b = min(a, b), max(a, b)
        (e1 if a < n else e2).append((a, b))
    m = max(0, n - 2)
    return SteinerTopology(n, m, tuple(sorted(e1)), tuple(sorted(e2)))


def count_full_topologies(n: int) -> int:
    """(2n-5)!! for n >= 3."""
    out = 1
    for k in range(3, 2 * n - 4, 2):
        out *= k
    return out


def enumerate_full_topologies(n_terminals: int) -> Iterator[SteinerTopology]:
    """Yield every full Steiner topology on ``n_terminals`` labelled terminals.

    Built by insertion: terminal ``k`` splits each edge of each topology on
    the first ``k`` terminals with a new Steiner node. The order is fixed.
    Steiner labels are re-assigned so that node ``N + i`` is the ``i``-th
    inserted one, which keeps labels independent of ``N`` during recursion.
    """
    n = int(n_terminals)
    if n < 3:
        raise InputError(f"full Steiner topologies need at least 3 terminals, got {n}")

    # internal labels: terminals 0..n-1, Steiner nodes n, n+1, ...
    def grow(edges: list, k: int):
        if k == n:
            yield _normalise(n, edges)
            return
        new_s = n + (k - 2)
        for i, (a, b) in enumerate(edges):
            rest = edges[:i] + edges[i + 1 :]
            yield from grow(rest + [(a, new_s), (new_s, b), (k, new_s)], k + 1)

    yield from grow([(0, n), (1, n), (2, n)], 3)


def topology_splits(t: SteinerTopology) -> frozenset:
    """Canonical form: the set of terminal bipartitions induced by internal edges.

    Two labelled trees without degree-2 nodes are isomorphic (fixing
    terminal labels) exactly when their split sets agree.
    """
    adj: dict = {}
    for a, b in t.edges_e1 + t.edges_e2:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    splits = set()
    everyone = frozenset(range(t.n_terminals))
    for a, b in t.edges_e2:
        side = set()
        stack = [(a, b)]
        while stack:
            node, came = stack.pop()
            if node < t.n_terminals:
                side.add(node)
            stack.extend((nb, node) for nb in adj[node] if nb != came)
        side = frozenset(side)
        other = everyone - side
        splits.add(min(side, other, key=lambda s: sorted(s)))
    return frozenset(splits)


def format_topology(t: SteinerTopology) -> str:
    """One-line dump, e.g. ``t0-s3,t1-s3,t2-s3``."""

    def lab(v):
        return f"t{v}" if v < t.n_terminals else f"s{v}"

    return ",".join(f"{lab(a)}-{lab(b)}" for a, b in t.edges_e1 + t.edges_e2)


@dataclass(frozen=True)
class SkeletonTree:
    root: int
    parent: Mapping
    order: tuple
    children: Mapping

    def edges(self) -> set:
        return {tuple(sorted((c, p))) for c, p in self.parent.items() if p is not None}


def build_skeleton(t: SteinerTopology, root: int) -> SkeletonTree:
    """Orient the Steiner-only subtree towards ``root`` and post-order it."""
    if root not in t.steiner_ids:
        raise InputError(f"root {root} is not a Steiner node of this topology")
    parent = {root: None}
    children: dict = {}
    order = []

    def visit(s, up):
        kids = [c for c in t.neighbours(s) if c != up]
        children[s] = tuple(kids)
        for c in kids:
            parent[c] = s
            visit(c, s)
        order.append(s)

    visit(root, None)
    return SkeletonTree(root=root, parent=parent, order=tuple(order), children=children)


@dataclass(frozen=True)
class MergedNetwork:
    groups: tuple  # tuple of sorted tuples of Steiner labels
    vertex: tuple  # grid vertex per group
    branch_count: tuple = field(default=())

    def group_of(self, s: int) -> int:
        for i, g in enumerate(self.groups):
            if s in g:
                return i
        raise KeyError(s)


def merge_coincident(placements: Mapping, t: SteinerTopology) -> MergedNetwork:
    """Group tree-adjacent Steiner nodes sitting on the same grid vertex.

    A group of ``k`` coincident three-branch nodes is one ``k + 2``-branch
    unit.
    """
    ids = list(t.steiner_ids)
    missing = [s for s in ids if s not in placements]
    if missing:
        raise InputError(f"placements missing for Steiner nodes {missing}")
    parent = {s: s for s in ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in t.edges_e2:
        if placements[a] == placements[b]:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    buckets: dict = {}
    for s in ids:
        buckets.setdefault(find(s), []).append(s)
    groups = tuple(tuple(sorted(g)) for _, g in sorted(buckets.items()))
    vertex = tuple(int(placements[g[0]]) for g in groups)
    branch = tuple(3 * len(g) - 2 * (len(g) - 1) for g in groups)
    return MergedNetwork(groups, vertex, branch)
