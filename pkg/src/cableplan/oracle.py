"""Brute-force references for tests: exhaustive placement search and edge-only Dijkstra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .exceptions import InputError
from .solver import MERGE, CostTables, normalise_mode
from .terrain import Manifold

__all__ = ["OracleResult", "DEFAULT_MAX_EVALS", "brute_force_placements", "placement_cost", "dijkstra_edges"]

DEFAULT_MAX_EVALS = 10_000_000
_CHUNK = 200_000


@dataclass(frozen=True)
class OracleResult:
    objective: float
    placements: dict
    enumerated_count: int


def _costs(tables: CostTables, merge: bool, P: np.ndarray) -> np.ndarray:
    """Objective for a batch of placements ``P`` of shape ``(B, M)``."""
    t = tables.topology
    n, m = t.n_terminals, t.n_steiner
    total = np.zeros(P.shape[0])
    for i in range(m):
        total = total + tables.cbar[i][P[:, i]]
    for a, b in t.edges_e2:
        total = total + tables.w[P[:, a - n], P[:, b - n]]
    zero = np.stack([tables.zero[i][P[:, i]] for i in range(m)], axis=1)
    if not merge:
        for i in range(m):
            total = total + np.where(zero[:, i], 0.0, tables.bu[P[:, i]])
        return total
    # coincidence groups by min-label propagation over equal-placement edges
    label = np.tile(np.arange(m), (P.shape[0], 1))
    same = [(a - n, b - n, P[:, a - n] == P[:, b - n]) for a, b in t.edges_e2]
    for _ in range(m):
        for a, b, eq in same:
            lo = np.minimum(label[:, a], label[:, b])
            label[:, a] = np.where(eq, lo, label[:, a])
            label[:, b] = np.where(eq, lo, label[:, b])
    for g in range(m):
        members = label == g
        present = members[:, g]
        group_zero = (members & zero).any(axis=1)
        total = total + np.where(present & ~group_zero, tables.bu[P[:, g]], 0.0)
    return total


def placement_cost(tables: CostTables, placements: dict, mode: str = MERGE) -> float:
    """Objective of one explicit placement under the solver's charging rule."""
    t = tables.topology
    P = np.array([[placements[s] for s in t.steiner_ids]], dtype=np.int64)
    return float(_costs(tables, normalise_mode(mode) == MERGE, P)[0])


def brute_force_placements(
    topology, skeleton, tables: CostTables, mode: str = MERGE, max_evals: int = DEFAULT_MAX_EVALS
) -> OracleResult:
    """Scan every Steiner placement; lexicographically smallest optimum wins ties.

    ``skeleton`` is accepted for signature parity and ignored: the
    objective does not depend on a rooting.
    """
    if tables.topology != topology:
        raise InputError("cost tables were built for a different topology")
    merge = normalise_mode(mode) == MERGE
    h, m = tables.n_vertices, topology.n_steiner
    count = h**m
    if count > max_evals:
        raise InputError(
            f"exhaustive search needs {h}^{m} = {count:,} evaluations, above the ceiling of {max_evals:,}"
        )
    best, best_flat = np.inf, -1
    for lo in range(0, count, _CHUNK):
        flat = np.arange(lo, min(count, lo + _CHUNK), dtype=np.int64)
        P = np.stack(np.unravel_index(flat, (h,) * m), axis=1)
        c = _costs(tables, merge, P)
        k = int(np.argmin(c))
        if c[k] < best:
            best, best_flat = float(c[k]), int(flat[k])
    coords = np.unravel_index(best_flat, (h,) * m)
    placements = {s: int(coords[s - topology.n_terminals]) for s in topology.steiner_ids}
    return OracleResult(best, placements, count)


def dijkstra_edges(m: Manifold, source) -> np.ndarray:
    """Shortest paths along mesh edges only; edge cost is length times mean endpoint cost."""
    e, length = _mesh_edges(m)
    f = np.asarray(m.cable_cost)
    weight = length * 0.5 * (f[e[:, 0]] + f[e[:, 1]])
    h = m.n_vertices
    g = coo_matrix((np.r_[weight, weight], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(h, h)).tocsr()
    src = [int(source)] if np.isscalar(source) else [int(s) for s in source]
    if not src or min(src) < 0 or max(src) >= h:
        raise InputError("invalid source vertex")
    return dijkstra(g, directed=False, indices=src, min_only=True)


def _mesh_edges(m: Manifold):
    tri = np.asarray(m.triangles)
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    xyz = np.asarray(m.vertices)
    return e, np.linalg.norm(xyz[e[:, 0]] - xyz[e[:, 1]], axis=1)
