"""Minimum-cost trunk-and-branch networks over regions with candidate stations.

Pipeline for ``N >= 3`` regions:

1. one fast-marching field per candidate station, folded into a per-region
   distance record ``D`` (geodesic cost plus station cost) and a pointer
   to the candidate attaining it;
2. for each full Steiner topology, per-Steiner-node terminal costs
   ``cbar`` (sum of ``D`` over adjacent regions);
3. a tree dynamic program over the rooted skeleton that places every
   Steiner node on a grid vertex, charging branching-unit costs once per
   group of coincident nodes (or once per node when merging is disabled);
4. the cheapest topology wins; geodesics are traced for every tree edge.

All DP arithmetic runs on costs rounded to a common power-of-two quantum
small enough that every partial sum is exact in float64, so results do not
depend on summation order (root choice, oracle evaluation order).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .eikonal import DEFAULT_MAX_VERTICES, GeodesicPath, all_pairs_costs, fmm_solve, path_cost, trace_geodesic
from .exceptions import ConsistencyError, InputError, SolverError
from .terrain import Manifold
from .topology import (
    MergedNetwork,
    SkeletonTree,
    SteinerTopology,
    build_skeleton,
    enumerate_full_topologies,
    format_topology,
    merge_coincident,
)

log = logging.getLogger(__name__)

MERGE = "merge_allowed"
THREE = "three_branch_only"
MODES = (MERGE, THREE)
_MODE_ALIASES = {"merge": MERGE, "merge_allowed": MERGE, "three": THREE, "three_branch_only": THREE}

# exact-sum headroom: every partial sum stays below 2**_SUM_BITS quanta
_SUM_BITS = 50

__all__ = [
    "MERGE",
    "THREE",
    "RegionSpec",
    "RegionDistance",
    "CostTables",
    "DpTables",
    "DpResult",
    "Scenario",
    "NetworkSolution",
    "normalise_mode",
    "region_distance",
    "terminal_barc",
    "station_zero_mask",
    "prepare_tables",
    "dp_least_cost_system",
    "solve_network",
    "evaluate_solution",
]


def normalise_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise InputError(f"unknown mode '{mode}' (expected one of {sorted(_MODE_ALIASES)})") from None


@dataclass(frozen=True)
class RegionSpec:
    """Destination region: candidate station vertices with their build costs."""

    candidates: tuple  # ((vertex, station_cost), ...)
    name: str = ""

    def __post_init__(self):
        cands = tuple((int(v), float(c)) for v, c in self.candidates)
        if not cands:
            raise InputError(f"region '{self.name}' has no candidate stations")
        if any(c < 0 or not math.isfinite(c) for _, c in cands):
            raise InputError(f"region '{self.name}' has a negative or non-finite station cost")
        object.__setattr__(self, "candidates", cands)

    @classmethod
    def point(cls, vertex: int, name: str = "", station_cost: float = 0.0) -> "RegionSpec":
        return cls(((vertex, station_cost),), name)

    @property
    def vertices(self) -> np.ndarray:
        return np.array([v for v, _ in self.candidates], dtype=np.int64)

    @property
    def station_costs(self) -> np.ndarray:
        return np.array([c for _, c in self.candidates], dtype=float)


@dataclass(frozen=True, eq=False)
class RegionDistance:
    values: np.ndarray  # min over candidates of geodesic + station cost
    pointer: np.ndarray  # argmin candidate index per vertex
    fields: np.ndarray  # (L, H) raw geodesic cost from each candidate
    region: RegionSpec

    def station_vertex(self, vertex: int) -> int:
        return int(self.region.candidates[int(self.pointer[vertex])][0])


def _field_rows(m: Manifold, field_cache, vertices) -> np.ndarray:
    rows = []
    for v in vertices:
        if field_cache is None:
            rows.append(fmm_solve(m, {int(v)}).value)
        else:
            rows.append(np.asarray(field_cache[int(v)], dtype=float))
    return np.vstack(rows)


def region_distance(m: Manifold, field_cache, r: RegionSpec) -> RegionDistance:
    """Distance record and pointer for one region.

    ``field_cache`` maps a vertex to its single-source field (the all-pairs
    matrix works); ``None`` runs fast marching per candidate.
    """
    verts = r.vertices
    if verts.min() < 0 or verts.max() >= m.n_vertices:
        raise InputError(f"region '{r.name}' has a candidate outside the manifold")
    fields = _field_rows(m, field_cache, verts)
    stacked = fields + r.station_costs[:, None]
    pointer = np.argmin(stacked, axis=0)  # first minimum = lowest candidate index
    values = stacked[pointer, np.arange(stacked.shape[1])]
    return RegionDistance(values, pointer, fields, r)


def terminal_barc(skeleton: Optional[SkeletonTree], t: SteinerTopology, region_distances: Sequence) -> np.ndarray:
    """``(M, H)`` array; row ``s - N`` sums ``D`` over regions adjacent to Steiner ``s``."""
    h = region_distances[0].values.shape[0]
    out = np.zeros((t.n_steiner, h))
    for term, s in t.edges_e1:
        out[s - t.n_terminals] += region_distances[term].values
    return out


def station_zero_mask(t: SteinerTopology, region_distances: Sequence) -> np.ndarray:
    """``(M, H)`` mask: Steiner ``s`` at vertex ``p`` sits on the station an adjacent region picks at ``p``."""
    h = region_distances[0].values.shape[0]
    out = np.zeros((t.n_steiner, h), dtype=bool)
    idx = np.arange(h)
    for term, s in t.edges_e1:
        rd = region_distances[term]
        chosen = rd.region.vertices[rd.pointer]
        out[s - t.n_terminals] |= chosen == idx
    return out


# -- exact arithmetic -----------------------------------------------------------------


def _quantum(bound: float) -> float:
    bound = max(float(bound), 1e-300)
    return math.ldexp(1.0, math.frexp(bound)[1] - _SUM_BITS)


def _quantize(a: np.ndarray, q: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.rint(a / q) * q
    out[~np.isfinite(a)] = np.inf
    return out


@dataclass(frozen=True, eq=False)
class CostTables:
    """Quantized inputs to the placement DP (shared with the brute-force oracle)."""

    topology: SteinerTopology
    cbar: np.ndarray  # (M, H)
    w: np.ndarray  # (H, H), symmetric
    bu: np.ndarray  # (H,)
    zero: np.ndarray  # (M, H) bool
    quantum: float

    @property
    def n_vertices(self) -> int:
        return self.w.shape[0]


def scenario_quantum(region_distances: Sequence, w_sym: np.ndarray, bu: np.ndarray) -> float:
    n = len(region_distances)
    bound = sum(float(rd.values.max()) for rd in region_distances)
    bound += max(n - 3, 0) * float(w_sym.max()) + max(n - 2, 0) * float(bu.max())
    return _quantum(bound)


def prepare_tables(
    t: SteinerTopology,
    region_distances: Sequence,
    w_sym: np.ndarray,
    bu_cost: np.ndarray,
    quantum: Optional[float] = None,
    w_quantized: bool = False,
) -> CostTables:
    if quantum is None:
        quantum = scenario_quantum(region_distances, w_sym, bu_cost)
    cbar = _quantize(terminal_barc(None, t, region_distances), quantum)
    w = w_sym if w_quantized else _quantize(w_sym, quantum)
    return CostTables(t, cbar, w, _quantize(bu_cost, quantum), station_zero_mask(t, region_distances), quantum)


# -- dynamic program ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DpTables:
    phi: dict  # steiner -> (H,) subtree cost including its own group charge
    pi: dict  # (steiner, child) -> (H,) argmin vertex of the detached child
    bucket_a: dict  # steiner -> (H,) subtree cost, group not on a station (charge pending)
    bucket_z: dict  # steiner -> (H,) subtree cost, group on a station (free)


@dataclass(frozen=True, eq=False)
class DpResult:
    objective: float
    placements: dict  # steiner -> vertex
    root_vertex: int
    tables: DpTables


_BLOCK = 1 << 22  # max temporaries per external-min block (elements)


def _external_min(f_child: np.ndarray, w: np.ndarray, exclude_same: bool):
    """``min_q f_child[q] + w[q, p]`` for every ``p``; lowest ``q`` wins ties."""
    h = f_child.shape[0]
    best = np.empty(h)
    arg = np.empty(h, dtype=np.int64)
    step = max(1, _BLOCK // h)
    for lo in range(0, h, step):
        hi = min(h, lo + step)
        block = f_child[:, None] + w[:, lo:hi]
        if exclude_same:
            block[np.arange(lo, hi), np.arange(hi - lo)] = np.inf
        a = np.argmin(block, axis=0)
        arg[lo:hi] = a
        best[lo:hi] = block[a, np.arange(hi - lo)]
    return best, arg


def dp_least_cost_system(skeleton: SkeletonTree, tables: CostTables, mode: str = MERGE) -> DpResult:
    """Place every Steiner node of one topology at minimum total cost.

    For node ``i`` at vertex ``p`` each child ``j`` is either detached (at
    some ``q``, paying its full subtree cost, its group charge and
    ``w(q, p)``) or, with merging allowed, coincident (``q == p``, joining
    the parent's group). A group pays ``bu[p]`` once, at its top node,
    unless some member sits on a station chosen by an adjacent region.
    Without merging every node is its own group, even when coincident.
    """
    mode = normalise_mode(mode)
    merge = mode == MERGE
    t = tables.topology
    n = t.n_terminals
    h = tables.n_vertices
    if tables.cbar.shape != (t.n_steiner, h) or tables.bu.shape != (h,) or tables.zero.shape != tables.cbar.shape:
        raise SolverError("inconsistent DP table sizes")
    if set(skeleton.order) != set(t.steiner_ids):
        raise SolverError("skeleton does not match topology")

    inf = np.full(h, np.inf)
    phi, pi, bucket_a, bucket_z = {}, {}, {}, {}
    combo_a, combo_z, combos_of, f_from_z = {}, {}, {}, {}

    for s in skeleton.order:
        kids = skeleton.children[s]
        cbar = tables.cbar[s - n]
        zero = tables.zero[s - n]
        options = []
        for j in kids:
            ext, arg = _external_min(phi[j], tables.w, exclude_same=merge)
            pi[(s, j)] = arg
            opts = [(ext, False)]
            if merge:
                opts += [(bucket_a[j], False), (bucket_z[j], True)]
            options.append(opts)
        combos = list(itertools.product(*[range(len(o)) for o in options]))
        best_a, best_z = inf.copy(), inf.copy()
        arg_a = np.full(h, -1, dtype=np.int64)
        arg_z = np.full(h, -1, dtype=np.int64)
        for ci, combo in enumerate(combos):
            total = cbar
            has_z = False
            for k, o in enumerate(combo):
                arr, z = options[k][o]
                total = total + arr
                has_z = has_z or z
            if has_z:
                cand_a, cand_z = inf, total
            else:
                cand_a = np.where(zero, np.inf, total)
                cand_z = np.where(zero, total, np.inf)
            upd = cand_a < best_a
            best_a = np.where(upd, cand_a, best_a)
            arg_a[upd] = ci
            upd = cand_z < best_z
            best_z = np.where(upd, cand_z, best_z)
            arg_z[upd] = ci
        charged = best_a + tables.bu
        use_z = best_z <= charged
        phi[s] = np.where(use_z, best_z, charged)
        bucket_a[s], bucket_z[s] = best_a, best_z
        combo_a[s], combo_z[s], combos_of[s], f_from_z[s] = arg_a, arg_z, combos, use_z

    root = skeleton.root
    p_hat = int(np.argmin(phi[root]))
    objective = float(phi[root][p_hat])
    if not math.isfinite(objective):
        raise SolverError("no finite placement exists")

    placements: dict = {}
    stack = [(root, p_hat, bool(f_from_z[root][p_hat]))]
    while stack:
        s, p, in_z = stack.pop()
        placements[s] = p
        ci = (combo_z if in_z else combo_a)[s][p]
        combo = combos_of[s][ci]
        for j, o in zip(skeleton.children[s], combo):
            if o == 0:
                q = int(pi[(s, j)][p])
                stack.append((j, q, bool(f_from_z[j][q])))
            else:
                stack.append((j, p, o == 2))
    return DpResult(objective, placements, p_hat, DpTables(phi, pi, bucket_a, bucket_z))


# -- full solve -------------------------------------------------------------------------


@dataclass
class Scenario:
    manifold: Manifold
    regions: Sequence
    mode: str = MERGE
    w: Optional[np.ndarray] = None
    max_vertices: int = DEFAULT_MAX_VERTICES
    threads: int = 1
    seed_incumbent: Optional[float] = None

    def __post_init__(self):
        self.mode = normalise_mode(self.mode)
        self.regions = [r if isinstance(r, RegionSpec) else RegionSpec(**r) for r in self.regions]


@dataclass
class NetworkSolution:
    topology: Optional[SteinerTopology]
    steiner_vertices: tuple
    merged: Optional[MergedNetwork]
    group_charges: tuple  # charged BU cost per merged group
    chosen_station: tuple  # candidate index per region
    station_vertices: tuple
    edge_paths: list  # [((u, v), GeodesicPath)] with labels as in the topology
    cost_breakdown: dict
    total_length: float
    objective: float
    regions: tuple
    mode: str
    stats: dict = field(default_factory=dict)

    @property
    def group_zeroed(self) -> tuple:
        return self.stats.get("group_zeroed", ())

    @property
    def bu_count(self) -> int:
        """Branching units actually charged (groups not sitting on a chosen station)."""
        return sum(1 for z in self.group_zeroed if not z)


def _symmetrize(w: np.ndarray) -> np.ndarray:
    return np.minimum(w, w.T)


def _solve_pair(m, regions, rds, w):
    a, b = rds
    vb = regions[1].vertices
    totals = a.values[vb] + regions[1].station_costs
    k = int(np.argmin(totals))
    return float(totals[k]), int(a.pointer[vb[k]]), k


def solve_network(scenario: Scenario) -> NetworkSolution:
    """Cheapest network joining all regions of ``scenario``."""
    m = scenario.manifold
    regions = list(scenario.regions)
    n = len(regions)
    if n < 2:
        raise InputError(f"need at least two regions, got {n}")
    w = scenario.w
    if w is None:
        w = all_pairs_costs(m, scenario.max_vertices, scenario.threads)
    if w.shape != (m.n_vertices, m.n_vertices):
        raise InputError("cost matrix does not match the manifold")
    rds = [region_distance(m, w, r) for r in regions]
    w_sym = _symmetrize(w)
    fields: dict = {}

    def field_from(v):
        if v not in fields:
            fields[v] = fmm_solve(m, {v})
        return fields[v]

    if n == 2:
        objective, ia, ib = _solve_pair(m, regions, rds, w)
        va, vb = regions[0].candidates[ia][0], regions[1].candidates[ib][0]
        path = trace_geodesic(field_from(va), m, vb)
        cable = float(w[va, vb])
        stations = regions[0].candidates[ia][1] + regions[1].candidates[ib][1]
        return NetworkSolution(
            topology=None,
            steiner_vertices=(),
            merged=None,
            group_charges=(),
            chosen_station=(ia, ib),
            station_vertices=(va, vb),
            edge_paths=[((0, 1), path)],
            cost_breakdown=_breakdown(cable, 0.0, stations),
            total_length=path.length,
            objective=objective,
            regions=tuple(regions),
            mode=scenario.mode,
            stats={"topologies": 0, "evaluated": 0, "pruned": 0},
        )

    quantum = scenario_quantum(rds, w_sym, m.bu_cost)
    wq = _quantize(w_sym, quantum)
    incumbent = math.inf if scenario.seed_incumbent is None else float(scenario.seed_incumbent)
    best = None
    stats = {"topologies": 0, "evaluated": 0, "pruned": 0, "incumbent_trace": []}
    for t in enumerate_full_topologies(n):
        stats["topologies"] += 1
        tables = prepare_tables(t, rds, wq, m.bu_cost, quantum, w_quantized=True)
        bound = float(tables.cbar.min(axis=1).sum())
        if bound > incumbent:
            stats["pruned"] += 1
            continue
        root = max(t.steiner_ids)
        res = dp_least_cost_system(build_skeleton(t, root), tables, scenario.mode)
        stats["evaluated"] += 1
        if res.objective < incumbent:
            incumbent = res.objective
            best = (t, res, tables)
            stats["incumbent_trace"].append(res.objective)
            log.debug("new incumbent %.6g from %s", res.objective, format_topology(t))
    log.info(
        "topologies: %d total, %d evaluated, %d pruned; best %.6g",
        stats["topologies"],
        stats["evaluated"],
        stats["pruned"],
        incumbent,
    )
    if best is None:
        raise SolverError(f"no topology beats the seeded incumbent {scenario.seed_incumbent}")
    t, res, tables = best
    return _assemble(m, regions, rds, w, w_sym, t, res, tables, scenario.mode, stats, field_from)


def _breakdown(cable, bu, stations) -> dict:
    return {"cable": cable, "bu": bu, "stations": stations, "total": cable + bu + stations}


def _assemble(m, regions, rds, w, w_sym, t, res, tables, mode, stats, field_from) -> NetworkSolution:
    n = t.n_terminals
    place = res.placements
    if mode == MERGE:
        merged = merge_coincident(place, t)
    else:
        groups = tuple((s,) for s in t.steiner_ids)
        merged = MergedNetwork(groups, tuple(place[s] for s in t.steiner_ids), tuple(3 for _ in groups))

    chosen, station_vertices, station_cost = [], [], 0.0
    for i, rd in enumerate(rds):
        x = place[t.attachment(i)]
        k = int(rd.pointer[x])
        chosen.append(k)
        station_vertices.append(regions[i].candidates[k][0])
        station_cost += regions[i].candidates[k][1]

    charges, zeroed = [], []
    for g, v in zip(merged.groups, merged.vertex):
        z = any(tables.zero[s - n][v] for s in g)
        zeroed.append(bool(z))
        charges.append(0.0 if z else float(m.bu_cost[v]))

    paths = []
    cable = 0.0
    for term, s in t.edges_e1:
        r, x = station_vertices[term], place[s]
        paths.append(((term, s), trace_geodesic(field_from(r), m, x)))
        cable += float(w[r, x])
    for a, b in t.edges_e2:
        p, q = place[a], place[b]
        if p == q:
            paths.append(((a, b), GeodesicPath(m.vertices[[p]].copy(), 0.0, 0.0)))
            continue
        src, dst = (p, q) if w[p, q] <= w[q, p] else (q, p)
        paths.append(((a, b), trace_geodesic(field_from(src), m, dst)))
        cable += float(w_sym[p, q])

    stats = dict(stats)
    stats["group_zeroed"] = tuple(zeroed)
    return NetworkSolution(
        topology=t,
        steiner_vertices=tuple(int(place[s]) for s in t.steiner_ids),
        merged=merged,
        group_charges=tuple(charges),
        chosen_station=tuple(chosen),
        station_vertices=tuple(station_vertices),
        edge_paths=paths,
        cost_breakdown=_breakdown(cable, float(sum(charges)), station_cost),
        total_length=float(sum(p.length for _, p in paths)),
        objective=res.objective,
        regions=tuple(regions),
        mode=mode,
        stats=stats,
    )


def evaluate_solution(sol: NetworkSolution, m: Manifold, rtol: float = 0.03) -> dict:
    """Re-cost a solution from its polylines and compare with the DP objective.

    Cable cost is re-integrated along the stored paths; BU and station
    charges are re-derived from the placements. Raises
    :class:`ConsistencyError` if the total differs from ``sol.objective``
    by more than ``rtol`` (relative).
    """
    if not sol.edge_paths:
        raise InputError("solution has no paths")
    cable = 0.0
    for _, p in sol.edge_paths:
        cable += path_cost(m, p.points)[0]
    stations = float(sum(r.candidates[k][1] for r, k in zip(sol.regions, sol.chosen_station)))
    bu = 0.0
    t = sol.topology
    if t is not None and sol.merged is not None:
        for g, v in zip(sol.merged.groups, sol.merged.vertex):
            on_station = False
            for s in g:
                for term in t.terminals_of(s):
                    if sol.station_vertices[term] == v:
                        on_station = True
            if not on_station:
                bu += float(m.bu_cost[v])
    out = _breakdown(cable, bu, stations)
    ref = sol.objective
    if abs(out["total"] - ref) > rtol * max(abs(ref), 1e-12):
        raise ConsistencyError(
            f"re-evaluated total {out['total']:.6g} differs from optimizer objective {ref:.6g} "
            f"by {abs(out['total'] - ref) / max(abs(ref), 1e-12):.2%} (cable {cable:.6g}, "
            f"bu {bu:.6g}, stations {stations:.6g})"
        )
    return out
