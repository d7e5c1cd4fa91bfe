"""scikit-learn style wrappers around the meshing, distance and design steps."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_manifold, check_mode, check_raster, check_regions, check_threads, check_vertices
from .eikonal import DEFAULT_INIT_RADIUS, DEFAULT_MAX_VERTICES, all_pairs_costs, fmm_solve
from .solver import MERGE, Scenario, evaluate_solution, solve_network
from .terrain import CostZone, apply_cost_model, build_manifold

__all__ = ["TerrainMesher", "FastMarchingDistance", "CableNetworkDesigner"]


def _zone(polygon, bu_cost, cable_cost=None) -> CostZone:
    # same keys as the YAML zone section
    return CostZone(tuple(map(tuple, polygon)), bu_cost, cable_cost)


class TerrainMesher(TransformerMixin, BaseEstimator):
    """Raster (rows x cols elevations) to a costed triangulated manifold.

    ``zones`` holds CostZones or dicts with ``polygon``, ``bu_cost`` and
    optional ``cable_cost``.
    """

    def __init__(
        self,
        cell_size=1.0,
        origin=(0.0, 0.0),
        base_cable_cost=1.0,
        base_bu_cost=0.0,
        zones=(),
        land_penalty=1e3,
    ):
        self.cell_size = cell_size
        self.origin = origin
        self.base_cable_cost = base_cable_cost
        self.base_bu_cost = base_bu_cost
        self.zones = zones
        self.land_penalty = land_penalty

    def fit(self, X, y=None):
        self.raster_shape_ = check_raster(X).shape
        self.zones_ = [z if isinstance(z, CostZone) else _zone(**z) for z in self.zones]
        return self

    def transform(self, X):
        check_is_fitted(self, "raster_shape_")
        m = build_manifold(check_raster(X), self.cell_size, self.origin)
        return apply_cost_model(m, self.base_cable_cost, self.base_bu_cost, self.zones_, self.land_penalty)


class FastMarchingDistance(TransformerMixin, BaseEstimator):
    """Geodesic cost fields on a fitted manifold.

    ``transform(sources)`` returns one row per source vertex.
    """

    def __init__(self, init_radius=DEFAULT_INIT_RADIUS, max_vertices=DEFAULT_MAX_VERTICES, threads=1):
        self.init_radius = init_radius
        self.max_vertices = max_vertices
        self.threads = threads

    def fit(self, X, y=None):
        self.manifold_ = check_manifold(X)
        self.n_vertices_ = X.n_vertices
        return self

    def transform(self, X):
        check_is_fitted(self, "manifold_")
        src = check_vertices(X, self.n_vertices_)
        return np.vstack([fmm_solve(self.manifold_, {int(s)}, self.init_radius).value for s in src])

    def pairwise(self) -> np.ndarray:
        check_is_fitted(self, "manifold_")
        return all_pairs_costs(self.manifold_, self.max_vertices, check_threads(self.threads), self.init_radius)


class CableNetworkDesigner(BaseEstimator):
    """Minimum-cost network joining regions on a manifold.

    ``fit(manifold, regions)``; ``regions`` may hold RegionSpecs, bare
    vertex indices (zero-cost point terminals) or ``[(vertex, cost), ...]``.
    """

    def __init__(self, mode=MERGE, max_vertices=DEFAULT_MAX_VERTICES, threads=1, seed_incumbent=None, verify=True):
        self.mode = mode
        self.max_vertices = max_vertices
        self.threads = threads
        self.seed_incumbent = seed_incumbent
        self.verify = verify

    def fit(self, X, y, cost_matrix=None):
        m = check_manifold(X)
        regions = check_regions(y, m.n_vertices)
        sol = solve_network(
            Scenario(
                m,
                regions,
                check_mode(self.mode),
                w=cost_matrix,
                max_vertices=self.max_vertices,
                threads=check_threads(self.threads),
                seed_incumbent=self.seed_incumbent,
            )
        )
        self.evaluated_breakdown_ = evaluate_solution(sol, m) if self.verify else None
        self.solution_ = sol
        self.steiner_vertices_ = np.array(sol.steiner_vertices, dtype=np.int64)
        self.chosen_stations_ = np.array(sol.chosen_station, dtype=np.int64)
        self.station_vertices_ = np.array(sol.station_vertices, dtype=np.int64)
        self.cost_breakdown_ = dict(sol.cost_breakdown)
        self.total_length_ = sol.total_length
        self.n_branching_units_ = sol.bu_count
        return self

    def score(self, X=None, y=None):
        """Negative total cost, so larger is better."""
        check_is_fitted(self, "solution_")
        return -self.cost_breakdown_["total"]
