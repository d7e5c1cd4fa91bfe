"""Instance builders shared by the test modules."""

import numpy as np
from scipy.ndimage import gaussian_filter

from cableplan import build_manifold


def flat(n, cell=10.0, depth=-100.0, cols=None):
    return build_manifold(np.full((n, cols or n), depth), cell)


def smooth_instance(rng, n, cell=100.0, relief=500.0, cost_spread=1.0, bu=None):
    """Smooth random seafloor with a smooth positive cable-cost field."""
    z = -1000.0 + gaussian_filter(rng.normal(size=(n, n)), 2.0) * relief
    m = build_manifold(z, cell)
    f = 1.0 + cost_spread * np.abs(gaussian_filter(rng.normal(size=(n, n)), 1.5))
    b = np.zeros(n * n) if bu is None else bu
    return m.with_costs(cable_cost=f.ravel(), bu_cost=b)


def euclid(m, a, b):
    return float(np.linalg.norm(m.vertices[a] - m.vertices[b]))


def resolved_instance(rng, n, cell=100.0):
    """Terrain and cost varying over several cells, so first-order marching resolves them."""
    z = -1000.0 + gaussian_filter(rng.normal(size=(n, n)), 4.0) * 500.0
    g = gaussian_filter(rng.normal(size=(n, n)), 5.0)
    f = 1.0 + 0.3 * np.abs(g) / g.std()
    return build_manifold(z, cell).with_costs(cable_cost=f.ravel())


def point_tables(m, terminals, topology, w=None, station_costs=None):
    """DP cost tables for one-candidate regions at ``terminals``."""
    from cableplan import RegionSpec, all_pairs_costs, prepare_tables, region_distance

    w = all_pairs_costs(m) if w is None else w
    costs = station_costs or [0.0] * len(terminals)
    rds = [region_distance(m, w, RegionSpec.point(v, station_cost=c)) for v, c in zip(terminals, costs)]
    return prepare_tables(topology, rds, np.minimum(w, w.T), m.bu_cost)
