"""Cable network design on terrain manifolds.

Fast marching gives geodesic cable costs over a triangulated raster; a
tree dynamic program places branching units for every full Steiner
topology and keeps the cheapest network.
"""

from .eikonal import (
    DistanceField,
    GeodesicPath,
    all_pairs_costs,
    cached_all_pairs,
    fmm_solve,
    load_cost_matrix,
    path_cost,
    save_cost_matrix,
    trace_geodesic,
)
from .estimators import CableNetworkDesigner, FastMarchingDistance, TerrainMesher
from .exceptions import ConsistencyError, InputError, SolverError
from .oracle import brute_force_placements, dijkstra_edges
from .solver import (
    MERGE,
    THREE,
    NetworkSolution,
    RegionSpec,
    Scenario,
    dp_least_cost_system,
    evaluate_solution,
    prepare_tables,
    region_distance,
    solve_network,
    terminal_barc,
)
from .terrain import CostZone, Manifold, apply_cost_model, build_manifold, read_raster
from .topology import (
    SteinerTopology,
    build_skeleton,
    count_full_topologies,
    enumerate_full_topologies,
    merge_coincident,
)

__version__ = "0.1.0"

__all__ = [
    "DistanceField",
    "GeodesicPath",
    "all_pairs_costs",
    "cached_all_pairs",
    "fmm_solve",
    "load_cost_matrix",
    "path_cost",
    "save_cost_matrix",
    "trace_geodesic",
    "CableNetworkDesigner",
    "FastMarchingDistance",
    "TerrainMesher",
    "ConsistencyError",
    "InputError",
    "SolverError",
    "brute_force_placements",
    "dijkstra_edges",
    "MERGE",
    "THREE",
    "NetworkSolution",
    "RegionSpec",
    "Scenario",
    "dp_least_cost_system",
    "evaluate_solution",
    "prepare_tables",
    "region_distance",
    "solve_network",
    "terminal_barc",
    "CostZone",
    "Manifold",
    "apply_cost_model",
    "build_manifold",
    "read_raster",
    "SteinerTopology",
    "build_skeleton",
    "count_full_topologies",
    "enumerate_full_topologies",
    "merge_coincident",
]
