"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import InputError
from .solver import RegionSpec, normalise_mode
from .terrain import Manifold


def check_raster(raster) -> np.ndarray:
    a = np.asarray(raster, dtype=float)
    if a.ndim != 2:
        raise InputError(f"raster must be 2-D, got shape {a.shape}")
    if min(a.shape) < 2:
        raise InputError(f"raster needs at least 2 rows and 2 columns, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("raster contains non-finite values")
    return a


def check_manifold(m) -> Manifold:
    if not isinstance(m, Manifold):
        raise InputError(f"expected a Manifold, got {type(m).__name__}")
    return m


def check_vertices(vertices, n_vertices: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(vertices))
    if v.size == 0:
        raise InputError("no vertices given")
    if not np.issubdtype(v.dtype, np.integer):
        if not np.all(np.equal(np.mod(v, 1), 0)):
            raise InputError("vertex indices must be integers")
        v = v.astype(np.int64)
    if v.min() < 0 or v.max() >= n_vertices:
        raise InputError(f"vertex index out of range [0, {n_vertices})")
    return v.astype(np.int64)


def _as_region(r, i: int) -> RegionSpec:
    if isinstance(r, RegionSpec):
        return r
    if isinstance(r, numbers.Integral):
        return RegionSpec.point(int(r), name=f"region{i}")
    if isinstance(r, dict):
        return RegionSpec(tuple(r["candidates"]), r.get("name", f"region{i}"))
    return RegionSpec(tuple(r), name=f"region{i}")


def check_regions(regions, n_vertices: int) -> list:
    """Accept RegionSpecs, bare vertex ints, ``[(vertex, cost), ...]`` lists or dicts."""
    out = [_as_region(r, i) for i, r in enumerate(regions)]
    if len(out) < 2:
        raise InputError(f"need at least two regions, got {len(out)}")
    for r in out:
        check_vertices(r.vertices, n_vertices)
    return out


def check_threads(n) -> int:
    if not isinstance(n, numbers.Integral) or n < 1:
        raise InputError(f"threads must be a positive integer, got {n!r}")
    return int(n)


check_mode = normalise_mode
