"""Triangulated terrain surfaces and per-vertex cost fields.

A :class:`Manifold` is built from a regular elevation raster. Every raster
cell is split into two triangles along the same diagonal, and each grid
node becomes a mesh vertex ``(x, y, z)`` with ``z`` taken from the raster.
Row 0 of the raster is the northern edge, matching ESRI ASCII grids.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import InputError

log = logging.getLogger(__name__)

__all__ = [
    "Manifold",
    "CostZone",
    "build_manifold",
    "apply_cost_model",
    "points_in_polygon",
    "read_esri_ascii",
    "write_esri_ascii",
    "read_xyz",
    "read_raster",
]


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Manifold:
    """Piecewise-linear terrain surface with cable and branching-unit costs.

    Arrays are read-only so a manifold can be shared freely between workers.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    cable_cost: np.ndarray
    bu_cost: np.ndarray
    rows: int
    cols: int
    cell_size: float
    origin: tuple = (0.0, 0.0)
    _hash: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, np.float64))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "cable_cost", _frozen(self.cable_cost, np.float64))
        object.__setattr__(self, "bu_cost", _frozen(self.bu_cost, np.float64))
        h = self.vertices.shape[0]
        for name in ("cable_cost", "bu_cost"):
            a = getattr(self, name)
            if a.shape != (h,):
                raise InputError(f"{name} must have one value per vertex ({h}), got shape {a.shape}")
            if not np.all(np.isfinite(a)) or a.min() < 0:
                raise InputError(f"{name} must be finite and non-negative")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    def with_costs(self, cable_cost=None, bu_cost=None) -> "Manifold":
        return dataclasses.replace(
            self,
            cable_cost=self.cable_cost if cable_cost is None else cable_cost,
            bu_cost=self.bu_cost if bu_cost is None else bu_cost,
            _hash=[],
        )

    def vertex_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise InputError(f"grid cell ({row}, {col}) outside {self.rows}x{self.cols} raster")
        return int(row) * self.cols + int(col)

    def row_col(self, vertex: int) -> tuple:
        return divmod(int(vertex), self.cols)

    def nearest_vertex(self, x: float, y: float) -> tuple:
        """Snap a projected point to the closest grid node.

        Returns ``(vertex, offset)`` where ``offset`` is the planar snapping
        distance in meters.
        """
        x0, y0 = self.origin
        col = int(np.clip(np.rint((x - x0) / self.cell_size), 0, self.cols - 1))
        row = int(np.clip(np.rint((self.rows - 1) - (y - y0) / self.cell_size), 0, self.rows - 1))
        v = self.vertex_index(row, col)
        vx, vy = self.vertices[v, :2]
        return v, float(np.hypot(vx - x, vy - y))

    def locate(self, x: float, y: float) -> int:
        """Index of the triangle whose planar footprint contains ``(x, y)``.

        Points outside the raster footprint are clamped to the border cell.
        """
        x0, y0 = self.origin
        u = (x - x0) / self.cell_size
        v = (self.rows - 1) - (y - y0) / self.cell_size
        ci = min(max(int(np.floor(u)), 0), self.cols - 2)
        ri = min(max(int(np.floor(v)), 0), self.rows - 2)
        lower = (u - ci) <= (v - ri)
        return 2 * (ri * (self.cols - 1) + ci) + (0 if lower else 1)

    def edge_lengths(self) -> np.ndarray:
        t = self.triangles
        p = self.vertices
        return np.stack(
            [np.linalg.norm(p[t[:, i]] - p[t[:, (i + 1) % 3]], axis=1) for i in range(3)],
            axis=1,
        )

    def surface_area(self) -> float:
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return float(0.5 * np.linalg.norm(cross, axis=1).sum())

    def is_connected(self) -> bool:
        t = self.triangles
        src = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
        dst = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
        h = self.n_vertices
        graph = coo_matrix((np.ones(src.size), (src, dst)), shape=(h, h))
        n, _ = connected_components(graph, directed=False)
        return n == 1

    def content_hash(self) -> str:
        """SHA-256 over geometry and cable cost (everything pairwise costs depend on)."""
        if not self._hash:
            h = hashlib.sha256()
            h.update(np.array([self.rows, self.cols], dtype="<i8").tobytes())
            for a in (self.vertices, self.cable_cost):
                h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
            self._hash.append(h.hexdigest())
        return self._hash[0]


@dataclass(frozen=True)
class CostZone:
    """Polygonal area with overridden branching-unit (and optionally cable) cost."""

    polygon: tuple
    bu_cost_override: float
    cable_cost_override: Optional[float] = None

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2:
            raise InputError("zone polygon must be a sequence of (x, y) corners")
        if poly.shape[0] >= 2 and np.allclose(poly[0], poly[-1]):
            poly = poly[:-1]
        if poly.shape[0] <= 2:
            raise InputError(f"degenerate zone polygon with {poly.shape[0]} corners")
        if not np.all(np.isfinite(poly)):
            raise InputError("zone polygon has non-finite corners")
        if _polygon_self_intersects(poly):
            raise InputError("zone polygon is self-intersecting")
        if self.bu_cost_override < 0 or (
            self.cable_cost_override is not None and self.cable_cost_override < 0
        ):
            raise InputError("zone cost overrides must be non-negative")
        object.__setattr__(self, "polygon", tuple(map(tuple, poly.tolist())))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    # collinear overlap
    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


def _polygon_self_intersects(poly: np.ndarray) -> bool:
    n = len(poly)
    area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if abs(area) == 0.0:
        return True
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a corner
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                return True
    return False


def points_in_polygon(points: np.ndarray, polygon: Sequence) -> np.ndarray:
    """Even-odd ray casting; returns a boolean mask over ``points[:, :2]``."""
    pts = np.asarray(points, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < x_cross)
        xj, yj = xi, yi
    return inside


def build_manifold(raster, cell_size: float, origin=(0.0, 0.0)) -> Manifold:
    """Triangulate an elevation raster.

    Parameters
    ----------
    raster : array-like of shape (rows, cols)
        Altitudes in meters, row 0 northernmost. Negative values are seabed.
    cell_size : float
        Grid spacing in meters.
    origin : (float, float)
        Projected coordinates of the south-west grid node.

    Costs are initialised to unit cable cost and zero BU cost; use
    :func:`apply_cost_model` to set them.
    """
    z = np.asarray(raster, dtype=float)
    if z.size == 0:
        raise InputError("empty raster")
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
        raise InputError(f"raster must be 2-D with at least 2 rows and 2 columns, got shape {z.shape}")
    if not np.isfinite(cell_size) or cell_size <= 0:
        raise InputError(f"cell_size must be positive, got {cell_size}")
    bad = np.argwhere(~np.isfinite(z))
    if len(bad):
        r, c = bad[0]
        raise InputError(f"non-finite altitude at cell (row={r}, col={c})")

    rows, cols = z.shape
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    x = origin[0] + cc * cell_size
    y = origin[1] + (rows - 1 - rr) * cell_size
    vertices = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    r, c = np.meshgrid(np.arange(rows - 1), np.arange(cols - 1), indexing="ij")
    v00 = (r * cols + c).ravel()
    v01 = v00 + 1
    v10 = v00 + cols
    v11 = v10 + 1
    triangles = np.empty((2 * v00.size, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    h = rows * cols
    return Manifold(
        vertices=vertices,
        triangles=triangles,
        cable_cost=np.ones(h),
        bu_cost=np.zeros(h),
        rows=rows,
        cols=cols,
        cell_size=float(cell_size),
        origin=(float(origin[0]), float(origin[1])),
    )


def apply_cost_model(
    m: Manifold,
    base_cable_cost: float,
    base_bu_cost: float,
    zones: Sequence[CostZone] = (),
    land_penalty: float = 1e3,
) -> Manifold:
    """Return a copy of ``m`` with cable and BU cost fields filled in.

    Land vertices (``z > 0``) have their cable cost multiplied by
    ``land_penalty``. Zones are applied in order, so later zones shadow
    earlier ones where they overlap.
    """
    for name, val in (
        ("base_cable_cost", base_cable_cost),
        ("base_bu_cost", base_bu_cost),
        ("land_penalty", land_penalty),
    ):
        if not np.isfinite(val) or val < 0:
            raise InputError(f"{name} must be finite and non-negative, got {val}")

    h = m.n_vertices
    cable = np.full(h, float(base_cable_cost))
    bu = np.full(h, float(base_bu_cost))
    for zone in zones:
        if not isinstance(zone, CostZone):
            zone = CostZone(**zone)
        inside = points_in_polygon(m.vertices, zone.polygon)
        bu[inside] = zone.bu_cost_override
        if zone.cable_cost_override is not None:
            cable[inside] = zone.cable_cost_override
    land = m.vertices[:, 2] > 0
    cable[land] *= land_penalty
    if not (np.all(np.isfinite(cable)) and np.all(np.isfinite(bu))):
        raise InputError("cost model produced non-finite costs")
    log.debug("cost model: %d land vertices, %d zones", int(land.sum()), len(zones))
    return m.with_costs(cable_cost=cable, bu_cost=bu)


# -- raster IO -----------------------------------------------------------------

_ESRI_KEYS = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter", "cellsize", "nodata_value"}


def read_esri_ascii(path) -> tuple:
    """Read an ESRI ASCII grid. Returns ``(raster, cell_size, origin)``."""
    text = Path(path).read_text().split("\n")
    header = {}
    i = 0
    while i < len(text):
        parts = text[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0].lower()
        if key not in _ESRI_KEYS:
            break
        header[key] = float(parts[1])
        i += 1
    for req in ("ncols", "nrows", "cellsize"):
        if req not in header:
            raise InputError(f"{path}: missing ESRI header field '{req}'")
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    values = np.array(" ".join(text[i:]).split(), dtype=float)
    if values.size != nrows * ncols:
        raise InputError(f"{path}: expected {nrows * ncols} values, found {values.size}")
    raster = values.reshape(nrows, ncols)
    nodata = header.get("nodata_value")
    if nodata is not None:
        bad = np.argwhere(raster == nodata)
        if len(bad):
            r, c = bad[0]
            raise InputError(f"{path}: NODATA at cell (row={r}, col={c}); rasters must be fully covered")
    cs = header["cellsize"]
    if "xllcenter" in header:
        origin = (header["xllcenter"], header.get("yllcenter", 0.0))
    else:
        origin = (header.get("xllcorner", 0.0) + cs / 2, header.get("yllcorner", 0.0) + cs / 2)
    return raster, cs, origin


def write_esri_ascii(path, raster, cell_size: float, origin=(0.0, 0.0), nodata=-9999.0) -> None:
    raster = np.asarray(raster, dtype=float)
    nrows, ncols = raster.shape
    lines = [
        f"ncols {ncols}",
        f"nrows {nrows}",
        f"xllcenter {origin[0]!r}",
        f"yllcenter {origin[1]!r}",
        f"cellsize {cell_size!r}",
        f"NODATA_value {nodata!r}",
    ]
    lines += [" ".join(repr(float(v)) for v in row) for row in raster]
    Path(path).write_text("\n".join(lines) + "\n")


def read_xyz(path) -> tuple:
    """Read whitespace-separated ``x y z`` triplets on a complete regular grid."""
    data = np.loadtxt(path, dtype=float, ndmin=2)
    if data.shape[1] != 3:
        raise InputError(f"{path}: expected 3 columns (x y z), got {data.shape[1]}")
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if len(xs) < 2 or len(ys) < 2:
        raise InputError(f"{path}: need at least 2 distinct x and y values")
    dx = np.diff(xs)
    dy = np.diff(ys)
    cs = dx[0]
    if not (np.allclose(dx, cs) and np.allclose(dy, cs)):
        raise InputError(f"{path}: points are not on a regular square grid")
    if data.shape[0] != len(xs) * len(ys):
        raise InputError(f"{path}: grid incomplete ({data.shape[0]} of {len(xs) * len(ys)} points)")
    raster = np.full((len(ys), len(xs)), np.nan)
    col = np.rint((data[:, 0] - xs[0]) / cs).astype(int)
    row = len(ys) - 1 - np.rint((data[:, 1] - ys[0]) / cs).astype(int)
    raster[row, col] = data[:, 2]
    if np.isnan(raster).any():
        raise InputError(f"{path}: duplicate or missing grid points")
    return raster, float(cs), (float(xs[0]), float(ys[0]))


def read_raster(path, fmt: str = "esri") -> tuple:
    fmt = fmt.lower()
    if fmt in ("esri", "asc", "esri_ascii"):
        return read_esri_ascii(path)
    if fmt == "xyz":
        return read_xyz(path)
    raise InputError(f"unknown raster format '{fmt}' (expected 'esri' or 'xyz')")
