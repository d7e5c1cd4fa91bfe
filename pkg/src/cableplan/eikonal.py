"""Fast marching on triangulated terrain.

The solver computes, for every vertex, the minimum over surface paths of
the line integral of the cable cost field, measured from the nearest source.
Updates are first order: a triangle update is used when the upwind
direction falls inside the triangle, and plain edge relaxations (length
times mean endpoint cost) are always applied as well, which also covers
obtuse triangles.
"""

from __future__ import annotations

import heapq
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .exceptions import InputError, SolverError
from .terrain import Manifold

log = logging.getLogger(__name__)

__all__ = [
    "DistanceField",
    "GeodesicPath",
    "fmm_solve",
    "all_pairs_costs",
    "trace_geodesic",
    "path_cost",
    "save_cost_matrix",
    "load_cost_matrix",
    "cached_all_pairs",
    "DEFAULT_MAX_VERTICES",
]

DEFAULT_MAX_VERTICES = 5000
DEFAULT_INIT_RADIUS = 8
CACHE_MAGIC = b"CPW1"


@dataclass(frozen=True, eq=False)
class DistanceField:
    source_ids: frozenset
    value: np.ndarray
    predecessor: np.ndarray
    order: np.ndarray  # vertices in acceptance order

    @property
    def accepted(self) -> np.ndarray:
        return np.isfinite(self.value)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Polyline from a target vertex back to a source, with its cost and length."""

    points: np.ndarray
    cost: float
    length: float
    fallback_steps: int = 0


# -- mesh adjacency ----------------------------------------------------------------


def _incidence(m: Manifold):
    """CSR map vertex -> incident triangles."""
    t = m.triangles
    flat = t.ravel()
    order = np.argsort(flat, kind="stable")
    tri_idx = (order // 3).astype(np.int64)
    counts = np.bincount(flat, minlength=m.n_vertices)
    ptr = np.zeros(m.n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, tri_idx


_ADJ_CACHE: dict = {}


def _adjacency(m: Manifold):
    key = id(m)
    hit = _ADJ_CACHE.get(key)
    if hit is not None and hit[0] is m:
        return hit[1]
    adj = _incidence(m)
    _ADJ_CACHE.clear()
    _ADJ_CACHE[key] = (m, adj)
    return adj


# -- numba kernel ------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _planar_wave(g11, g12, g22, ta, tb, f):
    """Solve ``(d - t)' G^-1 (d - t) = f^2`` for ``t``.

    Returns ``(t, la, lb)`` where ``la, lb`` are the barycentric weights of
    the point where the upwind ray leaves the triangle through edge AB, or
    ``t = inf`` when that ray misses the edge (causality violated).
    """
    det = g11 * g22 - g12 * g12
    if det <= 1e-12 * g11 * g22:
        return np.inf, 0.0, 0.0
    q11 = g22 / det
    q12 = -g12 / det
    q22 = g11 / det
    s1 = q11 + q12
    s2 = q12 + q22
    qa = s1 + s2
    qb = s1 * ta + s2 * tb
    qd = q11 * ta * ta + 2.0 * q12 * ta * tb + q22 * tb * tb
    disc = qb * qb - qa * (qd - f * f)
    if disc < 0.0:
        return np.inf, 0.0, 0.0
    t = (qb + math.sqrt(disc)) / qa
    if t < ta or t < tb:
        return np.inf, 0.0, 0.0
    a1 = -(q11 * (ta - t) + q12 * (tb - t))
    a2 = -(q12 * (ta - t) + q22 * (tb - t))
    if a1 < 0.0 or a2 < 0.0 or a1 + a2 <= 0.0:
        return np.inf, 0.0, 0.0
    return t, a1 / (a1 + a2), a2 / (a1 + a2)


@numba.njit(cache=True, nogil=True)
def _triangle_update(pc, pa, pb, ta, tb, fc, fa, fb):
    """First-order update of vertex C from accepted A and B.

    The local cost starts as the triangle mean, then is refined once to the
    trapezoid average between C and the point where the upwind ray crosses
    AB, so the update charges what a straight path along that ray costs.
    """
    e1x, e1y, e1z = pa[0] - pc[0], pa[1] - pc[1], pa[2] - pc[2]
    e2x, e2y, e2z = pb[0] - pc[0], pb[1] - pc[1], pb[2] - pc[2]
    g11 = e1x * e1x + e1y * e1y + e1z * e1z
    g12 = e1x * e2x + e1y * e2y + e1z * e2z
    g22 = e2x * e2x + e2y * e2y + e2z * e2z
    t, la, lb = _planar_wave(g11, g12, g22, ta, tb, (fa + fb + fc) / 3.0)
    if t == np.inf or (fa == fb and fb == fc):
        return t
    t2, la, lb = _planar_wave(g11, g12, g22, ta, tb, 0.5 * (fc + la * fa + lb * fb))
    return t2 if t2 < np.inf else t


@numba.njit(cache=True, nogil=True)
def _lifted_segment_cost(xyz, cost, rows, cols, a, b):
    """Exact cost of the surface path whose planar projection is the segment a-b.

    Inside each triangle both altitude and cost are linear, so splitting the
    segment at every grid line and diagonal crossing makes the trapezoid rule
    exact.
    """
    ra, ca = a // cols, a % cols
    rb, cb = b // cols, b % cols
    du = cb - ca
    dv = rb - ra
    ts = [0.0, 1.0]
    if du != 0:
        lo, hi = min(ca, cb), max(ca, cb)
        for k in range(lo + 1, hi):
            ts.append((k - ca) / du)
    if dv != 0:
        lo, hi = min(ra, rb), max(ra, rb)
        for k in range(lo + 1, hi):
            ts.append((k - ra) / dv)
    dd = du - dv  # diagonals are lines u - v = const
    if dd != 0:
        s0 = ca - ra
        s1 = cb - rb
        lo, hi = min(s0, s1), max(s0, s1)
        for k in range(lo + 1, hi):
            ts.append((k - s0) / dd)
    ts.sort()
    total = 0.0
    prev_t = -1.0
    px = py = pz = pf = 0.0
    for t in ts:
        if t - prev_t <= 1e-12 and prev_t >= 0.0:
            continue
        u = ca + t * du
        v = ra + t * dv
        # locate a triangle containing (u, v); any adjacent one gives the same
        # values on shared boundaries because the interpolant is continuous
        ci = min(max(int(math.floor(u)), 0), cols - 2)
        ri = min(max(int(math.floor(v)), 0), rows - 2)
        fu = u - ci
        fv = v - ri
        v00 = ri * cols + ci
        v10 = v00 + cols
        v11 = v10 + 1
        v01 = v00 + 1
        if fu <= fv:
            # triangle (v00, v10, v11): weights
            w0 = 1.0 - fv
            w1 = fv - fu
            w2 = fu
            i0, i1, i2 = v00, v10, v11
        else:
            w0 = 1.0 - fu
            w1 = fv
            w2 = fu - fv
            i0, i1, i2 = v00, v11, v01
        x = w0 * xyz[i0, 0] + w1 * xyz[i1, 0] + w2 * xyz[i2, 0]
        y = w0 * xyz[i0, 1] + w1 * xyz[i1, 1] + w2 * xyz[i2, 1]
        z = w0 * xyz[i0, 2] + w1 * xyz[i1, 2] + w2 * xyz[i2, 2]
        f = w0 * cost[i0] + w1 * cost[i1] + w2 * cost[i2]
        if prev_t >= 0.0:
            seg = math.sqrt((x - px) ** 2 + (y - py) ** 2 + (z - pz) ** 2)
            total += seg * 0.5 * (f + pf)
        px, py, pz, pf = x, y, z, f
        prev_t = t
    return total


@numba.njit(cache=True, nogil=True)
def _fmm_kernel(xyz, cost, tris, vt_ptr, vt_idx, sources, value, pred, order, rows, cols, radius):
    """Fast marching from ``sources``; fills ``value``, ``pred``, ``order`` in place.

    Returns the number of accepted vertices, or -1 if heap monotonicity
    was violated.
    """
    h = xyz.shape[0]
    accepted = np.zeros(h, dtype=np.bool_)
    for i in range(h):
        value[i] = np.inf
        pred[i] = -1
    heap = [(0.0, np.int64(-1))]
    heap.pop()
    for s in sources:
        value[s] = 0.0
        pred[s] = -1
        heapq.heappush(heap, (0.0, np.int64(s)))
    if radius > 0:
        for s in sources:
            rs, cs = s // cols, s % cols
            for r in range(max(0, rs - radius), min(rows, rs + radius + 1)):
                for c in range(max(0, cs - radius), min(cols, cs + radius + 1)):
                    v = r * cols + c
                    if value[v] == 0.0:
                        continue
                    t = _lifted_segment_cost(xyz, cost, rows, cols, s, v)
                    if t < value[v]:
                        value[v] = t
                        pred[v] = s
                        heapq.heappush(heap, (t, np.int64(v)))
    n_acc = 0
    last = 0.0
    while len(heap) > 0:
        val, a = heapq.heappop(heap)
        if accepted[a] or val > value[a]:
            continue
        if val < last:
            return -1
        last = val
        accepted[a] = True
        order[n_acc] = a
        n_acc += 1
        ta = value[a]
        for k in range(vt_ptr[a], vt_ptr[a + 1]):
            t = vt_idx[k]
            for j in range(3):
                c = tris[t, j]
                if c == a or accepted[c]:
                    continue
                b = tris[t, 0] + tris[t, 1] + tris[t, 2] - a - c
                dx = xyz[a, 0] - xyz[c, 0]
                dy = xyz[a, 1] - xyz[c, 1]
                dz = xyz[a, 2] - xyz[c, 2]
                cand = ta + math.sqrt(dx * dx + dy * dy + dz * dz) * 0.5 * (cost[a] + cost[c])
                via = a
                if accepted[b]:
                    tt = _triangle_update(xyz[c], xyz[a], xyz[b], ta, value[b], cost[c], cost[a], cost[b])
                    if tt < cand:
                        cand = tt
                        via = a if ta <= value[b] else b
                if cand < value[c]:
                    value[c] = cand
                    pred[c] = via
                    heapq.heappush(heap, (cand, np.int64(c)))
    return n_acc


@numba.njit(cache=True, nogil=True)
def _fmm_rows(xyz, cost, tris, vt_ptr, vt_idx, sources, out, rows, cols, radius):
    h = xyz.shape[0]
    pred = np.empty(h, dtype=np.int64)
    order = np.empty(h, dtype=np.int64)
    src = np.empty(1, dtype=np.int64)
    status = 0
    for i in range(sources.shape[0]):
        src[0] = sources[i]
        n = _fmm_kernel(xyz, cost, tris, vt_ptr, vt_idx, src, out[i], pred, order, rows, cols, radius)
        if n != h:
            status = -1
    return status


# -- public API --------------------------------------------------------------------


def _check_sources(m: Manifold, sources) -> np.ndarray:
    src = np.unique(np.asarray(list(sources) if not np.isscalar(sources) else [sources], dtype=np.int64))
    if src.size == 0:
        raise InputError("fmm_solve needs at least one source vertex")
    if src.min() < 0 or src.max() >= m.n_vertices:
        raise InputError(f"source index out of range [0, {m.n_vertices})")
    return src


def fmm_solve(m: Manifold, sources, init_radius: int = DEFAULT_INIT_RADIUS) -> DistanceField:
    """Weighted geodesic distance field from a set of source vertices.

    Vertices within ``init_radius`` grid steps (Chebyshev) of a source start
    from the cost of the straight surface path to that source, which removes
    most of the first-order error near point sources. ``init_radius=0``
    gives plain fast marching.

    Several sources are marched independently and combined by pointwise
    minimum (lowest source wins ties). A single shared front would let
    triangle updates mix two fronts where they meet, undershooting both.
    """
    src = _check_sources(m, sources)
    h = m.n_vertices
    ptr, idx = _adjacency(m)
    value = pred = order = None
    for s in src:
        v = np.empty(h)
        p = np.empty(h, dtype=np.int64)
        o = np.empty(h, dtype=np.int64)
        n = _fmm_kernel(
            m.vertices,
            m.cable_cost,
            m.triangles,
            ptr,
            idx,
            np.array([s], dtype=np.int64),
            v,
            p,
            o,
            m.rows,
            m.cols,
            int(init_radius),
        )
        if n < 0:
            raise SolverError("fast marching acceptance order was not monotone")
        if n != h:
            raise InputError(f"manifold is not connected: only {n} of {h} vertices reached")
        if value is None:
            value, pred, order = v, p, o
        else:
            better = v < value
            value = np.where(better, v, value)
            pred = np.where(better, p, pred)
    if src.size > 1:
        order = np.lexsort((np.arange(h), value))
    return DistanceField(frozenset(int(s) for s in src), value, pred, order)


def all_pairs_costs(
    m: Manifold,
    max_vertices: int = DEFAULT_MAX_VERTICES,
    threads: int = 1,
    init_radius: int = DEFAULT_INIT_RADIUS,
) -> np.ndarray:
    """Dense ``(H, H)`` matrix whose row ``p`` is the field from vertex ``p``."""
    h = m.n_vertices
    if h > max_vertices:
        raise InputError(
            f"all-pairs cost matrix for {h} vertices needs {h * h * 8 / 2**20:.0f} MiB; "
            f"limit is {max_vertices} vertices. Coarsen the raster or raise limits.max_vertices."
        )
    ptr, idx = _adjacency(m)
    out = np.empty((h, h))
    threads = max(1, int(threads))
    chunks = np.array_split(np.arange(h, dtype=np.int64), threads)

    def work(rows):
        if rows.size == 0:
            return 0
        block = out[rows[0] : rows[-1] + 1]
        return _fmm_rows(
            m.vertices, m.cable_cost, m.triangles, ptr, idx, rows, block, m.rows, m.cols, int(init_radius)
        )

    if threads == 1:
        status = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(threads) as pool:
            status = list(pool.map(work, chunks))
    if any(s != 0 for s in status):
        raise InputError("manifold is not connected; all-pairs costs undefined")
    return out


# -- geodesic tracing -------------------------------------------------------------


def _tri_gradient(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """In-plane surface gradient of the linear interpolant of ``t`` over triangle ``p``."""
    e1 = p[1] - p[0]
    e2 = p[2] - p[0]
    g = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    lam = np.linalg.solve(g, np.array([t[1] - t[0], t[2] - t[0]]))
    return lam[0] * e1 + lam[1] * e2


def _barycentric_xy(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    a, b, c = p[:, :2]
    mat = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    l1, l2 = np.linalg.solve(mat, q[:2] - a)
    return np.array([1.0 - l1 - l2, l1, l2])


def _lift(m: Manifold, q_xy: np.ndarray):
    tri = m.locate(q_xy[0], q_xy[1])
    p = m.vertices[m.triangles[tri]]
    lam = _barycentric_xy(p, q_xy)
    return tri, lam, lam @ p


def _interp(m: Manifold, field: np.ndarray, q_xy: np.ndarray) -> float:
    tri, lam, _ = _lift(m, q_xy)
    return float(lam @ field[m.triangles[tri]])


def _bary_xy(tri_xy: np.ndarray, q: np.ndarray):
    """Barycentric coordinates of ``q`` and their derivative matrix for a planar triangle."""
    a, b, c = tri_xy
    mat = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    inv = np.linalg.inv(mat)
    l12 = inv @ (q - a)
    lam = np.array([1.0 - l12[0] - l12[1], l12[0], l12[1]])
    dlam = np.vstack([-(inv[0] + inv[1]), inv[0], inv[1]])  # d lambda / d(xy)
    return lam, dlam


def _descent_options(m: Manifold, val: np.ndarray, q: np.ndarray, ptr, idx):
    """Feasible descent moves from surface point ``q`` (given in xy).

    Yields ``(rate, direction_xy, max_step_xy, corners)`` where ``rate`` is
    the change in field value per unit 3-D length (negative means descent).
    """
    tol = 1e-9
    home = m.locate(q[0], q[1])
    near = set()
    for v in m.triangles[home]:
        near.update(int(t) for t in idx[ptr[v] : ptr[v + 1]])
    options = []
    edges = set()
    for t in sorted(near):
        corners = m.triangles[t]
        p3 = m.vertices[corners]
        lam, dlam = _bary_xy(p3[:, :2], q)
        if lam.min() < -tol:
            continue
        on = np.abs(lam) <= tol
        # edges through q: opposite-vertex coordinate is zero
        if on.sum() == 1:
            k = int(np.argmax(on))
            edges.add(tuple(sorted((int(corners[(k + 1) % 3]), int(corners[(k + 2) % 3])))))
        elif on.sum() == 2:
            v = int(corners[int(np.argmin(on))])
            for u in corners:
                if u != v:
                    edges.add(tuple(sorted((v, int(u)))))
        g = _tri_gradient(p3, val[corners])
        gn = float(np.linalg.norm(g))
        d_xy = -g[:2]
        dn = float(np.hypot(*d_xy))
        if gn <= 0.0 or dn <= 0.0:
            continue
        d_xy = d_xy / dn
        rate_l = dlam @ d_xy
        if np.any(rate_l[on] < -1e-12):
            continue  # points out of this triangle immediately
        with np.errstate(divide="ignore"):
            steps = np.where(rate_l < -1e-15, np.maximum(lam, 0.0) / -rate_l, np.inf)
        t_exit = float(steps.min())
        if t_exit <= tol * m.cell_size:
            continue
        options.append((-gn, d_xy, t_exit, corners))
    for i, j in sorted(edges):
        pi, pj = m.vertices[i], m.vertices[j]
        lo, hi = (i, j) if (val[i], i) < (val[j], j) else (j, i)
        plo = m.vertices[lo]
        e = plo - (pj if lo == i else pi)
        length = float(np.linalg.norm(e))
        rate = (val[lo] - val[hi]) / length
        vec = plo[:2] - q
        dist = float(np.hypot(*vec))
        if rate >= 0.0 or dist <= tol * m.cell_size:
            continue
        options.append((rate, vec / dist, dist, np.array([lo, hi])))
    return options


def _straight_polyline(m: Manifold, q_xy: np.ndarray, s: int) -> list:
    """Surface points along the planar segment ``q -> s``, split at every mesh crossing."""
    x0, y0 = m.origin
    ua, va = (q_xy[0] - x0) / m.cell_size, (m.rows - 1) - (q_xy[1] - y0) / m.cell_size
    vb, ub = (float(c) for c in m.row_col(s))
    ts = {1.0}
    for a, b in ((ua, ub), (va, vb), (ua - va, ub - vb)):
        if a != b:
            lo, hi = sorted((a, b))
            ts.update((k - a) / (b - a) for k in range(int(np.floor(lo)) + 1, int(np.ceil(hi))))
    pts = []
    for t in sorted(t for t in ts if 0.0 < t < 1.0):
        u, v = ua + t * (ub - ua), va + t * (vb - va)
        pts.append(_lift(m, np.array([x0 + u * m.cell_size, y0 + (m.rows - 1 - v) * m.cell_size]))[2])
    pts.append(m.vertices[s].copy())
    return pts


def _direct_source(field: DistanceField, verts) -> int:
    """Source that initialised every vertex in ``verts`` directly, else -1."""
    pred = {int(field.predecessor[v]) for v in verts}
    if len(pred) == 1:
        s = pred.pop()
        if s in field.source_ids:
            return s
    return -1


def trace_geodesic(field: DistanceField, m: Manifold, target: int) -> GeodesicPath:
    """Steepest descent through ``field`` from ``target`` to a source.

    At each point every incident triangle interior and every incident mesh
    edge is a candidate direction; the steepest feasible one is taken, with
    the planar step capped at half a cell. When no candidate descends, the
    trace snaps to the lowest nearby vertex and follows fast-marching
    predecessors to the source.
    """
    h = m.n_vertices
    target = int(target)
    if not 0 <= target < h:
        raise InputError(f"target vertex {target} out of range")
    val = field.value
    sources = field.source_ids
    pts = [m.vertices[target].copy()]
    if target in sources:
        return GeodesicPath(np.array(pts), 0.0, 0.0)

    ptr, idx = _adjacency(m)
    cell = m.cell_size
    q = m.vertices[target, :2].copy()
    cur = float(val[target])
    fallback = 0
    max_steps = 10 * h
    for step_no in range(max_steps):
        tri = m.locate(q[0], q[1])
        corners = m.triangles[tri]
        src_here = [int(v) for v in corners if int(v) in sources]
        if src_here:
            s = min(src_here, key=lambda v: (float(np.hypot(*(m.vertices[v, :2] - q))), v))
            pts.append(m.vertices[s].copy())
            break
        # inside a source's start window the field is the straight-segment cost
        s = _direct_source(field, [target] if step_no == 0 else corners)
        if s >= 0:
            pts.extend(_straight_polyline(m, q, s))
            break
        options = _descent_options(m, val, q, ptr, idx)
        moved = False
        if options:
            rate, d_xy, t_max, ends = min(options, key=lambda o: o[0])
            if rate < 0.0:
                step = min(0.5 * cell, t_max)
                cand = q + step * d_xy
                if step == t_max and len(ends) == 2:
                    cand = m.vertices[ends[0], :2].copy()  # edge move ends exactly on a vertex
                cand_val = _interp(m, val, cand)
                if cand_val < cur - 1e-12 * max(cur, 1.0):
                    q, cur = cand, cand_val
                    pts.append(_lift(m, q)[2])
                    moved = True
        if not moved:
            fallback += 1
            v = int(min(corners, key=lambda c: (val[c], c)))
            while True:
                if not np.allclose(m.vertices[v], pts[-1]):
                    pts.append(m.vertices[v].copy())
                if v in sources:
                    break
                v = int(field.predecessor[v])
                fallback += 1
                if v < 0:
                    raise SolverError(f"predecessor chain from vertex {target} is broken")
            break
    else:
        raise SolverError(f"geodesic trace from vertex {target} did not terminate")

    pts = np.array(pts)
    cost, length = path_cost(m, pts)
    return GeodesicPath(pts, cost, length, fallback)


def path_cost(m: Manifold, points: np.ndarray) -> tuple:
    """Trapezoidal line integral of the interpolated cable cost along a 3-D polyline.

    Each segment is subdivided so that no piece is longer than a quarter cell.
    Returns ``(cost, length)``.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0, 0.0
    cost = 0.0
    length = 0.0
    fcache = m.cable_cost
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.linalg.norm(b - a))
        if seg == 0.0:
            continue
        n = max(1, int(np.ceil(np.hypot(*(b[:2] - a[:2])) / (0.25 * m.cell_size))))
        ts = np.linspace(0.0, 1.0, n + 1)
        fs = np.empty(n + 1)
        for i, t in enumerate(ts):
            q = a[:2] + t * (b[:2] - a[:2])
            tri, lam, _ = _lift(m, q)
            fs[i] = lam @ fcache[m.triangles[tri]]
        cost += seg * float(np.sum(0.5 * (fs[:-1] + fs[1:]))) / n
        length += seg
    return cost, length


# -- cost matrix cache ---------------------------------------------------------------


def save_cost_matrix(path, w: np.ndarray, manifold_hash: str) -> None:
    """Write ``w`` as ``CPW1`` + u64 H + H*H little-endian f64 + 32-byte SHA-256."""
    w = np.ascontiguousarray(w, dtype="<f8")
    h = w.shape[0]
    if w.shape != (h, h):
        raise InputError("cost matrix must be square")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<Q", h))
        fh.write(w.tobytes())
        fh.write(bytes.fromhex(manifold_hash))
    os.replace(tmp, path)


def load_cost_matrix(path, manifold_hash: str | None = None) -> np.ndarray | None:
    """Read a cost matrix; ``None`` if the file is missing, malformed, or stale."""
    path = Path(path)
    if not path.exists():
        return None
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != CACHE_MAGIC:
        log.warning("cache %s: bad magic, ignoring", path)
        return None
    (h,) = struct.unpack("<Q", raw[4:12])
    expected = 12 + 8 * h * h + 32
    if len(raw) != expected:
        log.warning("cache %s: size %d != expected %d, ignoring", path, len(raw), expected)
        return None
    digest = raw[-32:].hex()
    if manifold_hash is not None and digest != manifold_hash:
        log.warning("cache %s: manifold hash mismatch, recomputing", path)
        return None
    return np.frombuffer(raw, dtype="<f8", count=h * h, offset=12).reshape(h, h).astype(np.float64)


def cached_all_pairs(m: Manifold, cache_dir=None, max_vertices: int = DEFAULT_MAX_VERTICES, threads: int = 1):
    """All-pairs costs with an optional on-disk cache keyed by the manifold hash.

    Returns ``(w, path, reused)``.
    """
    digest = m.content_hash()
    if cache_dir is None:
        return all_pairs_costs(m, max_vertices, threads), None, False
    path = Path(cache_dir) / f"pairs-{digest[:16]}.cpw"
    w = load_cost_matrix(path, digest)
    if w is not None and w.shape[0] == m.n_vertices:
        log.info("reusing cached cost matrix %s", path)
        return w, path, True
    w = all_pairs_costs(m, max_vertices, threads)
    save_cost_matrix(path, w, digest)
    log.info("wrote cost matrix cache %s", path)
    return w, path, False
