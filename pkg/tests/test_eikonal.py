import logging
import struct

import numpy as np
import pytest
from _helpers import euclid, flat, resolved_instance, smooth_instance
from hypothesis import given
from hypothesis import strategies as st

from cableplan import InputError, all_pairs_costs, dijkstra_edges, fmm_solve, path_cost, trace_geodesic
from cableplan.eikonal import CACHE_MAGIC, cached_all_pairs, load_cost_matrix, save_cost_matrix

seeds = st.integers(0, 2**32 - 1)


def test_source_value_zero_and_finite():
    m = flat(9)
    f = fmm_solve(m, {40, 3})
    assert f.value[40] == 0.0 and f.value[3] == 0.0
    assert np.all(np.isfinite(f.value)) and f.value.min() >= 0


@pytest.mark.parametrize("bad", [set(), {-1}, {81}])
def test_bad_sources(bad):
    with pytest.raises(InputError):
        fmm_solve(flat(9), bad)


def test_corner_to_corner_flat():
    m = flat(21, cell=1.0)
    f = fmm_solve(m, {0})
    exact = euclid(m, 0, 440)
    assert abs(f.value[440] - exact) / exact <= 0.02


def test_acceptance_order_monotone():
    m = smooth_instance(np.random.default_rng(4), 12)
    f = fmm_solve(m, {17})
    assert sorted(f.order.tolist()) == list(range(m.n_vertices))
    assert np.all(np.diff(f.value[f.order]) >= 0)


@given(seeds)
def test_fmm_not_above_edge_dijkstra(seed):
    rng = np.random.default_rng(seed)
    m = smooth_instance(rng, 10)
    s = int(rng.integers(m.n_vertices))
    f = fmm_solve(m, {s}).value
    d = dijkstra_edges(m, s)
    assert np.all(f <= d * (1 + 1e-12) + 1e-9)


@given(seeds)
def test_edge_lipschitz(seed):
    rng = np.random.default_rng(seed)
    m = smooth_instance(rng, 9)
    val = fmm_solve(m, {int(rng.integers(m.n_vertices))}).value
    t = m.triangles
    for i, j in ((0, 1), (1, 2), (0, 2)):
        a, b = t[:, i], t[:, j]
        length = np.linalg.norm(m.vertices[a] - m.vertices[b], axis=1)
        bound = length * np.maximum(m.cable_cost[a], m.cable_cost[b])
        assert np.all(np.abs(val[a] - val[b]) <= bound * (1 + 1e-9))


@given(seeds, st.integers(2, 4))
def test_multi_source_is_min_of_singles(seed, k):
    rng = np.random.default_rng(seed)
    m = smooth_instance(rng, 10)
    src = rng.choice(m.n_vertices, k, replace=False)
    multi = fmm_solve(m, set(src.tolist())).value
    single = np.min([fmm_solve(m, {int(s)}).value for s in src], axis=0)
    np.testing.assert_allclose(multi, single, rtol=1e-9, atol=0)


def test_flat_uniform_exact_along_axes():
    m = flat(11, cell=3.0)
    f = fmm_solve(m, {0})
    for c in range(11):
        assert f.value[c] == pytest.approx(3.0 * c, rel=1e-12)


# -- all pairs -----------------------------------------------------------------------


def test_all_pairs_rows_and_diagonal():
    m = smooth_instance(np.random.default_rng(5), 7)
    w = all_pairs_costs(m)
    assert np.all(np.diag(w) == 0)
    for p in (0, 13, 48):
        assert np.array_equal(w[p], fmm_solve(m, {p}).value)


def test_all_pairs_threads_identical():
    m = smooth_instance(np.random.default_rng(6), 8)
    assert np.array_equal(all_pairs_costs(m, threads=1), all_pairs_costs(m, threads=3))


def test_symmetry_on_flat_mesh():
    w = all_pairs_costs(flat(12))
    assert np.all(np.abs(w - w.T) <= 0.02 * np.maximum(w, w.T))


def test_triangle_inequality_flat_15():
    w = all_pairs_costs(flat(15))
    # w[p, r] <= w[p, q] + w[q, r] + eps, scanned over all triples
    slack = w[:, None, :] - (w[:, :, None] + w[None, :, :])
    assert np.all(slack <= 0.02 * w[:, None, :] + 1e-9)


def test_vertex_ceiling():
    with pytest.raises(InputError, match="limit is 50 vertices"):
        all_pairs_costs(flat(8), max_vertices=50)


# -- tracing -------------------------------------------------------------------------


def test_trace_from_source_is_single_point():
    m = flat(6)
    p = trace_geodesic(fmm_solve(m, {7}), m, 7)
    assert len(p.points) == 1 and p.cost == 0.0 and p.length == 0.0


def test_trace_same_row_straight():
    m = flat(25, cell=100.0)
    a, b = m.vertex_index(12, 2), m.vertex_index(12, 22)
    p = trace_geodesic(fmm_solve(m, {a}), m, b)
    exact = euclid(m, a, b)
    assert abs(p.length - exact) <= 0.02 * exact
    np.testing.assert_array_equal(p.points[0], m.vertices[b])
    np.testing.assert_array_equal(p.points[-1], m.vertices[a])


@given(seeds)
def test_trace_cost_matches_field(seed):
    rng = np.random.default_rng(seed)
    m = resolved_instance(rng, 16)
    s, t = (int(v) for v in rng.choice(m.n_vertices, 2, replace=False))
    field = fmm_solve(m, {s})
    p = trace_geodesic(field, m, t)
    assert np.allclose(p.points[-1], m.vertices[s])
    assert abs(p.cost - field.value[t]) <= 0.03 * field.value[t]


def test_trace_reaches_nearest_of_several_sources():
    m = flat(15)
    a, b = m.vertex_index(2, 2), m.vertex_index(12, 12)
    p = trace_geodesic(fmm_solve(m, {a, b}), m, m.vertex_index(10, 11))
    np.testing.assert_array_equal(p.points[-1], m.vertices[b])


def test_path_cost_integrates_linear_cost():
    m = flat(3, cell=1.0).with_costs(cable_cost=np.array([1.0, 2.0, 3.0] * 3))
    # along the top row f goes 1 -> 3 linearly: integral = 4
    cost, length = path_cost(m, m.vertices[[0, 2]])
    assert cost == pytest.approx(4.0) and length == pytest.approx(2.0)


# -- cache ---------------------------------------------------------------------------


def test_cache_layout_and_roundtrip(tmp_path):
    m = flat(5)
    w = all_pairs_costs(m)
    path = tmp_path / "w.cpw"
    save_cost_matrix(path, w, m.content_hash())
    raw = path.read_bytes()
    assert raw[:4] == CACHE_MAGIC
    assert struct.unpack("<Q", raw[4:12])[0] == 25
    assert len(raw) == 12 + 25 * 25 * 8 + 32
    assert np.array_equal(np.frombuffer(raw[12:-32], "<f8").reshape(25, 25), w)
    assert np.array_equal(load_cost_matrix(path, m.content_hash()), w)


def test_cache_stale_or_corrupt(tmp_path, caplog):
    m = flat(4)
    path = tmp_path / "w.cpw"
    save_cost_matrix(path, all_pairs_costs(m), m.content_hash())
    other = m.with_costs(cable_cost=np.full(16, 2.0))
    with caplog.at_level(logging.WARNING):
        assert load_cost_matrix(path, other.content_hash()) is None
    assert "hash mismatch" in caplog.text
    path.write_bytes(path.read_bytes()[:-5])
    assert load_cost_matrix(path) is None
    path.write_bytes(b"XXXX" + b"\0" * 40)
    assert load_cost_matrix(path) is None


def test_cached_all_pairs_reuses(tmp_path, caplog):
    m = flat(6)
    w1, path, reused = cached_all_pairs(m, tmp_path)
    assert not reused
    first = path.read_bytes()
    with caplog.at_level(logging.INFO, logger="cableplan"):
        w2, path2, reused2 = cached_all_pairs(m, tmp_path)
    assert reused2 and path2 == path and np.array_equal(w1, w2)
    assert "reusing cached cost matrix" in caplog.text
    assert path.read_bytes() == first
    # a changed cable cost invalidates by file name and hash
    _, path3, reused3 = cached_all_pairs(m.with_costs(cable_cost=np.full(36, 2.0)), tmp_path)
    assert not reused3 and path3 != path
