import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainclose.chain_engine import (BoxGrid, MemoryGuardError, NotAttainableError, PseudoOrbit,
                                     box_path, build_chain_graph, chain_attainable,
                                     chain_recurrent_classes, class_of, fine_chain, random_pseudo_orbit,
                                     read_classes_csv, refine, strongly_connected, write_classes_csv)
from chainclose.models import torus_dist
from tests.oracles import graphs


@pytest.fixture(scope="module")
def g8(product, frozen):
    return build_chain_graph(product, 8, frozen["graph_res8"]["epsilon"])


def _edge_set(g):
    a = g.adjacency.tocoo()
    return set(zip(a.row.tolist(), a.col.tolist()))


def test_grid_bijection():
    g = BoxGrid(8)
    idx = np.arange(g.n_boxes)
    assert np.array_equal(g.flat(g.unflat(idx)), idx)
    assert np.array_equal(g.index(g.center(idx)), idx)
    assert g.diameter == pytest.approx(math.sqrt(3) / 8)


@pytest.mark.parametrize("r", [3, 12, 512])
def test_grid_rejects(r):
    with pytest.raises((ValueError, MemoryGuardError)):
        BoxGrid(r)


def test_resolution_two_every_box_has_successor(cat_skew):
    g = build_chain_graph(cat_skew, 2, 0.9)
    assert g.grid.n_boxes == 8
    assert np.all(np.diff(g.adjacency.indptr) >= 1)


def test_eps_below_diameter_rejected(product):
    with pytest.raises(ValueError, match="diameter"):
        build_chain_graph(product, 16, 0.1)


def test_edges_match_brute_force(frozen, g8, two_circle):
    fz = frozen["graph_res8"]
    assert g8.n_edges == fz["product_edges"]
    from tests.oracles.freeze import _edge_hash

    assert _edge_hash(_edge_set(g8)) == fz["product_edge_hash"]
    g2 = build_chain_graph(two_circle, 8, fz["epsilon"])
    assert g2.n_edges == fz["two_circle_edges"]
    assert _edge_hash(_edge_set(g2)) == fz["two_circle_edge_hash"]


def test_scc_matches_networkx(frozen, g8):
    n, labels = strongly_connected(g8)
    sizes = sorted(np.bincount(labels).tolist())
    assert sizes == frozen["graph_res8"]["product_scc_sizes"]
    classes = chain_recurrent_classes(g8)
    assert [len(c) for c in classes] == frozen["graph_res8"]["product_scc_sizes"]


def test_scc_partition_networkx_random_system(cat_skew):
    g = build_chain_graph(cat_skew, 4, 0.5)
    n, labels = strongly_connected(g)
    ours = sorted(tuple(np.flatnonzero(labels == c).tolist()) for c in range(n)
                  if (labels == c).sum() > 1 or g.adjacency[np.flatnonzero(labels == c)[0],
                                                               np.flatnonzero(labels == c)[0]])
    assert ours == graphs.scc_partition(g.grid.n_boxes, _edge_set(g))


def test_bfs_hops_match_networkx(frozen, g8):
    path = box_path(g8, [0, 0, 0], [0, 0, 0.5])
    assert len(path) - 1 == frozen["graph_res8"]["product_hops_0_to_half"]


def test_direct_edge_gives_two_point_orbit(cat_skew):
    g = build_chain_graph(cat_skew, 16, 0.15)
    x = np.array([0.31, 0.62, 0.17])
    po = chain_attainable(g, x, cat_skew.apply(x))
    assert len(po) == 2 and po.max_jump(cat_skew) < 1e-15


def test_true_orbits_are_paths(cat_skew):
    g = build_chain_graph(cat_skew, 16, 0.15)
    pts = np.random.default_rng(3).random((200, 3))
    src = g.grid.index(pts)
    dst = g.grid.index(cat_skew.apply(pts))
    A = g.adjacency
    assert all(A[s, d] for s, d in zip(src, dst))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(*[st.floats(0, 0.999)] * 3), min_size=3, max_size=3))
def test_transitivity_by_concatenation(pts):
    from chainclose.presets import get_preset

    g = _graph_cache(get_preset("two_circle").system)
    x, y, z = (np.array(p) for p in pts)
    a, b = chain_attainable(g, x, y), chain_attainable(g, y, z)
    if a is not None and b is not None:
        assert chain_attainable(g, x, z) is not None


_cache = {}


def _graph_cache(system):
    if system.name not in _cache:
        _cache[system.name] = build_chain_graph(system, 16, 0.12)
    return _cache[system.name]


def test_witness_bound_asserted(product):
    g = build_chain_graph(product, 16, 0.12)
    for seed in range(10):
        x, y = np.random.default_rng(seed).random((2, 3))
        po = chain_attainable(g, x, y)
        assert po is not None
        assert po.max_jump(product) < g.witness_bound


def test_cross_class_unreachable():
    from chainclose.lab import _graph

    g = _graph("two_circle", 64, 0.03)  # shared with the lab tests
    # from the attracting circle theta = 1/2 there is no way back to theta = 0
    assert chain_attainable(g, [0.1, 0.2, 0.5], [0.1, 0.2, 0.0]) is None
    assert chain_attainable(g, [0.1, 0.2, 0.0], [0.1, 0.2, 0.5]) is not None


def test_refine_doubles(product):
    g = build_chain_graph(product, 2, 0.9)
    r = refine(g)
    assert r.grid.n_boxes == 64 and r.epsilon == g.epsilon


def test_product_stays_connected_under_refinement(product):
    g = build_chain_graph(product, 16, 0.12)
    assert len(chain_recurrent_classes(g)) == 1
    g = refine(g)  # resolution 32; at 64 this epsilon needs billions of edges
    assert strongly_connected(g)[0] == 1


def test_classes_csv_roundtrip(tmp_path, two_circle):
    g = _graph_cache(two_circle)
    classes = chain_recurrent_classes(g)
    p = tmp_path / "c.csv"
    rows = write_classes_csv(g, classes, p)
    assert rows == sum(len(c) for c in classes)
    back = read_classes_csv(p)
    for k, c in enumerate(classes):
        assert np.array_equal(back[k], c.boxes)
    assert class_of(g, classes, [0.5, 0.5, 0.5]) is not None


def test_pseudo_orbit_check():
    po = PseudoOrbit(np.zeros((2, 3)), 0.1)
    from chainclose.presets import get_preset

    po.check(get_preset("product").system)
    bad = PseudoOrbit(np.array([[0, 0, 0], [0, 0, 0.3]]), 0.1)
    with pytest.raises(AssertionError):
        bad.check(get_preset("product").system)


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.02])
def test_fine_chain_product(product, eps):
    x, y = np.array([0.1, 0.7, 0.3]), np.array([0.8, 0.25, 0.9])
    po = fine_chain(product, x, y, eps)
    assert np.array_equal(po.points[0], x) and np.array_equal(po.points[-1], y)
    assert po.max_jump(product) < eps


def test_fine_chain_periodic_winding(product):
    x = np.array([0.2, 0.3, 0.1])
    po = fine_chain(product, x, x, 0.05, winding=1)
    assert np.array_equal(po.points[0], po.points[-1])
    assert len(po) - 1 >= 1 / (0.45 * 0.05)


def test_fine_chain_unreachable(two_circle):
    with pytest.raises(NotAttainableError):
        fine_chain(two_circle, [0.1, 0.1, 0.5], [0.1, 0.1, 0.0], 0.02, n_max=100)


def test_random_pseudo_orbit(cat_skew):
    po = random_pseudo_orbit(cat_skew, [0.1, 0.2, 0.3], 30, 0.05, np.random.default_rng(0))
    assert len(po) == 31
    assert po.max_jump(cat_skew) == pytest.approx(0.9 * 0.05, rel=1e-9)
    assert torus_dist(po.points[0], [0.1, 0.2, 0.3]) == 0


def test_edge_memory_guard(product):
    with pytest.raises(MemoryGuardError):
        build_chain_graph(product, 64, 0.12)


def test_two_circle_class_count_non_decreasing(two_circle):
    g = _graph_cache(two_circle)
    r = refine(g)
    assert len(chain_recurrent_classes(r)) >= len(chain_recurrent_classes(g))
    with pytest.raises(MemoryGuardError):
        refine(refine(r))
