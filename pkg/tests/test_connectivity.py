import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import minimum_spanning_tree

from sppm.connectivity import (
    InfeasibleDegreeBounds,
    NoInteriorPores,
    PoreGraph,
    as_tunnels,
    bridge_surface_to_interior,
    build_degree_bounded_network,
    degrees,
    is_connected,
    network_cost,
)


def brute_force_optimum(pts, lo, hi):
    """Cheapest connected spanning edge set with degrees in [lo, hi], by enumeration."""
    n = len(pts)
    lo = min(lo, n - 1)
    all_edges = list(itertools.combinations(range(n), 2))
    best = math.inf
    for k in range(n - 1, len(all_edges) + 1):
        for sub in itertools.combinations(all_edges, k):
            deg = [0] * n
            for i, j in sub:
                deg[i] += 1
                deg[j] += 1
            if min(deg) < lo or max(deg) > hi:
                continue
            # union-find connectivity, independent of the library helper
            root = list(range(n))

            def find(a):
                while root[a] != a:
                    a = root[a]
                return a

            for i, j in sub:
                root[find(i)] = find(j)
            if len({find(v) for v in range(n)}) != 1:
                continue
            best = min(best, sum(math.dist(pts[i], pts[j]) for i, j in sub))
    return best


def mst_cost(pts):
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    return float(minimum_spanning_tree(d).sum())


def test_graph_bounds():
    with pytest.raises(ValueError):
        PoreGraph(np.zeros((3, 3)), 4, 2)
    assert PoreGraph(np.zeros((2, 3)), 3, 5).effective_lower == 1


def test_two_vertices():
    edges = build_degree_bounded_network(PoreGraph([[0, 0, 0], [1, 0, 0]], 3, 5))
    assert edges == [(0, 1)]


def test_single_vertex():
    assert build_degree_bounded_network(PoreGraph([[0, 0, 0]], 3, 5)) == []


def test_collinear_path():
    pts = [[float(i), 0, 0] for i in range(5)]
    edges = build_degree_bounded_network(PoreGraph(pts, 1, 2))
    assert edges == [(0, 1), (1, 2), (2, 3), (3, 4)]
    assert network_cost(pts, edges) == pytest.approx(4.0)


def test_infeasible_bounds():
    with pytest.raises(InfeasibleDegreeBounds):
        build_degree_bounded_network(PoreGraph(np.random.default_rng(0).random((4, 3)), 1, 1))


def test_thirty_random_pores():
    rng = np.random.default_rng(7)
    pts = rng.random((30, 3))
    edges = build_degree_bounded_network(PoreGraph(pts, 3, 5))
    assert is_connected(30, edges)
    deg = degrees(30, edges)
    assert deg.min() >= 3 and deg.max() <= 5
    assert network_cost(pts, edges) >= mst_cost(pts) - 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_small_instances_optimal(seed):
    pts = np.random.default_rng(100 + seed).random((5, 3))
    edges = build_degree_bounded_network(PoreGraph(pts, 1, 2))
    assert network_cost(pts, edges) == pytest.approx(brute_force_optimum(pts, 1, 2), abs=1e-12)


def test_six_vertices_three_five_optimal():
    pts = np.random.default_rng(3).random((6, 2))
    edges = build_degree_bounded_network(PoreGraph(pts, 3, 5))
    assert network_cost(pts, edges) == pytest.approx(brute_force_optimum(pts, 3, 5), abs=1e-12)


def test_deterministic():
    pts = np.random.default_rng(1).random((40, 3))
    g = PoreGraph(pts, 3, 5)
    assert build_degree_bounded_network(g) == build_degree_bounded_network(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 45), st.integers(0, 2**32 - 1), st.sampled_from([2, 3]), st.integers(0, 2))
def test_network_properties(n, seed, dim, extra):
    pts = np.random.default_rng(seed).random((n, dim))
    lo, hi = 3, 3 + extra
    if hi == min(lo, n - 1) and n * hi % 2:
        # odd degree sum: no such graph exists
        with pytest.raises(InfeasibleDegreeBounds):
            build_degree_bounded_network(PoreGraph(pts, lo, hi))
        return
    edges = build_degree_bounded_network(PoreGraph(pts, lo, hi))
    assert all(i < j for i, j in edges)
    assert len(set(edges)) == len(edges)
    assert is_connected(n, edges)
    deg = degrees(n, edges)
    assert deg.min() >= min(lo, n - 1) and deg.max() <= hi
    assert network_cost(pts, edges) >= mst_cost(pts) - 1e-9


def test_bridge_single():
    assert bridge_surface_to_interior([[0, 0, 0]], [[1, 1, 1]]) == [(0, 0)]


def test_bridge_tie_lowest_index():
    assert bridge_surface_to_interior([[0, 0, 0]], [[1, 0, 0], [-1, 0, 0]]) == [(0, 0)]


def test_bridge_nearest_exhaustive():
    rng = np.random.default_rng(9)
    surf = rng.random((6, 3))
    inner = rng.random((4, 3))
    bridges = bridge_surface_to_interior(surf, inner)
    assert len(bridges) == 6
    for s, k in bridges:
        dists = [math.dist(surf[s], q) for q in inner]
        assert dists[k] == min(dists)


def test_bridge_needs_interior():
    with pytest.raises(NoInteriorPores):
        bridge_surface_to_interior([[0, 0, 0]], [])


def test_as_tunnels_offsets():
    ts = as_tunnels([(0, 1)], 30.0, 4, 10)
    assert (ts[0].i, ts[0].j, ts[0].weight) == (4, 11, 30.0)
