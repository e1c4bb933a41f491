"""Degree-bounded tunnel networks over pore centres.

The network is a connected spanning subgraph (not a tree once the lower
degree bound exceeds 1) built in three steps:

1. a Euclidean spanning tree by Kruskal's algorithm, skipping edges that
   would push an endpoint past the upper bound (with an upper bound of at
   least 2 every component keeps a leaf with spare capacity, so this always
   completes on a complete graph);
2. greedy augmentation: while some vertex is below its lower bound, add the
   shortest absent edge touching a deficient vertex whose endpoints both
   have spare capacity;
3. if augmentation stalls, a saturated neighbour gives up one of its
   augmentation edges (never a tree edge) to make room.

Graphs with at most ``EXACT_MAX_VERTICES`` vertices are then improved by a
depth-first branch and bound seeded with the heuristic cost, which returns
the optimum unless the node budget runs out first.

Edge costs are Euclidean lengths; all ties are broken by vertex index, so the
result is a deterministic function of the input order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from sppm.field import Tunnel

EXACT_MAX_VERTICES = 8
EXACT_NODE_BUDGET = 100_000


class InfeasibleDegreeBounds(ValueError):
    pass


class NoInteriorPores(ValueError):
    pass


@dataclass(frozen=True)
class PoreGraph:
    """Complete graph over ``points`` with degree bounds ``[lower, upper]``."""

    points: np.ndarray
    lower: int = 3
    upper: int = 5

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            pts = pts.reshape(len(pts), -1)
        object.__setattr__(self, "points", pts)
        if self.lower < 1 or self.upper < 1:
            raise ValueError("degree bounds must be positive")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def effective_lower(self) -> int:
        return min(self.lower, max(self.n - 1, 0))


def network_cost(points, edges) -> float:
    pts = np.asarray(points, dtype=float)
    return float(sum(np.linalg.norm(pts[i] - pts[j]) for i, j in edges))


def _union_find(n):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    return parent, find


def build_degree_bounded_network(graph: PoreGraph) -> list:
    """Connected spanning edge set with every degree in ``[min(A, n-1), B]``.

    Returns sorted ``(i, j)`` pairs with ``i < j``.
    """
    n = graph.n
    lo = graph.effective_lower
    hi = graph.upper
    if n <= 1:
        return []
    if hi < lo or (hi == 1 and n > 2) or (hi == lo and n * lo % 2):
        raise InfeasibleDegreeBounds(
            f"no connected subgraph on {n} vertices has all degrees in [{lo}, {hi}]"
        )

    dist = squareform(pdist(graph.points))
    iu, ju = np.triu_indices(n, 1)
    lengths = dist[iu, ju]
    order = np.lexsort((ju, iu, lengths))
    deg = np.zeros(n, dtype=int)
    present = np.zeros((n, n), dtype=bool)
    tree = set()

    parent, find = _union_find(n)
    for e in order:
        i, j = int(iu[e]), int(ju[e])
        if deg[i] >= hi or deg[j] >= hi:
            continue
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        parent[ri] = rj
        tree.add((i, j))
        present[i, j] = present[j, i] = True
        deg[i] += 1
        deg[j] += 1
        if len(tree) == n - 1:
            break
    if len(tree) < n - 1:
        # cannot happen for upper >= 2: every tree component keeps a leaf with spare capacity
        raise InfeasibleDegreeBounds("degree cap prevents a spanning tree")

    extra = set()
    while True:
        deficient = deg < lo
        if not deficient.any():
            break
        ok = (~present[iu, ju]) & (deficient[iu] | deficient[ju]) & (deg[iu] < hi) & (deg[ju] < hi)
        cand = np.flatnonzero(ok[order])
        if len(cand):
            e = order[cand[0]]
            adds = [(int(iu[e]), int(ju[e]))]
        else:
            adds = _make_room(dist, deg, present, tree, extra, lo, hi)
        for i, j in adds:
            extra.add((i, j))
            present[i, j] = present[j, i] = True
            deg[i] += 1
            deg[j] += 1
    edges = sorted(tree | extra)
    if n <= EXACT_MAX_VERTICES:
        edges = _branch_and_bound(dist, lo, hi, edges)
    return edges


def _make_room(dist, deg, present, tree, extra, lo, hi):
    """Free capacity for deficient vertices by rewiring; returns the edges to add.

    First choice is the cheapest ``drop (v, w), add (u, v)`` where ``u`` is
    deficient, ``v`` is saturated and ``w`` stays at or above its bound (only
    augmentation edges are dropped, so the tree keeps the graph connected).
    Failing that, an edge ``(v, w)`` is split into ``(u, v), (u2, w)`` for
    deficient ``u, u2`` (``u2 == u`` if it lacks two edges), provided the
    result stays connected.
    """
    n = len(deg)
    best = None
    for u in np.flatnonzero(deg < lo):
        for v in range(n):
            if v == u or present[u, v] or deg[v] < hi:
                continue
            for a, b in extra:
                if v not in (a, b):
                    continue
                w = b if a == v else a
                if w == u or deg[w] - 1 < lo:
                    continue
                gain = dist[u, v] - dist[v, w]
                key = (gain, int(u), v, w)
                if best is None or key < best[0]:
                    best = (key, (a, b), [(min(u, v), max(u, v))])
    if best is None:
        best = _split_edge(dist, deg, present, tree, extra, lo)
    if best is None:
        raise InfeasibleDegreeBounds("augmentation stalled with no edge to rewire")
    _, drop, adds = best
    a, b = drop
    tree.discard(drop)
    extra.discard(drop)
    present[a, b] = present[b, a] = False
    deg[a] -= 1
    deg[b] -= 1
    return adds


def _split_edge(dist, deg, present, tree, extra, lo):
    short = [int(u) for u in np.flatnonzero(deg < lo)]
    pairs = [(u, u2) for k, u in enumerate(short) for u2 in short[k + 1:]]
    pairs += [(u, u) for u in short if lo - deg[u] >= 2]
    moves = []
    for u, u2 in pairs:
        for a, b in tree | extra:
            for v, w in ((a, b), (b, a)):
                if len({u, u2, v, w} - {u, u2}) < 2 or v in (u, u2) or w in (u, u2):
                    continue
                if present[u, v] or present[u2, w]:
                    continue
                gain = dist[u, v] + dist[u2, w] - dist[v, w]
                moves.append(((gain, u, u2, v, w), (a, b),
                              [(min(u, v), max(u, v)), (min(u2, w), max(u2, w))]))
    moves.sort(key=lambda m: m[0])
    edges = tree | extra
    for move in moves:
        _, drop, adds = move
        if is_connected(len(deg), (edges - {drop}) | set(adds)):
            return move
    return None


def _branch_and_bound(dist, lo, hi, incumbent, budget=EXACT_NODE_BUDGET):
    """Cheapest connected edge set with degrees in ``[lo, hi]``, by exhaustive search.

    Edges are branched in ascending length (include first).  A branch is cut
    when a vertex can no longer reach ``lo``, or when its cost plus the
    cheapest edges it must still add cannot beat the incumbent.
    """
    n = len(dist)
    iu, ju = np.triu_indices(n, 1)
    lengths = dist[iu, ju]
    order = np.lexsort((ju, iu, lengths))
    ei = iu[order].tolist()
    ej = ju[order].tolist()
    el = lengths[order].tolist()
    m = len(el)
    # remaining[k][v]: edges at positions >= k touching v
    remaining = np.zeros((m + 1, n), dtype=int)
    for k in range(m - 1, -1, -1):
        remaining[k] = remaining[k + 1]
        remaining[k, ei[k]] += 1
        remaining[k, ej[k]] += 1
    remaining = remaining.tolist()
    prefix = np.concatenate([[0.0], np.cumsum(el)]).tolist()

    best_cost = float(sum(dist[i, j] for i, j in incumbent))
    best = list(incumbent)
    deg = [0] * n
    chosen = []
    nodes = 0

    def feasible_now():
        return min(deg) >= lo and is_connected(n, chosen)

    def visit(k, cost):
        nonlocal best_cost, best, nodes
        nodes += 1
        if nodes > budget:
            return
        deficit = 0
        for v in range(n):
            need = lo - deg[v]
            if need > 0:
                if need > remaining[k][v]:
                    return
                deficit += need
        need_edges = max(n - 1 - len(chosen), (deficit + 1) // 2)
        if need_edges > m - k or cost + prefix[k + need_edges] - prefix[k] >= best_cost - 1e-12:
            return
        if need_edges == 0 and feasible_now():
            best_cost, best = cost, sorted(chosen)
            return
        if k == m:
            return
        i, j = ei[k], ej[k]
        if deg[i] < hi and deg[j] < hi:
            deg[i] += 1
            deg[j] += 1
            chosen.append((i, j))
            visit(k + 1, cost + el[k])
            chosen.pop()
            deg[i] -= 1
            deg[j] -= 1
        visit(k + 1, cost)

    visit(0, 0.0)
    return [(int(i), int(j)) for i, j in best]


def bridge_surface_to_interior(surface_points, interior_points) -> list:
    """Nearest interior pore for every surface pore (ties: lowest index).

    Returns ``(surface_index, interior_index)`` pairs, positions relative to
    the two input lists.
    """
    interior = np.asarray(interior_points, dtype=float).reshape(-1, 3)
    if len(interior) == 0:
        raise NoInteriorPores("cannot bridge surface pores without interior pores")
    surface = np.asarray(surface_points, dtype=float).reshape(-1, 3)
    if len(surface) == 0:
        return []
    nearest = np.argmin(cdist(surface, interior), axis=1)
    return [(k, int(j)) for k, j in enumerate(nearest)]


def is_connected(n: int, edges) -> bool:
    if n <= 1:
        return True
    parent, find = _union_find(n)
    for i, j in edges:
        parent[find(i)] = find(j)
    root = find(0)
    return all(find(k) == root for k in range(n))


def degrees(n: int, edges) -> np.ndarray:
    deg = np.zeros(n, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    return deg


def as_tunnels(edges, mu: float, offset_i: int = 0, offset_j: int = 0) -> list:
    """Wrap index pairs as tunnels, shifting each endpoint into a global pore list."""
    return [Tunnel(offset_i + i, offset_j + j, mu) for i, j in edges]
