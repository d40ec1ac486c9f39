from collections import deque
import networkx as nx
import numpy as np
import pytest

from sensorplace.errors import EmptyGraphError, SchemaError
from sensorplace.graph import (Segment, _make_graph, build_segment_graph, centrality_scores, clustering_coefficients,
                               connectivity_features)


def graph_from_edges(n, edges):
    """Graph over nodes 0..n-1 with exactly ``edges``."""
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return _make_graph(list(range(n)), adj)


def brute_force(graph):
    """All-pairs BFS with shortest-path counting; betweenness over unordered pairs."""
    nodes = list(graph.nodes)
    dist, sigma = {}, {}
    for s in nodes:
        d = {s: 0}
        c = {s: 1}
        q = deque([s])
        while q:
            v = q.popleft()
            for w in graph.adjacency[v]:
                if w not in d:
                    d[w] = d[v] + 1
                    c[w] = 0
                    q.append(w)
                if d[w] == d[v] + 1:
                    c[w] += c[v]
        dist[s], sigma[s] = d, c
    btw = {v: 0.0 for v in nodes}
    for s in nodes:
        for t in nodes:
            if s >= t or t not in dist[s]:
                continue
            for v in nodes:
                if v in (s, t) or v not in dist[s] or t not in dist[v]:
                    continue
                if dist[s][v] + dist[v][t] == dist[s][t]:
                    btw[v] += sigma[s][v] * sigma[v][t] / sigma[s][t]
    clo = {}
    for v in nodes:
        total = sum(dist[v].values())
        comp = len(dist[v])
        clo[v] = (comp - 1) / total if total > 0 else 0.0
    return btw, clo


def random_connected(rng, n):
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(v))
        edges.add((u, v))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        edges.add((min(a, b), max(a, b)))
    return graph_from_edges(n, sorted(edges))


def test_shared_endpoint_creates_edge():
    g = build_segment_graph([Segment(1, (0, 0), 3, 7), Segment(2, (1, 0), 7, 8)])
    assert g.adjacency[1] == {2} and g.adjacency[2] == {1}


def test_three_way_intersection_is_clique():
    segs = [Segment(i, (i, 0), 5, 10 + i) for i in range(3)]
    g = build_segment_graph(segs)
    assert g.n_edges == 3
    for i in range(3):
        assert g.adjacency[i] == {0, 1, 2} - {i}


def test_isolated_segment():
    g = build_segment_graph([Segment(1, (0, 0), 1, 2), Segment(2, (5, 5), 3, 4)])
    assert g.adjacency[1] == frozenset() and g.adjacency[2] == frozenset()


def test_coordinate_snapping_fallback():
    segs = [Segment(1, (0.5, 0), coord_a=(0, 0), coord_b=(1, 0)),
            Segment(2, (1.5, 0), coord_a=(1.2, 0), coord_b=(2, 0)),
            Segment(3, (3, 0), coord_a=(2.9, 0), coord_b=(4, 0))]
    g = build_segment_graph(segs, snap_tolerance=0.5)
    assert g.adjacency[1] == {2}
    assert g.adjacency[3] == frozenset()


def test_errors():
    with pytest.raises(EmptyGraphError):
        build_segment_graph([])
    with pytest.raises(SchemaError):
        build_segment_graph([Segment(1, (0, 0), 1, 2), Segment(1, (1, 0), 2, 3)])


def test_path_betweenness():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    assert dict(centrality_scores(g, "betweenness").score) == {0: 0.0, 1: 1.0, 2: 0.0}


def test_star_closeness():
    g = graph_from_edges(4, [(0, 1), (0, 2), (0, 3)])
    c = centrality_scores(g, "closeness").score
    assert c[0] == pytest.approx(1.0, abs=1e-12)
    for leaf in (1, 2, 3):
        assert c[leaf] == pytest.approx(0.6, abs=1e-12)


def test_single_node_closeness_is_zero():
    g = build_segment_graph([Segment(4, (0, 0), 1, 2)])
    assert centrality_scores(g, "closeness").score[4] == 0.0


def test_disconnected_components():
    g = graph_from_edges(5, [(0, 1), (1, 2), (3, 4)])
    btw, clo = brute_force(g)
    b = centrality_scores(g, "betweenness").score
    c = centrality_scores(g, "closeness").score
    for v in range(5):
        assert b[v] == pytest.approx(btw[v], abs=1e-12)
        assert c[v] == pytest.approx(clo[v], abs=1e-12)
    assert c[3] == 1.0


def test_against_networkx(rng):
    for _ in range(20):
        g = random_connected(rng, int(rng.integers(5, 30)))
        ref = nx.Graph()
        ref.add_nodes_from(g.nodes)
        ref.add_edges_from((a, b) for a in g.nodes for b in g.adjacency[a])
        b = centrality_scores(g, "betweenness").score
        c = centrality_scores(g, "closeness").score
        nb = nx.betweenness_centrality(ref, normalized=False)
        nc = nx.closeness_centrality(ref)
        for v in g.nodes:
            assert b[v] == pytest.approx(nb[v], abs=1e-9)
            assert c[v] == pytest.approx(nc[v], abs=1e-9)


def test_leaves_have_zero_betweenness(rng):
    for _ in range(10):
        g = random_connected(rng, 15)
        b = centrality_scores(g, "betweenness").score
        for v in g.nodes:
            if g.degree(v) == 1:
                assert b[v] == 0.0


def test_label_invariance(rng):
    g = random_connected(rng, 12)
    perm = rng.permutation(12)
    relabeled = _make_graph([int(perm[v]) for v in g.nodes],
                            {int(perm[v]): {int(perm[w]) for w in g.adjacency[v]} for v in g.nodes})
    for kind in ("betweenness", "closeness"):
        a = centrality_scores(g, kind).score
        b = centrality_scores(relabeled, kind).score
        for v in g.nodes:
            assert b[int(perm[v])] == pytest.approx(a[v], abs=1e-12)


def test_connectivity_features_shapes():
    g = graph_from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    f = connectivity_features(g)
    assert set(f) == {"degree", "betweenness", "closeness", "clustering"}
    np.testing.assert_array_equal(f["degree"], [2, 2, 3, 1])
    np.testing.assert_allclose(clustering_coefficients(g), [1, 1, 1 / 3, 0])
