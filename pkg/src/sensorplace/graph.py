"""Segment adjacency graph and the two centrality scores used for ranking.

Each street segment is a node; two nodes are joined when the segments share
an intersection. Shortest paths are hop counts.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import EmptyGraphError, ParameterError, SchemaError

DEFAULT_SNAP_TOLERANCE = 0.5


@dataclass(frozen=True)
class Segment:
    """A street segment between two intersections.

    ``endpoint_a``/``endpoint_b`` are intersection ids. When a source lacks
    them, ``coord_a``/``coord_b`` carry endpoint coordinates for snapping.
    """

    id: int
    midpoint: tuple[float, float]
    endpoint_a: int | None = None
    endpoint_b: int | None = None
    length: float | None = None
    coord_a: tuple[float, float] | None = None
    coord_b: tuple[float, float] | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.midpoint)):
            raise SchemaError(f"segment {self.id}: midpoint not finite")


@dataclass(frozen=True)
class SegmentGraph:
    nodes: tuple[int, ...]
    adjacency: Mapping[int, frozenset[int]]

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency.values()) // 2

    def to_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indptr, indices)`` over node positions in ``self.nodes``."""
        pos = {n: i for i, n in enumerate(self.nodes)}
        indptr = np.zeros(len(self.nodes) + 1, dtype=np.int64)
        indices = []
        for i, n in enumerate(self.nodes):
            nbrs = sorted(pos[m] for m in self.adjacency[n])
            indices.extend(nbrs)
            indptr[i + 1] = indptr[i] + len(nbrs)
        return indptr, np.asarray(indices, dtype=np.int64)


@dataclass(frozen=True)
class CentralityScores:
    kind: str
    score: Mapping[int, float] = field(repr=False)


def _make_graph(ids, adj) -> SegmentGraph:
    frozen = {i: frozenset(adj.get(i, ())) for i in ids}
    return SegmentGraph(nodes=tuple(sorted(ids)), adjacency=MappingProxyType(frozen))


def build_segment_graph(segments: Sequence[Segment],
                        snap_tolerance: float = DEFAULT_SNAP_TOLERANCE) -> SegmentGraph:
    if not segments:
        raise EmptyGraphError("no segments")
    if snap_tolerance < 0:
        raise ParameterError("snap_tolerance must be >= 0")
    ids = [s.id for s in segments]
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise SchemaError(f"duplicate segment id {dup}")

    adj: dict[int, set[int]] = defaultdict(set)
    by_node: dict[int, list[int]] = defaultdict(list)
    loose_pts, loose_owner = [], []
    for s in segments:
        for node, coord in ((s.endpoint_a, s.coord_a), (s.endpoint_b, s.coord_b)):
            if node is not None:
                by_node[node].append(s.id)
            elif coord is not None:
                loose_pts.append(coord)
                loose_owner.append(s.id)

    def link(group):
        for a, b in combinations(set(group), 2):
            adj[a].add(b)
            adj[b].add(a)

    for members in by_node.values():
        link(members)
    if loose_pts:
        tree = cKDTree(np.asarray(loose_pts, dtype=float))
        for i, j in tree.query_pairs(r=snap_tolerance):
            link((loose_owner[i], loose_owner[j]))
    return _make_graph(ids, adj)


@njit(cache=True)
def _brandes(indptr, indices):
    n = indptr.shape[0] - 1
    bc = np.zeros(n)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[:] = -1
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head, tail = 0, 1
        while head < tail:
            v = order[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        for idx in range(tail - 1, 0, -1):
            w = order[idx]
            for k in range(indptr[w], indptr[w + 1]):
                v = indices[k]
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            bc[w] += delta[w]
    # every unordered pair was visited from both ends
    return bc / 2.0


@njit(cache=True)
def _closeness(indptr, indices):
    n = indptr.shape[0] - 1
    out = np.zeros(n)
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[:] = -1
        dist[s] = 0
        queue[0] = s
        head, tail = 0, 1
        total = 0
        while head < tail:
            v = queue[head]
            head += 1
            total += dist[v]
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue[tail] = w
                    tail += 1
        if tail > 1:
            out[s] = (tail - 1) / total
    return out


def centrality_scores(graph: SegmentGraph, kind: str) -> CentralityScores:
    """Betweenness (raw, unordered pairs) or component-restricted closeness."""
    if not graph.nodes:
        raise EmptyGraphError("graph has no nodes")
    indptr, indices = graph.to_csr()
    if kind == "betweenness":
        values = _brandes(indptr, indices)
    elif kind == "closeness":
        values = _closeness(indptr, indices)
    else:
        raise ParameterError(f"unknown centrality kind {kind!r}")
    score = {n: float(v) for n, v in zip(graph.nodes, values)}
    return CentralityScores(kind=kind, score=MappingProxyType(score))


def clustering_coefficients(graph: SegmentGraph) -> np.ndarray:
    """Local clustering per node, in ``graph.nodes`` order; 0 below degree 2."""
    out = np.zeros(len(graph.nodes))
    for i, n in enumerate(graph.nodes):
        nbrs = graph.adjacency[n]
        k = len(nbrs)
        if k < 2:
            continue
        links = sum(len(graph.adjacency[m] & nbrs) for m in nbrs) / 2
        out[i] = 2.0 * links / (k * (k - 1))
    return out


def connectivity_features(graph: SegmentGraph) -> dict[str, np.ndarray]:
    """Degree, betweenness, closeness and clustering arrays in node order."""
    indptr, indices = graph.to_csr()
    return {
        "degree": np.diff(indptr).astype(float),
        "betweenness": _brandes(indptr, indices),
        "closeness": _closeness(indptr, indices),
        "clustering": clustering_coefficients(graph),
    }
