"""Exact minimum-weight matching for small defect sets (test reference)."""

from __future__ import annotations

import heapq
import weakref
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..errors import InfeasibleError, ParameterError
from ..surface_graph import DecoderGraph
from .base import check_defects

MAX_DEFECTS = 12


def shortest_paths(graph: DecoderGraph, source: int) -> tuple[np.ndarray, np.ndarray]:
    """Dijkstra from ``source``: (distance, predecessor edge) per vertex."""
    indptr, nbr, inc = graph.csr
    dist = np.full(graph.num_vertices, np.iinfo(np.int64).max, dtype=np.int64)
    pred = np.full(graph.num_vertices, -1, dtype=np.int64)
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        dx, x = heapq.heappop(heap)
        if dx > dist[x]:
            continue
        for j in range(indptr[x], indptr[x + 1]):
            y, e = int(nbr[j]), int(inc[j])
            nd = dx + int(graph.weight[e])
            if nd < dist[y]:
                dist[y] = nd
                pred[y] = e
                heapq.heappush(heap, (nd, y))
    return dist, pred


_CACHE: "weakref.WeakKeyDictionary[DecoderGraph, dict]" = weakref.WeakKeyDictionary()


def _cached_paths(graph: DecoderGraph, source: int) -> tuple[np.ndarray, np.ndarray]:
    runs = _CACHE.setdefault(graph, {})
    if source not in runs:
        runs[source] = shortest_paths(graph, source)
    return runs[source]


def _path_edges(graph: DecoderGraph, pred: np.ndarray, target: int) -> list[int]:
    edges = []
    x = target
    while pred[x] >= 0:
        e = int(pred[x])
        edges.append(e)
        x = int(graph.u[e]) if graph.v[e] == x else int(graph.v[e])
    return edges


def _best_pairing(pair: np.ndarray, bound: np.ndarray) -> tuple[int, list[tuple[int, int]]]:
    """Min-cost perfect pairing where each item may instead take ``bound``.

    Returns (cost, choices) with choice ``(i, -1)`` meaning item i goes to
    the boundary.
    """
    k = len(bound)
    inf = np.iinfo(np.int64).max // 4

    @lru_cache(maxsize=None)
    def best(mask: int) -> tuple[int, tuple]:
        if mask == 0:
            return 0, ()
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        cost, tail = best(rest)
        choice = (inf if bound[i] >= inf else bound[i] + cost, ((i, -1),) + tail)
        for j in range(i + 1, k):
            if rest >> j & 1 and pair[i, j] < inf:
                c, t = best(rest & ~(1 << j))
                if pair[i, j] + c < choice[0]:
                    choice = (pair[i, j] + c, ((i, j),) + t)
        return choice

    cost, choices = best((1 << k) - 1)
    return int(cost), list(choices)


def oracle_min_weight_match(graph: DecoderGraph, defects: Sequence[int]) -> np.ndarray:
    """Minimum-weight correction: every defect is paired with another defect or
    with its nearest boundary vertex, over all such pairings."""
    dset = check_defects(graph, defects)
    if len(dset) > MAX_DEFECTS:
        raise ParameterError(f"oracle supports at most {MAX_DEFECTS} defects, got {len(dset)}")
    if len(dset) == 0:
        return np.zeros(0, dtype=np.int64)
    inf = np.iinfo(np.int64).max // 4
    bnd_vertices = np.flatnonzero(graph.is_boundary)
    runs = [_cached_paths(graph, int(v)) for v in dset]
    k = len(dset)
    pair = np.full((k, k), inf, dtype=np.int64)
    bound = np.full(k, inf, dtype=np.int64)
    nearest = np.full(k, -1, dtype=np.int64)
    unreachable = np.iinfo(np.int64).max
    for i, (dist, _) in enumerate(runs):
        for j in range(k):
            if dist[dset[j]] != unreachable:
                pair[i, j] = dist[dset[j]]
        if len(bnd_vertices):
            bd = dist[bnd_vertices]
            b = int(np.argmin(bd))
            if bd[b] != unreachable:
                bound[i] = bd[b]
                nearest[i] = bnd_vertices[b]
    cost, choices = _best_pairing(pair, bound)
    if cost >= inf:
        raise InfeasibleError("defects cannot be paired on this graph")
    bits = np.zeros(graph.num_edges, dtype=np.uint8)
    for i, j in choices:
        target = int(nearest[i]) if j < 0 else int(dset[j])
        for e in _path_edges(graph, runs[i][1], target):
            bits[e] ^= 1
    return np.flatnonzero(bits)


class OracleDecoder:
    name = "oracle"

    def decode(self, graph: DecoderGraph, defects: Sequence[int]) -> np.ndarray:
        return oracle_min_weight_match(graph, defects)
