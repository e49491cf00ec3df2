"""Weighted Union-Find decoder (cluster growth + peeling), compiled with numba.

Growth is counted in half-edge units: an edge of weight ``w`` is fully grown
after ``2w`` units. Each step, every vertex of an active cluster (odd parity,
no boundary vertex) pushes one unit into each incident edge that is not yet
full. Edges that became full during the step are merged afterwards in edge-id
order, which keeps the result independent of traversal details.
"""

from __future__ import annotations

from typing import Sequence

import numba
import numpy as np

from ..errors import InfeasibleError, ParameterError
from ..surface_graph import DecoderGraph
from .base import check_defects

OK, INFEASIBLE = 0, 1


@numba.njit(cache=True, inline="always")
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True, inline="always")
def _bfs(order, head, tail, indptr, nbr, inc, growth, full, visited, parent_edge, parent_v):
    while head < tail:
        x = order[head]
        head += 1
        for j in range(indptr[x], indptr[x + 1]):
            e = inc[j]
            y = nbr[j]
            if growth[e] < full[e] or visited[y]:
                continue
            visited[y] = 1
            parent_edge[y] = e
            parent_v[y] = x
            order[tail] = y
            tail += 1
    return tail


@numba.njit(cache=True, nogil=True)
def _uf_batch(events, indptr, nbr, inc, eu, ev, full, is_boundary, out, status):
    """Decode every row of ``events``; write corrections into ``out`` (S x E)."""
    nshots, nd = events.shape
    nv = is_boundary.shape[0]
    ne = eu.shape[0]

    parent = np.arange(nv)
    size = np.ones(nv, dtype=np.int64)
    parity = np.zeros(nv, dtype=np.uint8)
    hasb = np.zeros(nv, dtype=np.uint8)
    touched_flag = np.zeros(nv, dtype=np.uint8)
    touched = np.empty(nv, dtype=np.int64)
    growth = np.zeros(ne, dtype=np.int64)
    grown = np.empty(ne, dtype=np.int64)
    newly_full = np.empty(ne, dtype=np.int64)
    # peeling scratch
    visited = np.zeros(nv, dtype=np.uint8)
    pdef = np.zeros(nv, dtype=np.uint8)
    parent_edge = np.full(nv, -1, dtype=np.int64)
    parent_v = np.full(nv, -1, dtype=np.int64)
    order = np.empty(nv, dtype=np.int64)

    for s in range(nshots):
        nt = 0
        ngrown = 0
        for i in range(nd):
            if events[s, i]:
                touched_flag[i] = 1
                touched[nt] = i
                nt += 1
                parity[i] = 1
                pdef[i] = 1
        active = nt
        ok = True

        while active > 0:
            nfull = 0
            progressed = False
            nt_step = nt
            for k in range(nt_step):
                x = touched[k]
                r = _find(parent, x)
                if parity[r] == 0 or hasb[r]:
                    continue
                for j in range(indptr[x], indptr[x + 1]):
                    e = inc[j]
                    if growth[e] >= full[e]:
                        continue
                    if growth[e] == 0:
                        grown[ngrown] = e
                        ngrown += 1
                    growth[e] += 1
                    progressed = True
                    if growth[e] == full[e]:
                        newly_full[nfull] = e
                        nfull += 1
            if not progressed:
                ok = False
                break
            merged = np.sort(newly_full[:nfull])
            for q in range(nfull):
                e = merged[q]
                for y in (eu[e], ev[e]):
                    if not touched_flag[y]:
                        touched_flag[y] = 1
                        touched[nt] = y
                        nt += 1
                        if is_boundary[y]:
                            hasb[y] = 1
                ra = _find(parent, eu[e])
                rb = _find(parent, ev[e])
                if ra == rb:
                    continue
                if size[ra] < size[rb] or (size[ra] == size[rb] and rb < ra):
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]
                parity[ra] ^= parity[rb]
                hasb[ra] |= hasb[rb]
            active = 0
            for k in range(nt):
                x = touched[k]
                if parent[x] == x and parity[x] == 1 and hasb[x] == 0:
                    active += 1

        if ok:
            # spanning forest over fully grown edges: boundary roots first
            srt = np.sort(touched[:nt])
            tail = 0
            for k in range(nt):
                src = srt[k]
                if is_boundary[src]:
                    visited[src] = 1
                    order[tail] = src
                    tail += 1
            tail = _bfs(order, 0, tail, indptr, nbr, inc, growth, full, visited, parent_edge, parent_v)
            for k in range(nt):
                src = srt[k]
                if not visited[src]:
                    visited[src] = 1
                    order[tail] = src
                    tail = _bfs(order, tail, tail + 1, indptr, nbr, inc, growth, full,
                                visited, parent_edge, parent_v)
            for k in range(tail - 1, -1, -1):
                x = order[k]
                if pdef[x] and parent_edge[x] >= 0:
                    out[s, parent_edge[x]] ^= 1
                    pdef[parent_v[x]] ^= 1
                    pdef[x] = 0
            for k in range(tail):
                x = order[k]
                if pdef[x] and not is_boundary[x]:
                    ok = False
        status[s] = OK if ok else INFEASIBLE

        for k in range(nt):
            x = touched[k]
            parent[x] = x
            size[x] = 1
            parity[x] = 0
            hasb[x] = 0
            touched_flag[x] = 0
            visited[x] = 0
            pdef[x] = 0
            parent_edge[x] = -1
            parent_v[x] = -1
        for k in range(ngrown):
            growth[grown[k]] = 0


class UnionFindDecoder:
    """Stateless wrapper; a single instance may be shared across threads."""

    name = "uf"

    def decode_batch(self, graph: DecoderGraph, events: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Decode each row of a (shots x detectors) event matrix.

        Returns a (shots x edges) uint8 matrix of correction bits. Raises
        ``InfeasibleError`` if any shot has an odd cluster with no boundary.
        """
        events = np.ascontiguousarray(events, dtype=np.uint8)
        if events.ndim != 2 or events.shape[1] != graph.num_detectors:
            raise ParameterError(f"events must have shape (shots, {graph.num_detectors})")
        if out is None:
            out = np.zeros((events.shape[0], graph.num_edges), dtype=np.uint8)
        status = np.zeros(events.shape[0], dtype=np.uint8)
        indptr, nbr, inc = graph.csr
        _uf_batch(events, indptr, nbr, inc, graph.u, graph.v, graph.full_growth,
                  graph.is_boundary.astype(np.uint8), out, status)
        if status.any():
            bad = int(np.flatnonzero(status)[0])
            raise InfeasibleError(f"shot {bad}: odd cluster cannot reach a boundary")
        return out

    def decode(self, graph: DecoderGraph, defects: Sequence[int]) -> np.ndarray:
        d = check_defects(graph, defects)
        events = np.zeros((1, graph.num_detectors), dtype=np.uint8)
        events[0, d] = 1
        return np.flatnonzero(self.decode_batch(graph, events)[0])


def uf_decode(graph: DecoderGraph, defects: Sequence[int]) -> np.ndarray:
    """Union-Find correction (sorted local edge indices) for one defect set."""
    return UnionFindDecoder().decode(graph, defects)
