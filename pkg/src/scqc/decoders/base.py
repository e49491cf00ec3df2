"""Inner-decoder interface and correction validation."""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numba
import numpy as np

from ..errors import ParameterError
from ..surface_graph import DecoderGraph


@runtime_checkable
class InnerDecoder(Protocol):
    """Anything that maps (graph, defects) to a set of local edge indices.

    ``decode_batch`` is optional; the windowed driver falls back to calling
    ``decode`` shot by shot when it is missing.
    """

    name: str

    def decode(self, graph: DecoderGraph, defects: Sequence[int]) -> np.ndarray: ...


def check_defects(graph: DecoderGraph, defects: Sequence[int]) -> np.ndarray:
    arr = np.asarray(defects, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= graph.num_detectors):
        raise ParameterError("defect outside the graph's detector set")
    if len(np.unique(arr)) != arr.size:
        raise ParameterError("duplicate defect ids")
    return np.sort(arr)


def correction_parity(graph: DecoderGraph, correction: Sequence[int]) -> np.ndarray:
    """Parity of correction edges at every detector (uint8, detector order)."""
    corr = np.asarray(correction, dtype=np.int64).reshape(-1)
    counts = np.zeros(graph.num_vertices, dtype=np.int64)
    np.add.at(counts, graph.u[corr], 1)
    np.add.at(counts, graph.v[corr], 1)
    return (counts[: graph.num_detectors] & 1).astype(np.uint8)


def validate_correction(graph: DecoderGraph, defects: Sequence[int], correction: Sequence[int]) -> bool:
    corr = np.asarray(correction, dtype=np.int64).reshape(-1)
    if corr.size and (corr.min() < 0 or corr.max() >= graph.num_edges):
        return False
    want = np.zeros(graph.num_detectors, dtype=np.uint8)
    want[np.asarray(defects, dtype=np.int64)] = 1
    return bool(np.array_equal(correction_parity(graph, corr), want))


def correction_weight(graph: DecoderGraph, correction: Sequence[int]) -> int:
    return int(graph.weight[np.asarray(correction, dtype=np.int64)].sum())


@numba.njit(cache=True, nogil=True)
def _rows_valid(corr, events, eu, ev, nd):
    nshots, ne = corr.shape
    ok = np.ones(nshots, dtype=np.bool_)
    par = np.zeros(nd, dtype=np.uint8)
    for s in range(nshots):
        par[:] = events[s]
        for e in range(ne):
            if corr[s, e]:
                if eu[e] < nd:
                    par[eu[e]] ^= 1
                if ev[e] < nd:
                    par[ev[e]] ^= 1
        for i in range(nd):
            if par[i]:
                ok[s] = False
                break
    return ok


def validate_rows(graph: DecoderGraph, corrections: np.ndarray, events: np.ndarray) -> np.ndarray:
    """Per-shot validity of a (shots x edges) correction bit matrix."""
    corr = np.ascontiguousarray(corrections, dtype=np.uint8)
    ev = np.ascontiguousarray(events, dtype=np.uint8)
    if corr.shape[0] != ev.shape[0] or corr.shape[1] != graph.num_edges or ev.shape[1] != graph.num_detectors:
        raise ParameterError("correction/event matrix shapes do not match the graph")
    return _rows_valid(corr, ev, graph.u, graph.v, graph.num_detectors)
