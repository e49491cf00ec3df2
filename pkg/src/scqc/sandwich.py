"""Parallel sandwich-window decoding with two-layer seam reconciliation.

Every edge of the volume belongs either to exactly one window core (both
endpoints inside the core's layers) or to exactly one seam face (the temporal
edges between the last layer of one core and the first layer of the next).

Phase 1 decodes each window on its open-faced subgraph. Core edges of the
window correction are committed. Correction edges crossing a core face are
dropped and their in-core endpoint receives a residual defect; this keeps the
committed chain's boundary equal to the window's core defects up to those
residuals. Phase 2 decodes each seam's residuals on the two-layer seam graph
and commits the result, so the XOR of all commitments is a valid correction of
the whole volume.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decoders.base import InnerDecoder, validate_correction, validate_rows
from .errors import ParameterError, WindowDecodeError
from .noise import SyndromeBatch, SyndromeVolume, observable_parity
from .surface_graph import (
    TEMPORAL,
    DecoderGraph,
    WindowPlan,
    plan_windows,
    seam_subgraph,
    subgraph_for_window,
)


@dataclass(frozen=True)
class _Context:
    """Precomputed index maps for one window or seam subgraph."""

    graph: DecoderGraph
    det_cols: np.ndarray  # parent detector ids of the subgraph's detectors
    commit_local: np.ndarray  # local edges whose result is committed
    commit_global: np.ndarray
    # crossing edges: local edge, parent detector receiving the residual, and
    # whether the edge leaves through the upper core face
    cross_local: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    cross_target: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    cross_upper: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))


@dataclass(frozen=True)
class WindowResult:
    window: int
    committed: np.ndarray  # parent edge ids, all inside the core
    residuals: tuple[tuple[int, str], ...]  # (parent detector id, "lower" | "upper" core face)
    decode_ns: int


@dataclass
class ThroughputStats:
    window_ns: list[float]  # mean single-window decode time per shot, per window
    wall_s: float
    workers: int
    step: int
    shots: int
    clock_ghz: float = 1.0

    @property
    def per_layer_core_time(self) -> float:
        """Microseconds per layer at a 1 GHz-equivalent single core."""
        return throughput_metric([t / 1000.0 for t in self.window_ns], self.step, self.clock_ghz)


def _decode_rows(inner: InnerDecoder, graph: DecoderGraph, events: np.ndarray) -> np.ndarray:
    batch = getattr(inner, "decode_batch", None)
    if batch is not None:
        return batch(graph, events)
    out = np.zeros((events.shape[0], graph.num_edges), dtype=np.uint8)
    for s, row in enumerate(events):
        out[s, inner.decode(graph, np.flatnonzero(row))] = 1
    return out


class SandwichDecoder:
    """Reusable windowed decoder for one (graph, plan) pair."""

    def __init__(self, graph: DecoderGraph, plan: WindowPlan, inner: InnerDecoder):
        if plan.layers != graph.layers:
            raise ParameterError(f"plan covers {plan.layers} layers but the graph has {graph.layers}")
        cores = [(w.core_start, w.core_stop) for w in plan.windows]
        if cores[0][0] != 0 or cores[-1][1] != graph.layers or any(
            a[1] != b[0] for a, b in zip(cores, cores[1:])
        ):
            raise ParameterError("plan cores do not tile the graph's layers")
        self.graph = graph
        self.plan = plan
        self.inner = inner
        self.windows = [self._window_context(w) for w in plan.windows]
        self.seams = [self._seam_context(s) for s in plan.seams]
        self._seam_columns = [{int(v): i for i, v in enumerate(ctx.det_cols)} for ctx in self.seams]

    def _window_context(self, window) -> _Context:
        g = self.graph
        sub = subgraph_for_window(g, window)
        gu, gv = sub.vertex_ids[sub.u], sub.vertex_ids[sub.v]
        tu, tv = g.t[gu], g.t[gv]
        c0, c1 = window.core_start, window.core_stop
        in_u = (tu >= c0) & (tu < c1)
        in_v = (tv >= c0) & (tv < c1)
        commit = np.flatnonzero(in_u & in_v)
        cross = np.flatnonzero((in_u ^ in_v) & (sub.edge_kind == TEMPORAL))
        target = np.where(in_u[cross], gu[cross], gv[cross])
        upper = np.maximum(tu[cross], tv[cross]) >= c1
        return _Context(sub, sub.vertex_ids[: sub.num_detectors], commit, sub.edge_ids[commit], cross, target, upper)

    def _seam_context(self, seam) -> _Context:
        sub = seam_subgraph(self.graph, seam)
        every = np.arange(sub.num_edges)
        return _Context(sub, sub.vertex_ids[: sub.num_detectors], every, sub.edge_ids)

    def _run_window(self, k: int, events: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
        ctx = self.windows[k]
        local_events = np.ascontiguousarray(events[:, ctx.det_cols])
        t0 = time.perf_counter_ns()
        try:
            corr = _decode_rows(self.inner, ctx.graph, local_events)
        except Exception as exc:  # noqa: BLE001 - re-raised with location
            raise WindowDecodeError(f"window {k}", exc) from exc
        elapsed = time.perf_counter_ns() - t0
        return corr[:, ctx.commit_local], corr[:, ctx.cross_local], elapsed

    def _run_seam(self, k: int, residual: np.ndarray) -> np.ndarray:
        ctx = self.seams[k]
        try:
            return _decode_rows(self.inner, ctx.graph, residual)
        except Exception as exc:  # noqa: BLE001
            raise WindowDecodeError(f"seam {k}", exc) from exc

    def decode_batch(self, events: np.ndarray, workers: int = 1) -> tuple[np.ndarray, ThroughputStats]:
        """Global correction bits (shots x edges) for an event matrix."""
        out, stats, _ = self._decode(events, workers)
        return out, stats

    def _decode(self, events: np.ndarray, workers: int) -> tuple[np.ndarray, ThroughputStats, list]:
        if workers < 1:
            raise ParameterError("workers must be >= 1")
        events = np.asarray(events, dtype=np.uint8)
        if events.ndim != 2 or events.shape[1] != self.graph.num_detectors:
            raise ParameterError(f"events must have shape (shots, {self.graph.num_detectors})")
        shots = events.shape[0]
        wall0 = time.perf_counter()
        slots: list = [None] * len(self.windows)

        def phase1(k: int) -> None:
            slots[k] = self._run_window(k, events)

        self._map(phase1, len(self.windows), workers)

        # barrier: all windows done; combine in fixed window order
        out = np.zeros((shots, self.graph.num_edges), dtype=np.uint8)
        # one residual matrix per seam: with single-layer cores a layer borders
        # two seams, and each residual belongs to the face its edge crossed
        residual = [np.zeros((shots, ctx.graph.num_detectors), dtype=np.uint8) for ctx in self.seams]
        for window, ctx, (commit, cross, _) in zip(self.plan.windows, self.windows, slots):
            out[:, ctx.commit_global] ^= commit
            for j, (target, upper) in enumerate(zip(ctx.cross_target, ctx.cross_upper)):
                k = window.upper_seam if upper else window.lower_seam
                col = self._seam_columns[k][int(target)]
                residual[k][:, col] ^= cross[:, j]

        seam_slots: list = [None] * len(self.seams)

        def phase2(k: int) -> None:
            seam_slots[k] = self._run_seam(k, residual[k])

        self._map(phase2, len(self.seams), workers)
        for ctx, corr in zip(self.seams, seam_slots):
            out[:, ctx.commit_global] ^= corr
        wall = time.perf_counter() - wall0
        stats = ThroughputStats(
            window_ns=[slot[2] / max(shots, 1) for slot in slots],
            wall_s=wall,
            workers=workers,
            step=self.plan.step,
            shots=shots,
        )
        return out, stats, slots

    def window_results(self, slots: list, shot: int = 0) -> list[WindowResult]:
        results = []
        for k, (ctx, (commit, cross, ns)) in enumerate(zip(self.windows, slots)):
            hits = np.flatnonzero(cross[shot])
            residuals = tuple(
                (int(ctx.cross_target[j]), "upper" if ctx.cross_upper[j] else "lower") for j in hits
            )
            results.append(WindowResult(k, np.sort(ctx.commit_global[np.flatnonzero(commit[shot])]), residuals, ns))
        return results

    @staticmethod
    def _map(fn, count: int, workers: int) -> None:
        if workers == 1 or count <= 1:
            for k in range(count):
                fn(k)
            return
        with ThreadPoolExecutor(max_workers=min(workers, count)) as pool:
            for f in [pool.submit(fn, k) for k in range(count)]:
                f.result()


@dataclass
class WindowedDecode:
    correction: np.ndarray  # sorted parent edge ids
    stats: ThroughputStats
    windows: list[WindowResult]


def decode_windowed(
    graph: DecoderGraph,
    volume: SyndromeVolume,
    plan: WindowPlan,
    inner: InnerDecoder,
    workers: int = 1,
) -> WindowedDecode:
    """Windowed correction of a single volume."""
    dec = SandwichDecoder(graph, plan, inner)
    bits, stats, slots = dec._decode(np.asarray(volume.events)[None, :], workers)
    return WindowedDecode(np.flatnonzero(bits[0]), stats, dec.window_results(slots))


def decode_windowed_batch(
    graph: DecoderGraph,
    batch: SyndromeBatch | np.ndarray,
    plan: WindowPlan,
    inner: InnerDecoder,
    workers: int = 1,
) -> tuple[np.ndarray, ThroughputStats]:
    events = batch.events if isinstance(batch, SyndromeBatch) else batch
    return SandwichDecoder(graph, plan, inner).decode_batch(events, workers)


def logical_outcome(graph: DecoderGraph, correction: Sequence[int], volume: SyndromeVolume) -> bool:
    """True on logical failure: the correction's observable parity disagrees
    with the true flipped-edge parity."""
    corr = np.asarray(correction, dtype=np.int64)
    if not validate_correction(graph, volume.defects, corr):
        raise ParameterError("correction does not explain the volume's detection events")
    bits = np.zeros(graph.num_edges, dtype=np.uint8)
    np.bitwise_xor.at(bits, corr, 1)
    return bool(int(observable_parity(graph, bits)[0]) != volume.logical_truth)


def logical_failures(graph: DecoderGraph, corrections: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-shot failure flags for a (shots x edges) correction bit matrix."""
    return observable_parity(graph, corrections) != np.asarray(truth)


def throughput_metric(runs: Sequence[float], step: int, clock_ghz: float = 1.0) -> float:
    """Mean single-window decode time divided by the layers it commits, expressed
    as time on a 1 GHz core (so a ``clock_ghz`` machine's times scale up)."""
    if len(runs) == 0:
        raise ParameterError("need at least one timing run")
    if step <= 0 or clock_ghz <= 0:
        raise ParameterError("step and clock must be positive")
    return float(np.mean(runs)) / step * clock_ghz


def soc_feasibility(per_layer_core_time: float, cores: int, clock_ghz: float, layer_budget: float = 1.0) -> bool:
    """Whether ``cores`` cores at ``clock_ghz`` keep up with one layer per
    ``layer_budget`` microseconds, given the 1 GHz single-core per-layer time."""
    if per_layer_core_time <= 0 or cores <= 0 or clock_ghz <= 0 or layer_budget <= 0:
        raise ParameterError("feasibility inputs must be positive")
    return per_layer_core_time <= cores * clock_ghz * layer_budget


def default_plan(graph: DecoderGraph, step: int | None = None) -> WindowPlan:
    """Plan with step ``(d+1)/2`` unless given."""
    return plan_windows(graph, step if step is not None else (graph.params.d + 1) // 2)
