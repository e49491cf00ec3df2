"""Decoder graphs for the memory and Bell-state experiments, and window plans.

Only the Z-check sector is modelled; every data qubit of a detection layer is
one spatial (or boundary) edge, every check present in two consecutive layers
contributes one temporal edge. Detector vertices always occupy ids
``0 .. num_detectors-1`` in layer-major order, boundary vertices follow.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .layout import Region, z_plaquettes

DETECTOR, SPATIAL_BOUNDARY, SEAM_BOUNDARY = 0, 1, 2
SPATIAL, TEMPORAL, BOUNDARY = 0, 1, 2
VERTEX_KINDS = ("detector", "spatial-boundary", "seam-boundary")
EDGE_KINDS = ("spatial", "temporal", "boundary")


class Experiment(str, Enum):
    MEMORY = "memory"
    BELL = "bell"


@dataclass(frozen=True)
class CodeParams:
    d: int
    experiment: Experiment = Experiment.MEMORY
    n: int = 0
    m: int = 0
    n1: int = 0
    n2: int = 0
    n3: int = 0

    def __post_init__(self):
        object.__setattr__(self, "experiment", Experiment(self.experiment))
        if not isinstance(self.d, (int, np.integer)) or self.d < 3 or self.d % 2 == 0:
            raise ParameterError(f"code distance must be an odd integer >= 3, got {self.d!r}")
        if self.experiment is Experiment.MEMORY:
            if self.n < 0:
                raise ParameterError("round count n must be >= 0")
        else:
            if min(self.n1, self.n2, self.n3) < 1:
                raise ParameterError("Bell round counts n1, n2, n3 must all be >= 1")
            if self.m < 1:
                raise ParameterError("routing space length m must be >= 1")

    @classmethod
    def memory(cls, d: int, n: int) -> "CodeParams":
        return cls(d=d, experiment=Experiment.MEMORY, n=n)

    @classmethod
    def bell(cls, d: int, m: int, n1: int, n2: int, n3: int) -> "CodeParams":
        return cls(d=d, experiment=Experiment.BELL, m=m, n1=n1, n2=n2, n3=n3)

    @property
    def layers(self) -> int:
        if self.experiment is Experiment.MEMORY:
            return self.n + 1
        return self.n1 + self.n2 + self.n3 + 2

    @property
    def merged_layers(self) -> tuple[int, int]:
        """Layer span [lo, hi) of the merged phase (Bell only)."""
        lo = self.n1 + 1
        return lo, lo + self.n2

    def regions(self, t: int) -> tuple[Region, ...]:
        d = self.d
        if self.experiment is Experiment.MEMORY:
            return ((0, d),)
        lo, hi = self.merged_layers
        if lo <= t < hi:
            return ((0, 2 * d + self.m),)
        return ((0, d), (d + self.m, 2 * d + self.m))

    def observable_columns(self) -> tuple[int, ...]:
        if self.experiment is Experiment.MEMORY:
            return (0,)
        return (0, 2 * self.d + self.m - 1)

    def to_meta(self) -> dict:
        meta: dict = {"experiment": self.experiment.value, "d": self.d}
        if self.experiment is Experiment.MEMORY:
            meta["n"] = self.n
        else:
            meta.update(m=self.m, n1=self.n1, n2=self.n2, n3=self.n3)
        meta["layers"] = self.layers
        return meta

    @classmethod
    def from_meta(cls, meta: dict) -> "CodeParams":
        if meta["experiment"] == Experiment.MEMORY.value:
            return cls.memory(meta["d"], meta["n"])
        return cls.bell(meta["d"], meta["m"], meta["n1"], meta["n2"], meta["n3"])


@dataclass(frozen=True, eq=False)
class DecoderGraph:
    """Immutable matching graph. Arrays are indexed by local position.

    ``vertex_ids`` / ``edge_ids`` give the ids in the parent graph; for a
    freshly built graph they are ``arange``.
    """

    params: CodeParams
    layers: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    kind: np.ndarray
    u: np.ndarray
    v: np.ndarray
    weight: np.ndarray
    obs: np.ndarray
    edge_kind: np.ndarray
    vertex_ids: np.ndarray
    edge_ids: np.ndarray
    readout: tuple[int, ...] = ()

    def __post_init__(self):
        for arr in (self.x, self.y, self.t, self.kind, self.u, self.v, self.weight,
                    self.obs, self.edge_kind, self.vertex_ids, self.edge_ids):
            arr.flags.writeable = False

    @property
    def num_vertices(self) -> int:
        return len(self.kind)

    @property
    def num_edges(self) -> int:
        return len(self.u)

    @cached_property
    def detectors(self) -> np.ndarray:
        return np.flatnonzero(self.kind == DETECTOR)

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    @cached_property
    def is_boundary(self) -> np.ndarray:
        return self.kind != DETECTOR

    @cached_property
    def full_growth(self) -> np.ndarray:
        return (2 * self.weight).astype(np.int64)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, neighbour, incident edge) adjacency, edges in id order."""
        nv = self.num_vertices
        ends = np.concatenate([self.u, self.v])
        other = np.concatenate([self.v, self.u])
        eidx = np.concatenate([np.arange(self.num_edges)] * 2)
        order = np.lexsort((eidx, ends))
        indptr = np.zeros(nv + 1, dtype=np.int64)
        np.add.at(indptr, ends + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, other[order].astype(np.int64), eidx[order].astype(np.int64)

    @cached_property
    def observable_bits(self) -> int:
        return int(self.obs.max()).bit_length() if self.num_edges else 0

    @cached_property
    def _local_of(self) -> dict[int, int]:
        return {int(g): i for i, g in enumerate(self.vertex_ids)}

    def local_index(self, ids: Sequence[int]) -> np.ndarray:
        lookup = self._local_of
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise ParameterError(f"vertex {exc.args[0]} is not part of this graph") from None

    def with_weights(self, weights: Sequence[int]) -> "DecoderGraph":
        w = np.asarray(weights, dtype=np.int64)
        if w.shape != (self.num_edges,):
            raise ParameterError(f"expected {self.num_edges} weights, got shape {w.shape}")
        if (w < 1).any():
            raise ParameterError("edge weights must be >= 1")
        return _replace(self, weight=w)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        meta = self.params.to_meta()
        meta["layers"] = self.layers
        if self.readout:
            meta["readout"] = list(self.readout)
        return {
            "meta": meta,
            "vertices": [
                {"id": int(i), "x": int(x), "y": int(y), "t": int(t), "kind": VERTEX_KINDS[k]}
                for i, x, y, t, k in zip(self.vertex_ids, self.x, self.y, self.t, self.kind)
            ],
            "edges": [
                {"u": int(self.vertex_ids[a]), "v": int(self.vertex_ids[b]), "w": int(w),
                 "obs": int(o), "kind": EDGE_KINDS[k]}
                for a, b, w, o, k in zip(self.u, self.v, self.weight, self.obs, self.edge_kind)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> "DecoderGraph":
        meta = doc["meta"]
        params = CodeParams.from_meta(meta)
        verts = doc["vertices"]
        ids = [v["id"] for v in verts]
        if ids != list(range(len(ids))):
            raise ParameterError("graph file vertex ids must be dense integers from 0")
        edges = doc["edges"]
        nv = len(verts)
        for e in edges:
            if not (0 <= e["u"] < nv and 0 <= e["v"] < nv) or e["u"] == e["v"]:
                raise ParameterError(f"bad edge endpoints {e['u']}-{e['v']}")
            if e["w"] < 1:
                raise ParameterError("edge weights must be >= 1")
        return cls(
            params=params,
            layers=int(meta["layers"]),
            x=np.array([v["x"] for v in verts], dtype=np.int64),
            y=np.array([v["y"] for v in verts], dtype=np.int64),
            t=np.array([v["t"] for v in verts], dtype=np.int64),
            kind=np.array([VERTEX_KINDS.index(v["kind"]) for v in verts], dtype=np.int8),
            u=np.array([e["u"] for e in edges], dtype=np.int64),
            v=np.array([e["v"] for e in edges], dtype=np.int64),
            weight=np.array([e["w"] for e in edges], dtype=np.int64),
            obs=np.array([e["obs"] for e in edges], dtype=np.int64),
            edge_kind=np.array([EDGE_KINDS.index(e["kind"]) for e in edges], dtype=np.int8),
            vertex_ids=np.arange(nv, dtype=np.int64),
            edge_ids=np.arange(len(edges), dtype=np.int64),
            readout=tuple(meta.get("readout", ())),
        )

    @classmethod
    def load(cls, path: str | Path) -> "DecoderGraph":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _replace(graph: DecoderGraph, **changes) -> DecoderGraph:
    fields = {name: getattr(graph, name) for name in graph.__dataclass_fields__}
    fields.update(changes)
    return DecoderGraph(**fields)


# ---------------------------------------------------------------------------
# construction


def _build(params: CodeParams) -> DecoderGraph:
    d = params.d
    L = params.layers
    obs_cols = params.observable_columns()

    checks_by_layer: list[list[tuple[int, int]]] = []
    for t in range(L):
        checks = [p for r in params.regions(t) for p in z_plaquettes(d, r)]
        checks_by_layer.append(sorted(checks))

    # detectors first, layer-major
    det_id: dict[tuple[int, int, int], int] = {}
    xs, ys, ts, kinds = [], [], [], []
    for t, checks in enumerate(checks_by_layer):
        for a, b in checks:
            det_id[(t, a, b)] = len(xs)
            xs.append(2 * b)
            ys.append(2 * a)
            ts.append(t)
            kinds.append(DETECTOR)

    us, vs, obs, ekind = [], [], [], []
    pending_boundary: list[tuple[int, int, int, int]] = []  # (edge index, x, y, t)
    for t, checks in enumerate(checks_by_layer):
        present = set(checks)
        for lo, hi in params.regions(t):
            for i in range(d):
                for j in range(lo, hi):
                    adj = [(a, b) for a in (i, i + 1) for b in (j, j + 1) if (a, b) in present]
                    o = sum(1 << k for k, col in enumerate(obs_cols) if col == j)
                    if len(adj) == 2:
                        us.append(det_id[(t, *adj[0])])
                        vs.append(det_id[(t, *adj[1])])
                        ekind.append(SPATIAL)
                    elif len(adj) == 1:
                        (a, b), = adj
                        missing_b = j if b == j + 1 else j + 1
                        us.append(det_id[(t, a, b)])
                        vs.append(-1)
                        pending_boundary.append((len(us) - 1, 2 * missing_b, 2 * i + 1, t))
                        ekind.append(BOUNDARY)
                    else:  # pragma: no cover - every data qubit touches a Z check
                        continue
                    obs.append(o)
        if t + 1 < L:
            nxt = set(checks_by_layer[t + 1])
            for a, b in checks:
                if (a, b) in nxt:
                    us.append(det_id[(t, a, b)])
                    vs.append(det_id[(t + 1, a, b)])
                    obs.append(0)
                    ekind.append(TEMPORAL)

    for eidx, bx, by, bt in pending_boundary:
        vs[eidx] = len(xs)
        xs.append(bx)
        ys.append(by)
        ts.append(bt)
        kinds.append(SPATIAL_BOUNDARY)

    readout: tuple[int, ...] = ()
    if params.experiment is Experiment.BELL:
        lo, _ = params.merged_layers
        before = set(checks_by_layer[lo - 1])
        readout = tuple(det_id[(lo, a, b)] for a, b in checks_by_layer[lo] if (a, b) not in before)

    nv, ne = len(xs), len(us)
    return DecoderGraph(
        params=params,
        layers=L,
        x=np.array(xs, dtype=np.int64),
        y=np.array(ys, dtype=np.int64),
        t=np.array(ts, dtype=np.int64),
        kind=np.array(kinds, dtype=np.int8),
        u=np.array(us, dtype=np.int64),
        v=np.array(vs, dtype=np.int64),
        weight=np.ones(ne, dtype=np.int64),
        obs=np.array(obs, dtype=np.int64),
        edge_kind=np.array(ekind, dtype=np.int8),
        vertex_ids=np.arange(nv, dtype=np.int64),
        edge_ids=np.arange(ne, dtype=np.int64),
        readout=readout,
    )


def build_memory_graph(params: CodeParams, weights: Sequence[int] | None = None) -> DecoderGraph:
    """Z-check decoder graph of an ``n``-round memory experiment (``n+1`` layers)."""
    if params.experiment is not Experiment.MEMORY:
        raise ParameterError("build_memory_graph needs memory parameters")
    graph = _build(params)
    return graph if weights is None else graph.with_weights(weights)


def build_bell_graph(params: CodeParams, weights: Sequence[int] | None = None) -> DecoderGraph:
    """Split / merged / split decoder graph of the Bell-state experiment.

    Checks appearing for the first time in the merged patch have no temporal
    edge into the previous layer; ``graph.readout`` lists those first-layer
    detectors (the joint-measurement readout set).
    """
    if params.experiment is not Experiment.BELL:
        raise ParameterError("build_bell_graph needs Bell parameters")
    if params.m > params.d:
        warnings.warn(
            f"routing space m={params.m} exceeds d={params.d}; the merged-phase window "
            "will be much wider than the others",
            stacklevel=2,
        )
    graph = _build(params)
    return graph if weights is None else graph.with_weights(weights)


def build_graph(params: CodeParams, weights: Sequence[int] | None = None) -> DecoderGraph:
    if params.experiment is Experiment.MEMORY:
        return build_memory_graph(params, weights)
    return build_bell_graph(params, weights)


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class Window:
    index: int
    start: int
    stop: int
    core_start: int
    core_stop: int
    lower_seam: int | None = None
    upper_seam: int | None = None

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Seam:
    index: int
    lower_layer: int  # last layer of the lower core
    upper_layer: int  # first layer of the upper core
    below: int
    above: int


@dataclass(frozen=True)
class WindowPlan:
    step: int
    window_size: int
    layers: int
    windows: tuple[Window, ...]
    seams: tuple[Seam, ...] = field(default=())


def _tile(lo: int, hi: int, step: int) -> list[tuple[int, int]]:
    return [(c, min(c + step, hi)) for c in range(lo, hi, step)]


def plan_windows(graph: DecoderGraph, step: int) -> WindowPlan:
    """Temporal partition into cores of ``step`` layers with ``step``-layer buffers.

    Bell graphs get a single enlarged core spanning the whole merged phase.
    """
    L = graph.layers
    if not isinstance(step, (int, np.integer)) or step <= 0:
        raise ParameterError(f"step must be a positive integer, got {step!r}")
    if step > L:
        raise ParameterError(f"step {step} exceeds the layer count {L}")

    if graph.params.experiment is Experiment.BELL:
        mlo, mhi = graph.params.merged_layers
        cores = _tile(0, mlo, step) + [(mlo, mhi)] + _tile(mhi, L, step)
    else:
        cores = _tile(0, L, step)

    seams = tuple(
        Seam(index=k, lower_layer=cores[k][1] - 1, upper_layer=cores[k][1], below=k, above=k + 1)
        for k in range(len(cores) - 1)
    )
    windows = tuple(
        Window(
            index=k,
            start=max(0, c0 - step),
            stop=min(L, c1 + step),
            core_start=c0,
            core_stop=c1,
            lower_seam=k - 1 if k > 0 else None,
            upper_seam=k if k < len(cores) - 1 else None,
        )
        for k, (c0, c1) in enumerate(cores)
    )
    return WindowPlan(step=step, window_size=3 * step, layers=L, windows=windows, seams=seams)


def _edge_layers(graph: DecoderGraph) -> tuple[np.ndarray, np.ndarray]:
    tu, tv = graph.t[graph.u], graph.t[graph.v]
    return np.minimum(tu, tv), np.maximum(tu, tv)


def _induced(graph: DecoderGraph, lo: int, hi: int, open_faces: bool) -> DecoderGraph:
    """Subgraph on layers [lo, hi); crossing temporal edges optionally kept with
    their outside endpoint turned into a seam-boundary vertex."""
    if not (0 <= lo < hi <= graph.layers):
        raise ParameterError(f"layer span [{lo}, {hi}) outside [0, {graph.layers})")
    elo, ehi = _edge_layers(graph)
    inside_e = (elo >= lo) & (ehi < hi)
    crossing = np.zeros_like(inside_e)
    if open_faces:
        crossing = (graph.edge_kind == TEMPORAL) & (
            ((elo == lo - 1) & (ehi == lo)) | ((elo == hi - 1) & (ehi == hi))
        )
    keep_e = np.flatnonzero(inside_e | crossing)

    in_v = (graph.t >= lo) & (graph.t < hi)
    det = np.flatnonzero(in_v & (graph.kind == DETECTOR))
    bnd = np.flatnonzero(in_v & (graph.kind != DETECTOR))
    ends = np.concatenate([graph.u[crossing], graph.v[crossing]])
    seam = np.unique(ends[~in_v[ends]])
    order = np.concatenate([det, bnd, seam])
    local = np.full(graph.num_vertices, -1, dtype=np.int64)
    local[order] = np.arange(len(order))

    kind = graph.kind[order].copy()
    kind[len(det) + len(bnd):] = SEAM_BOUNDARY
    return DecoderGraph(
        params=graph.params,
        layers=graph.layers,
        x=graph.x[order],
        y=graph.y[order],
        t=graph.t[order],
        kind=kind,
        u=local[graph.u[keep_e]],
        v=local[graph.v[keep_e]],
        weight=graph.weight[keep_e],
        obs=graph.obs[keep_e],
        edge_kind=graph.edge_kind[keep_e],
        vertex_ids=graph.vertex_ids[order],
        edge_ids=graph.edge_ids[keep_e],
        readout=(),
    )


def subgraph_for_window(graph: DecoderGraph, window: Window) -> DecoderGraph:
    """Window subgraph with open (seam-boundary) faces inside the volume."""
    if window.stop > graph.layers or window.start < 0 or window.start >= window.stop:
        raise ParameterError(f"window [{window.start}, {window.stop}) out of range")
    return _induced(graph, window.start, window.stop, open_faces=True)


def seam_subgraph(graph: DecoderGraph, seam: Seam) -> DecoderGraph:
    """Two-layer graph of a seam; its outer temporal faces are closed."""
    return _induced(graph, seam.lower_layer, seam.upper_layer + 1, open_faces=False)
