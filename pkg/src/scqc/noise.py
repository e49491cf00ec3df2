"""Edge-flip noise on decoder graphs, detection events and syndrome bandwidth."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import ParameterError
from .surface_graph import DecoderGraph, Experiment

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@numba.njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _sample_kernel(key, threshold, shot_start, nshots, eu, ev, det_index, nd):
    ne = eu.shape[0]
    flips = np.zeros((nshots, ne), dtype=np.uint8)
    events = np.zeros((nshots, nd), dtype=np.uint8)
    for s in range(nshots):
        shot = np.uint64(shot_start + s)
        for e in range(ne):
            counter = (shot << np.uint64(32)) | np.uint64(e)
            if _mix64(key + counter * _GOLDEN) < threshold:
                flips[s, e] = 1
                a = det_index[eu[e]]
                b = det_index[ev[e]]
                if a >= 0:
                    events[s, a] ^= 1
                if b >= 0:
                    events[s, b] ^= 1
    return flips, events


@dataclass(frozen=True)
class NoiseParams:
    p: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.p < 0.5):
            raise ParameterError(f"error probability must lie in (0, 0.5), got {self.p}")
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError("seed must be a 64-bit unsigned integer")

    @property
    def key(self) -> np.uint64:
        return np.uint64(_mix_scalar(int(self.seed) ^ 0x5C51_D3A7_E0F0_0D1E))

    @property
    def threshold(self) -> np.uint64:
        return np.uint64(min(int(self.p * 2.0**64), 2**64 - 1))


def _mix_scalar(z: int) -> int:
    mask = (1 << 64) - 1
    z &= mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SyndromeVolume:
    """Detection events of one shot plus the flipped-edge ground truth."""

    events: np.ndarray  # uint8 per detector, layer-major
    flips: np.ndarray  # uint8 per edge
    logical_truth: int  # bit k = parity of flipped edges carrying observable k

    @property
    def truth(self) -> np.ndarray:
        return np.flatnonzero(self.flips)

    @property
    def defects(self) -> np.ndarray:
        return np.flatnonzero(self.events)


@dataclass(frozen=True)
class SyndromeBatch:
    events: np.ndarray  # (shots, detectors) uint8
    flips: np.ndarray  # (shots, edges) uint8
    logical_truth: np.ndarray  # (shots,) int64 bitmask

    def __len__(self) -> int:
        return self.events.shape[0]

    def __getitem__(self, k: int) -> SyndromeVolume:
        return SyndromeVolume(self.events[k], self.flips[k], int(self.logical_truth[k]))


def _det_index(graph: DecoderGraph) -> np.ndarray:
    idx = np.full(graph.num_vertices, -1, dtype=np.int64)
    idx[graph.detectors] = np.arange(graph.num_detectors)
    return idx


def observable_parity(graph: DecoderGraph, edge_bits: np.ndarray) -> np.ndarray:
    """Observable bitmask of one or many edge-bit vectors (last axis = edges)."""
    bits = np.atleast_2d(edge_bits).astype(np.int64)
    out = np.zeros(bits.shape[0], dtype=np.int64)
    for k in range(graph.observable_bits):
        mask = ((graph.obs >> k) & 1).astype(np.int64)
        out |= ((bits @ mask) & 1) << k
    return out if np.ndim(edge_bits) > 1 else out[:1]


def sample_batch(graph: DecoderGraph, noise: NoiseParams, shots: int, start: int = 0) -> SyndromeBatch:
    """Sample shots ``start .. start+shots-1``. Each (seed, shot, edge) triple is
    hashed independently, so any split of the shot range gives the same data."""
    if shots < 0 or start < 0 or start + shots > 2**32:
        raise ParameterError("shot range must lie in [0, 2**32)")
    flips, events = _sample_kernel(
        noise.key, noise.threshold, np.uint64(start), shots,
        graph.u, graph.v, _det_index(graph), graph.num_detectors,
    )
    return SyndromeBatch(events, flips, observable_parity(graph, flips) if shots else np.zeros(0, np.int64))


def sample_errors(graph: DecoderGraph, noise: NoiseParams, shot: int = 0) -> SyndromeVolume:
    return sample_batch(graph, noise, 1, start=shot)[0]


def volume_from_flips(graph: DecoderGraph, flipped: Iterable[int]) -> SyndromeVolume:
    """Build a volume from an explicit set of flipped edges (testing hook)."""
    flips = np.zeros(graph.num_edges, dtype=np.uint8)
    for e in flipped:
        if not 0 <= e < graph.num_edges:
            raise ParameterError(f"edge {e} out of range")
        flips[e] ^= 1
    return SyndromeVolume(events_from_flips(graph, flips), flips, int(observable_parity(graph, flips)[0]))


def events_from_flips(graph: DecoderGraph, flips: np.ndarray) -> np.ndarray:
    idx = _det_index(graph)
    events = np.zeros(graph.num_detectors, dtype=np.int64)
    for ends in (graph.u, graph.v):
        sel = idx[ends] >= 0
        np.add.at(events, idx[ends][sel], flips[sel].astype(np.int64))
    return (events & 1).astype(np.uint8)


def detection_event_stats(volumes: Sequence[SyndromeVolume] | SyndromeBatch) -> float:
    """Fraction of detector bits set, averaged over volumes."""
    if isinstance(volumes, SyndromeBatch):
        if len(volumes) == 0:
            raise ParameterError("need at least one volume")
        return float(volumes.events.mean())
    if len(volumes) == 0:
        raise ParameterError("need at least one volume")
    return float(np.mean([v.events.mean() for v in volumes]))


# ---------------------------------------------------------------------------
# detection-event compression


def ceil_log2(x: int) -> int:
    return max(0, (x - 1).bit_length())


@dataclass(frozen=True)
class EncodedEvents:
    bits: np.ndarray  # uint8 0/1, concatenated per-ancilla records
    n: int
    ancillas: int
    count_width: int
    index_width: int
    events: int

    @property
    def total_bits(self) -> int:
        return len(self.bits)

    @property
    def bits_per_ancilla(self) -> float:
        return self.total_bits / self.ancillas

    @property
    def index_bits_per_ancilla(self) -> float:
        """Payload excluding the fixed-width count fields."""
        return self.events * self.index_width / self.ancillas


def _push(out: list[int], value: int, width: int) -> None:
    out.extend((value >> k) & 1 for k in range(width - 1, -1, -1))


def encode_detection_events(graph: DecoderGraph, volume: SyndromeVolume | np.ndarray, n: int) -> EncodedEvents:
    """Per-ancilla record: event count, then the layer index of each event."""
    if graph.params.experiment is not Experiment.MEMORY or graph.layers != n + 1:
        raise ParameterError(f"expected a memory graph with {n + 1} layers")
    events = volume.events if isinstance(volume, SyndromeVolume) else np.asarray(volume)
    per_layer = graph.num_detectors // graph.layers
    grid = events.reshape(graph.layers, per_layer)
    cw, iw = ceil_log2(n + 2), ceil_log2(n + 1)
    out: list[int] = []
    for a in range(per_layer):
        layers = np.flatnonzero(grid[:, a])
        _push(out, len(layers), cw)
        for t in layers:
            _push(out, int(t), iw)
    return EncodedEvents(np.array(out, dtype=np.uint8), n, per_layer, cw, iw, int(grid.sum()))


def decode_detection_events(encoded: EncodedEvents) -> np.ndarray:
    bits = encoded.bits
    pos = 0

    def take(width: int) -> int:
        nonlocal pos
        value = 0
        for b in bits[pos:pos + width]:
            value = (value << 1) | int(b)
        pos += width
        return value

    grid = np.zeros((encoded.n + 1, encoded.ancillas), dtype=np.uint8)
    for a in range(encoded.ancillas):
        for _ in range(take(encoded.count_width)):
            grid[take(encoded.index_width), a] = 1
    if pos != len(bits):
        raise ParameterError("trailing bits in encoded detection events")
    return grid.reshape(-1)


def syndrome_bandwidth(p_detect: float, n: int, d: int, cycle_time: float) -> float:
    """Bits per second for ``d**2 - 1`` ancillas at ``p_detect * n * log2(n)``
    bits per ancilla per ``n``-round shot."""
    if p_detect < 0 or n < 1 or d < 1 or cycle_time <= 0:
        raise ParameterError("bandwidth inputs must be positive")
    ancillas = d * d - 1
    return ancillas * p_detect * n * math.log2(n) / (n * cycle_time)


# ---------------------------------------------------------------------------
# syndrome file: "SCQS" | u16 version | u16 reserved | u32 detectors | u32 layers | u32 shots
# followed by ceil(detectors/8) bytes per shot, little-endian bit order.

_MAGIC = b"SCQS"
_VERSION = 1
_HEADER = struct.Struct("<4sHHIII")


@dataclass(frozen=True)
class SyndromeFileHeader:
    version: int
    detectors: int
    layers: int
    shots: int


def write_syndrome_file(path: str | Path, events: np.ndarray, layers: int) -> None:
    events = np.atleast_2d(np.asarray(events, dtype=np.uint8))
    shots, detectors = events.shape
    packed = np.packbits(events, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, 0, detectors, layers, shots))
        fh.write(packed.tobytes())


def read_syndrome_file(path: str | Path) -> tuple[SyndromeFileHeader, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParameterError("syndrome file too short")
    magic, version, _, detectors, layers, shots = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ParameterError("not a syndrome file (bad magic)")
    if version != _VERSION:
        raise ParameterError(f"unsupported syndrome file version {version}")
    row = (detectors + 7) // 8
    body = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    if body.size != row * shots:
        raise ParameterError("syndrome file body size does not match header")
    events = np.unpackbits(body.reshape(shots, row), axis=1, bitorder="little")[:, :detectors]
    return SyndromeFileHeader(version, detectors, layers, shots), events
