"""Discrete-event model of the electronics layer.

Devices (AWGs and digitizers) listen to a shared broadcast wire. A device
queues a Play/Wait word when the word's target is in its partition mask; a
Trigger word starts every triggered device's queue at a common epoch and then
flushes it. Measurement pulses produce result bits through a pluggable model
and are stored in a result memory read back through FMR loads.
"""

from __future__ import annotations

import bisect
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import ParameterError, ScheduleError
from .qisa import (
    BROADCAST,
    DEFAULT_LAYOUT,
    WORD_BYTES,
    DecodeTables,
    Driver,
    IqeCommand,
    MmioLayout,
    Opcode,
    PseudoInstruction,
    expand_pseudo,
)

PARTITION_IDS = 4096
MEASURE_INDEX = 128


class DeviceKind(str, Enum):
    AWG = "AWG"
    DIGITIZER = "Digitizer"


@dataclass(frozen=True)
class DeviceConfig:
    id: int
    kind: DeviceKind
    mask: frozenset[int]
    channels: tuple[int, ...]
    jitter_ps: float = 0.0
    tag: int = 0  # free-form label, e.g. distance from the trigger source

    def __post_init__(self):
        object.__setattr__(self, "kind", DeviceKind(self.kind))
        object.__setattr__(self, "mask", frozenset(int(m) for m in self.mask))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if any(not 0 <= m < PARTITION_IDS for m in self.mask):
            raise ParameterError(f"device {self.id}: partition ids must lie in [0, {PARTITION_IDS})")
        if not self.channels:
            raise ParameterError(f"device {self.id} owns no channels")
        if self.jitter_ps < 0:
            raise ParameterError("jitter must be non-negative")

    def accepts(self, target: int) -> bool:
        return target == BROADCAST or target in self.mask

    def handles(self, index: int) -> bool:
        return (index >= MEASURE_INDEX) == (self.kind is DeviceKind.DIGITIZER)

    def ports_in(self, mask: int) -> bool:
        return any(mask >> k & 1 for k in range(len(self.channels)))

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "mask": sorted(self.mask),
                "channels": list(self.channels), "jitter_ps": self.jitter_ps, "tag": self.tag}


@dataclass(frozen=True)
class DurationTable:
    reset: int = 600
    single: int = 20
    two: int = 40
    measure: int = 600

    def __call__(self, index: int) -> int:
        if index == 0:
            return self.reset
        if index < 64:
            return self.single
        if index < MEASURE_INDEX:
            return self.two
        return self.measure


# ---------------------------------------------------------------------------
# measurement models


class MeasurementModel(Protocol):
    def sample(self, channel: int, elapsed_ns: float, rng: np.random.Generator) -> int: ...


@dataclass(frozen=True)
class ConstantModel:
    value: int = 0

    def sample(self, channel: int, elapsed_ns: float, rng: np.random.Generator) -> int:
        return self.value


@dataclass(frozen=True)
class BernoulliModel:
    q: float

    def sample(self, channel: int, elapsed_ns: float, rng: np.random.Generator) -> int:
        return int(rng.random() < self.q)


@dataclass(frozen=True)
class T1Model:
    """Excited with probability exp(-elapsed/T1); ``elapsed`` is the time since
    the end of the most recent excitation pulse (infinite if none)."""

    t1_ns: float

    def probability(self, elapsed_ns: float) -> float:
        return math.exp(-elapsed_ns / self.t1_ns) if math.isfinite(elapsed_ns) else 0.0

    def sample(self, channel: int, elapsed_ns: float, rng: np.random.Generator) -> int:
        return int(rng.random() < self.probability(elapsed_ns))


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class Pulse:
    channel: int
    start: float  # ns
    index: int
    duration: int
    device: int
    trigger: int
    replay: int
    skew: float = 0.0  # jitter offset already included in ``start``

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class PulseSchedule:
    pulses: list[Pulse] = field(default_factory=list)
    epochs: list[float] = field(default_factory=list)  # trigger epochs, one per replay

    def by_channel(self) -> dict[int, list[Pulse]]:
        out: dict[int, list[Pulse]] = {}
        for p in sorted(self.pulses, key=lambda p: (p.channel, p.start)):
            out.setdefault(p.channel, []).append(p)
        return out

    def extend(self, other: "PulseSchedule") -> None:
        self.pulses.extend(other.pulses)
        self.epochs.extend(other.epochs)

    @property
    def end(self) -> float:
        return max((p.end for p in self.pulses), default=0.0)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "channels": {
                str(ch): [{"start": p.start, "index": p.index, "duration": p.duration} for p in ps]
                for ch, ps in self.by_channel().items()
            },
        }


# ---------------------------------------------------------------------------
# simulator


class IqeSimulator:
    def __init__(
        self,
        devices: Sequence[DeviceConfig],
        durations: DurationTable | None = None,
        model: MeasurementModel | None = None,
        seed: int = 0,
        result_slots: int = DEFAULT_LAYOUT["FMR"].count,
    ):
        seen: set[int] = set()
        for dev in devices:
            clash = seen.intersection(dev.channels)
            if clash:
                raise ParameterError(f"channel ids {sorted(clash)} owned by more than one device")
            seen.update(dev.channels)
        self.devices = list(devices)
        self.durations = durations or DurationTable()
        self.model = model or ConstantModel(0)
        self.rng = np.random.default_rng(seed)
        self.queues: list[list[IqeCommand]] = [[] for _ in self.devices]
        self.results = np.full(result_slots, -1, dtype=np.int64)
        self._written = np.zeros(result_slots, dtype=bool)
        self.now = 0.0
        self.triggers = 0
        self.wire_words = 0
        self.enqueued = 0
        self.schedule = PulseSchedule()
        self._channel_end: dict[int, float] = {}

    @property
    def wire_bytes(self) -> int:
        return self.wire_words * WORD_BYTES

    def dispatch(self, word: int | IqeCommand) -> PulseSchedule | None:
        """Put one word on the broadcast wire."""
        cmd = word if isinstance(word, IqeCommand) else IqeCommand.decode(word)
        self.wire_words += 1
        if cmd.opcode is Opcode.TRIGGER:
            return self.trigger_execute(cmd)
        if cmd.opcode is Opcode.CONFIG:
            return None
        for k, dev in enumerate(self.devices):
            if dev.accepts(cmd.target):
                self.queues[k].append(cmd)
                self.enqueued += 1
        return None

    def _local_sequence(self, dev: DeviceConfig, queue: Iterable[IqeCommand]) -> tuple[list[tuple[float, int, int]], float]:
        """(offset, channel, index) pulses of one queue and its total length."""
        cursor = 0.0
        end = 0.0
        pulses = []
        for cmd in queue:
            if cmd.opcode is Opcode.WAIT:
                cursor += cmd.time
                end = max(end, cursor)
            elif cmd.opcode is Opcode.PLAY and dev.handles(cmd.index):
                chans = (cmd.target,) if cmd.target in dev.channels else dev.channels
                for ch in chans:
                    pulses.append((cursor, ch, cmd.index))
                end = max(end, cursor + self.durations(cmd.index))
        return pulses, end

    def trigger_execute(self, cmd: IqeCommand | None = None) -> PulseSchedule:
        """Start all triggered queues at the current epoch, replay them, flush."""
        cmd = cmd or IqeCommand.trigger((1 << 20) - 1, 1, 0)
        fired = [k for k, dev in enumerate(self.devices) if self.queues[k] and dev.ports_in(cmd.mask)]
        out = PulseSchedule()
        if not fired:
            warnings.warn("trigger with no queued commands on the masked ports", RuntimeWarning, stacklevel=2)
            return out
        trig_id = self.triggers
        self.triggers += 1
        seqs = {}
        length = 0.0
        for k in fired:
            seqs[k] = self._local_sequence(self.devices[k], self.queues[k])
            length = max(length, seqs[k][1])
            self.queues[k] = []
        offsets = {
            k: (self.rng.normal(0.0, self.devices[k].jitter_ps * 1e-3) if self.devices[k].jitter_ps else 0.0)
            for k in fired
        }
        spacing = max(float(cmd.interval), length)
        for r in range(cmd.count):
            epoch = self.now + r * spacing
            out.epochs.append(epoch)
            for k in fired:
                for off, ch, index in seqs[k][0]:
                    out.pulses.append(Pulse(ch, epoch + off + offsets[k], index, self.durations(index),
                                            self.devices[k].id, trig_id, r, offsets[k]))
        self.now += cmd.count * spacing
        self._check_overlap(out)
        self._measure(out)
        self.schedule.extend(out)
        return out

    def _check_overlap(self, sched: PulseSchedule) -> None:
        # checked on nominal (jitter-free) times: skew is not a scheduling conflict
        for ch, pulses in sched.by_channel().items():
            prev = self._channel_end.get(ch, -math.inf)
            for p in pulses:
                if p.start - p.skew < prev - 1e-9:
                    raise ScheduleError(f"overlapping pulses on channel {ch} at {p.start:.3f} ns")
                prev = p.end - p.skew
            self._channel_end[ch] = prev

    def _measure(self, sched: PulseSchedule) -> None:
        self._written[:] = False
        self.results[:] = -1
        ordered = sorted(sched.pulses, key=lambda p: (p.start, p.channel))
        drives: dict[int, list[Pulse]] = {}
        for p in sorted(sched.pulses, key=lambda p: p.end):
            if p.index < MEASURE_INDEX:
                drives.setdefault(p.replay, []).append(p)
        ends = {r: [q.end for q in ps] for r, ps in drives.items()}
        slot = 0
        for p in ordered:
            if p.index < MEASURE_INDEX:
                continue
            k = bisect.bisect_right(ends.get(p.replay, []), p.start)
            last = drives[p.replay][k - 1] if k else None
            elapsed = math.inf if last is None or last.index == 0 else p.start - last.end
            if slot >= len(self.results):
                raise ParameterError("result memory overflow")
            self.results[slot] = self.model.sample(p.channel, elapsed, self.rng)
            self._written[slot] = True
            slot += 1

    def fmr_read(self, offset: int) -> int:
        """Read the int32 result at byte ``offset`` of the result memory."""
        if offset % 4 or not 0 <= offset < 4 * len(self.results):
            raise ParameterError(f"FMR offset {offset} outside the result memory or unaligned")
        slot = offset // 4
        if not self._written[slot]:
            warnings.warn(f"FMR slot {slot} read before any result was written", RuntimeWarning, stacklevel=2)
            return -1
        return int(self.results[slot])


def load_topology(path: str | Path) -> tuple[list[DeviceConfig], DurationTable]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return topology_from_dict(doc)


def topology_from_dict(doc: Mapping) -> tuple[list[DeviceConfig], DurationTable]:
    try:
        devices = [
            DeviceConfig(int(d["id"]), DeviceKind(d["kind"]), frozenset(d["mask"]), tuple(d["channels"]),
                         float(d.get("jitter_ps", 0.0)), int(d.get("tag", 0)))
            for d in doc["devices"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed topology: {exc}") from None
    return devices, DurationTable(**doc.get("durations", {}))


def qubit_topology(
    qubits: int,
    groups: Mapping[int, Iterable[int]] = (),
    jitter_ps: float = 0.0,
) -> list[DeviceConfig]:
    """One AWG (drive channel ``2q``) and one digitizer (readout ``2q+1``) per
    qubit. Each device listens to its own channel id plus every group that
    contains its qubit."""
    member: dict[int, set[int]] = {q: set() for q in range(qubits)}
    for gid, qs in dict(groups).items():
        for q in qs:
            member[q].add(gid)
    if 2 * qubits > min(dict(groups) or [PARTITION_IDS - 1]):
        raise ParameterError("channel ids collide with group ids; use fewer qubits or higher group ids")
    devices = []
    for q in range(qubits):
        devices.append(DeviceConfig(2 * q, DeviceKind.AWG, frozenset({2 * q} | member[q]), (2 * q,), jitter_ps))
        devices.append(DeviceConfig(2 * q + 1, DeviceKind.DIGITIZER, frozenset({2 * q + 1} | member[q]),
                                    (2 * q + 1,), jitter_ps))
    return devices


# ---------------------------------------------------------------------------
# CPU + driver + electronics


@dataclass
class RunResult:
    schedule: PulseSchedule
    loads: list[int]
    commands: list[IqeCommand]
    mmio_accesses: int
    wire_bytes: int


class ControlStack:
    """Runs pseudo-instruction programs through the driver into the simulator."""

    def __init__(self, sim: IqeSimulator, tables: DecodeTables | None = None, layout: MmioLayout = DEFAULT_LAYOUT):
        self.sim = sim
        self.layout = layout
        self.driver = Driver(layout, tables)

    def run(self, program: Iterable[PseudoInstruction]) -> RunResult:
        sched = PulseSchedule()
        loads: list[int] = []
        commands: list[IqeCommand] = []
        accesses = 0
        bytes0 = self.sim.wire_bytes
        fmr_base = self.layout["FMR"].base
        for instr in program:
            for access in expand_pseudo(instr, self.layout):
                accesses += 1
                if access.direction == "load":
                    loads.append(self.sim.fmr_read(access.address - fmr_base))
                    continue
                for cmd in self.driver.execute(access):
                    commands.append(cmd)
                    part = self.sim.dispatch(cmd)
                    if part is not None:
                        sched.extend(part)
        return RunResult(sched, loads, commands, accesses, self.sim.wire_bytes - bytes0)
