"""Pseudo-instructions, their MMIO expansion, and the 64-bit electronics wire format.

Layering: a pseudo-instruction expands to one or more MMIO accesses; the driver
turns each store into zero or more ``IqeCommand`` words using its decode
tables (staged trigger operands, gate table, app table).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ParameterError, UnconfiguredEntryError, UnmappedAddressError

# ---------------------------------------------------------------------------
# MMIO layout


@dataclass(frozen=True)
class MmioRegion:
    name: str
    base: int
    elem_size: int  # bytes per element
    count: int

    @property
    def size(self) -> int:
        return self.elem_size * self.count

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, address: int) -> bool:
        return self.base <= address < self.end


@dataclass(frozen=True)
class MmioLayout:
    regions: tuple[MmioRegion, ...]

    def __post_init__(self):
        spans = sorted((r.base, r.end, r.name) for r in self.regions)
        for (_, e0, n0), (b1, _, n1) in zip(spans, spans[1:]):
            if b1 < e0:
                raise ParameterError(f"MMIO regions {n0} and {n1} overlap")

    def __getitem__(self, name: str) -> MmioRegion:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def locate(self, address: int) -> tuple[MmioRegion, int]:
        for r in self.regions:
            if r.contains(address):
                return r, address - r.base
        raise UnmappedAddressError(f"address {address:#010x} is not mapped")


DEFAULT_LAYOUT = MmioLayout((
    MmioRegion("TRIGGER", 0x40001000, 4, 3),
    MmioRegion("WAIT", 0x40002000, 4, 1),
    MmioRegion("FMR", 0x40003000, 4, 0x1400),
    MmioRegion("SQ", 0x40010000, 1, 0x4000),
    MmioRegion("TQ", 0x40014000, 1, 0x8000),
    MmioRegion("PLAY", 0x4001C000, 1, 0x8000),
    MmioRegion("APP", 0x40024000, 1, 0x4000),
))

TRIG_INTERVAL, TRIG_COUNT, TRIG_MASK = 0, 4, 8  # byte offsets inside TRIGGER


@dataclass(frozen=True)
class MmioAccess:
    address: int
    width: int  # bytes: 1 or 4
    value: int
    direction: str = "store"  # "store" | "load"

    def to_dict(self) -> dict:
        return {"address": f"{self.address:#010x}", "width": self.width,
                "value": self.value, "direction": self.direction}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MmioAccess":
        addr = doc["address"]
        return cls(int(addr, 0) if isinstance(addr, str) else int(addr),
                   int(doc["width"]), int(doc["value"]), doc.get("direction", "store"))


# ---------------------------------------------------------------------------
# pseudo-instructions

PSEUDO_KINDS = ("trig", "qwait", "play", "fmr", "sq", "tq", "app")
_BYTE_REGION = {"play": "PLAY", "sq": "SQ", "tq": "TQ", "app": "APP"}


@dataclass(frozen=True)
class PseudoInstruction:
    """One pseudo-instruction.

    ``offset`` is the channel / qubit / pair / group id (or the FMR byte
    offset), ``value`` the 8-bit waveform / gate / op index. ``time`` is the
    qwait duration in ns; ``mask``, ``count`` and ``interval`` are trig operands.
    """

    kind: str
    offset: int = 0
    value: int = 0
    time: int = 0
    mask: int = 0
    count: int = 1
    interval: int = 0

    def __post_init__(self):
        if self.kind not in PSEUDO_KINDS:
            raise ParameterError(f"unknown pseudo-instruction {self.kind!r}")

    def to_dict(self) -> dict:
        keys = {
            "trig": ("mask", "count", "interval"), "qwait": ("time",), "fmr": ("offset",),
        }.get(self.kind, ("offset", "value"))
        return {"op": self.kind, **{k: getattr(self, k) for k in keys}}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PseudoInstruction":
        fields_ = {k: int(v) for k, v in doc.items() if k != "op"}
        return cls(doc["op"], **fields_)

    def __str__(self) -> str:
        args = ", ".join(str(v) for k, v in self.to_dict().items() if k != "op")
        return f"{self.kind} {args}"


def trig(mask: int, count: int = 1, interval: int = 0) -> PseudoInstruction:
    return PseudoInstruction("trig", mask=mask, count=count, interval=interval)


def qwait(time_ns: int) -> PseudoInstruction:
    return PseudoInstruction("qwait", time=time_ns)


def play(channel: int, index: int) -> PseudoInstruction:
    return PseudoInstruction("play", offset=channel, value=index)


def fmr(offset: int) -> PseudoInstruction:
    return PseudoInstruction("fmr", offset=offset)


def sq(qubit: int, gate: int) -> PseudoInstruction:
    return PseudoInstruction("sq", offset=qubit, value=gate)


def tq(pair: int, gate: int) -> PseudoInstruction:
    return PseudoInstruction("tq", offset=pair, value=gate)


def app(group: int, op: int) -> PseudoInstruction:
    return PseudoInstruction("app", offset=group, value=op)


def _u32(value: int, what: str) -> int:
    if not 0 <= value < 2**32:
        raise ParameterError(f"{what} {value} does not fit 32 bits")
    return value


def expand_pseudo(instr: PseudoInstruction, layout: MmioLayout = DEFAULT_LAYOUT) -> list[MmioAccess]:
    """MMIO accesses performed by one pseudo-instruction, in issue order."""
    k = instr.kind
    if k == "trig":
        base = layout["TRIGGER"].base
        return [
            MmioAccess(base + TRIG_MASK, 4, _u32(instr.mask, "channel mask")),
            MmioAccess(base + TRIG_COUNT, 4, _u32(instr.count, "repeat count")),
            MmioAccess(base + TRIG_INTERVAL, 4, _u32(instr.interval, "repeat interval")),
        ]
    if k == "qwait":
        return [MmioAccess(layout["WAIT"].base, 4, _u32(instr.time, "wait time"))]
    if k == "fmr":
        region = layout["FMR"]
        if not 0 <= instr.offset <= region.size - 4 or instr.offset % 4:
            raise ParameterError(f"FMR offset {instr.offset} outside the result memory or unaligned")
        return [MmioAccess(region.base + instr.offset, 4, 0, "load")]
    region = layout[_BYTE_REGION[k]]
    if not 0 <= instr.offset < region.size:
        raise ParameterError(f"{k} offset {instr.offset} exceeds the {region.name} region")
    if not 0 <= instr.value < 256:
        raise ParameterError(f"{k} index {instr.value} does not fit 8 bits")
    return [MmioAccess(region.base + instr.offset, 1, instr.value)]


def expand_program(program: Iterable[PseudoInstruction], layout: MmioLayout = DEFAULT_LAYOUT) -> list[MmioAccess]:
    return [a for instr in program for a in expand_pseudo(instr, layout)]


def save_program(path: str | Path, program: Sequence[PseudoInstruction]) -> None:
    Path(path).write_text(json.dumps([p.to_dict() for p in program], indent=1) + "\n", encoding="utf-8")


def load_program(path: str | Path) -> list[PseudoInstruction]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise ParameterError("program file must be a JSON array")
    return [PseudoInstruction.from_dict(d) for d in doc]


# ---------------------------------------------------------------------------
# wire format


class Opcode(IntEnum):
    PLAY = 0
    WAIT = 1
    TRIGGER = 2
    CONFIG = 3


BROADCAST = 0xFFF
TARGET_BITS, INDEX_BITS, PAYLOAD_BITS = 12, 8, 42
COUNT_BITS, INTERVAL_BITS = 20, 22
MASK_BITS = TARGET_BITS + INDEX_BITS
WORD_BYTES = 8


@dataclass(frozen=True)
class IqeCommand:
    """64-bit word: opcode[63:62] target[61:50] index[49:42] payload[41:0].

    For Trigger the channel mask fills target and index (20 bits, target holds
    the high part) and the payload is count[41:22] | interval[21:0].
    """

    opcode: Opcode
    target: int = 0
    index: int = 0
    payload: int = 0

    def __post_init__(self):
        object.__setattr__(self, "opcode", Opcode(self.opcode))
        if not 0 <= self.target < 2**TARGET_BITS:
            raise ParameterError(f"target {self.target} does not fit {TARGET_BITS} bits")
        if not 0 <= self.index < 2**INDEX_BITS:
            raise ParameterError(f"index {self.index} does not fit {INDEX_BITS} bits")
        if not 0 <= self.payload < 2**PAYLOAD_BITS:
            raise ParameterError(f"payload {self.payload} does not fit {PAYLOAD_BITS} bits")
        if self.opcode is Opcode.TRIGGER and self.count < 1:
            raise ParameterError("trigger repeat count must be >= 1")

    # constructors -------------------------------------------------------
    @classmethod
    def play(cls, target: int, index: int, params: int = 0) -> "IqeCommand":
        return cls(Opcode.PLAY, target, index, params)

    @classmethod
    def wait(cls, time_ns: int, target: int = BROADCAST) -> "IqeCommand":
        return cls(Opcode.WAIT, target, 0, time_ns)

    @classmethod
    def trigger(cls, mask: int, count: int, interval: int) -> "IqeCommand":
        if not 0 <= mask < 2**MASK_BITS:
            raise ParameterError(f"trigger mask {mask:#x} does not fit {MASK_BITS} bits")
        if not 1 <= count < 2**COUNT_BITS:
            raise ParameterError(f"trigger repeat count {count} outside [1, 2**{COUNT_BITS})")
        if not 0 <= interval < 2**INTERVAL_BITS:
            raise ParameterError(f"trigger interval {interval} does not fit {INTERVAL_BITS} bits")
        return cls(Opcode.TRIGGER, mask >> INDEX_BITS, mask & 0xFF, (count << INTERVAL_BITS) | interval)

    @classmethod
    def config(cls, target: int, index: int, payload: int) -> "IqeCommand":
        return cls(Opcode.CONFIG, target, index, payload)

    # trigger views ------------------------------------------------------
    @property
    def mask(self) -> int:
        return (self.target << INDEX_BITS) | self.index

    @property
    def count(self) -> int:
        return self.payload >> INTERVAL_BITS

    @property
    def interval(self) -> int:
        return self.payload & (2**INTERVAL_BITS - 1)

    @property
    def time(self) -> int:
        return self.payload

    # wire ---------------------------------------------------------------
    def encode(self) -> int:
        return (int(self.opcode) << 62) | (self.target << 50) | (self.index << 42) | self.payload

    def to_bytes(self) -> bytes:
        return self.encode().to_bytes(WORD_BYTES, "little")

    @classmethod
    def decode(cls, word: int) -> "IqeCommand":
        if not 0 <= word < 2**64:
            raise ParameterError("wire word must be a 64-bit unsigned integer")
        return cls(Opcode(word >> 62), (word >> 50) & 0xFFF, (word >> 42) & 0xFF, word & (2**PAYLOAD_BITS - 1))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "IqeCommand":
        if len(raw) != WORD_BYTES:
            raise ParameterError("wire word must be 8 bytes")
        return cls.decode(int.from_bytes(raw, "little"))

    def to_dict(self) -> dict:
        return {"op": self.opcode.name.lower(), "target": self.target, "index": self.index, "payload": self.payload}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "IqeCommand":
        op = doc["op"].upper()
        if op not in Opcode.__members__:
            raise ParameterError(f"unknown command opcode {doc['op']!r}")
        if Opcode[op] is Opcode.TRIGGER and "count" in doc:
            return cls.trigger(int(doc.get("mask", 0)), int(doc["count"]), int(doc.get("interval", 0)))
        if Opcode[op] is Opcode.WAIT and "time" in doc:
            return cls.wait(int(doc["time"]), int(doc.get("target", BROADCAST)))
        return cls(Opcode[op], int(doc.get("target", 0)), int(doc.get("index", 0)), int(doc.get("payload", 0)))


def wire_roundtrip(cmd: IqeCommand) -> IqeCommand:
    return IqeCommand.from_bytes(cmd.to_bytes())


# ---------------------------------------------------------------------------
# decode tables and driver


def drive_channel(qubit: int) -> int:
    return 2 * qubit


def readout_channel(qubit: int) -> int:
    return 2 * qubit + 1


@dataclass(frozen=True)
class AppEntry:
    commands: tuple[IqeCommand, ...] = ()
    macro: str | None = None


@dataclass(frozen=True)
class DecodeTables:
    """Immutable snapshot; ``configure`` returns a new snapshot."""

    gate_table: Mapping[tuple[int, int], tuple[IqeCommand, ...]] = field(default_factory=dict)
    pair_table: Mapping[tuple[int, int], tuple[IqeCommand, ...]] = field(default_factory=dict)
    app_table: Mapping[tuple[int, int], AppEntry] = field(default_factory=dict)
    macros: Mapping[str, tuple[IqeCommand, ...]] = field(default_factory=dict)
    pairs: Mapping[int, tuple[int, int]] = field(default_factory=dict)

    def configure(self, updates: Mapping) -> "DecodeTables":
        """Apply a JSON-style update document; every entry is validated before
        anything is replaced. A ``null`` commands entry clears the key."""
        gate = dict(self.gate_table)
        pair_gate = dict(self.pair_table)
        apps = dict(self.app_table)
        macros = dict(self.macros)
        pairs = dict(self.pairs)
        try:
            for name, cmds in (updates.get("macros") or {}).items():
                if cmds is None:
                    macros.pop(name, None)
                else:
                    macros[str(name)] = _commands(cmds)
            for entry in updates.get("pairs") or []:
                pid = int(entry["pair"])
                if entry.get("qubits") is None:
                    pairs.pop(pid, None)
                else:
                    a, b = (int(q) for q in entry["qubits"])
                    pairs[pid] = (a, b)
            for entry in updates.get("gate_table") or []:
                # single-qubit entries are keyed by "qubit", two-qubit ones by "pair"
                table = pair_gate if "pair" in entry else gate
                key = (int(entry["pair"] if "pair" in entry else entry["qubit"]), int(entry["index"]))
                if entry.get("commands") is None:
                    table.pop(key, None)
                else:
                    table[key] = _commands(entry["commands"])
            for entry in updates.get("app_table") or []:
                key = (int(entry["group"]), int(entry["op"]))
                if entry.get("macro") is not None:
                    apps[key] = AppEntry(macro=str(entry["macro"]))
                elif entry.get("commands") is not None:
                    cmds = [c if isinstance(c, IqeCommand) or "target" in c else {**c, "target": key[0]}
                            for c in entry["commands"]]
                    apps[key] = AppEntry(commands=_commands(cmds))
                else:
                    apps.pop(key, None)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed table entry: {exc}") from None
        for key, entry in apps.items():
            if entry.macro is not None and entry.macro not in macros:
                raise ParameterError(f"app entry {key} references unknown macro {entry.macro!r}")
        return DecodeTables(gate, pair_gate, apps, macros, pairs)

    def app_commands(self, group: int, op: int) -> tuple[IqeCommand, ...]:
        entry = self.app_table.get((group, op))
        if entry is None:
            raise UnconfiguredEntryError(f"app entry (group={group}, op={op}) is not configured")
        if entry.macro is not None:
            return self.macros[entry.macro]
        return entry.commands


def _commands(docs) -> tuple[IqeCommand, ...]:
    if isinstance(docs, Mapping):
        raise TypeError("commands must be a list")
    return tuple(c if isinstance(c, IqeCommand) else IqeCommand.from_dict(c) for c in docs)


def load_tables(path: str | Path, base: DecodeTables | None = None) -> DecodeTables:
    return (base or DecodeTables()).configure(json.loads(Path(path).read_text(encoding="utf-8")))


class Driver:
    """Translates MMIO stores into wire commands. Single-threaded."""

    def __init__(self, layout: MmioLayout = DEFAULT_LAYOUT, tables: DecodeTables | None = None):
        self.layout = layout
        self.tables = tables or DecodeTables()
        self._staged = {TRIG_MASK: 0, TRIG_COUNT: 1}

    def configure_tables(self, updates: Mapping) -> None:
        self.tables = self.tables.configure(updates)

    def store(self, address: int, value: int) -> list[IqeCommand]:
        region, off = self.layout.locate(address)
        name = region.name
        if name == "TRIGGER":
            if off in (TRIG_MASK, TRIG_COUNT):
                self._staged[off] = value
                return []
            if off == TRIG_INTERVAL:
                return [IqeCommand.trigger(self._staged[TRIG_MASK], self._staged[TRIG_COUNT], value)]
            raise UnmappedAddressError(f"no trigger register at offset {off}")
        if name == "WAIT":
            return [IqeCommand.wait(value)]
        if name == "PLAY":
            if off >= 2**TARGET_BITS:
                raise ParameterError(f"channel {off} does not fit the {TARGET_BITS}-bit target field")
            return [IqeCommand.play(off, value)]
        if name == "SQ":
            entry = self.tables.gate_table.get((off, value))
            if entry is not None:
                return list(entry)
            ch = readout_channel(off) if value >= 128 else drive_channel(off)
            return [IqeCommand.play(ch, value)]
        if name == "TQ":
            entry = self.tables.pair_table.get((off, value))
            if entry is not None:
                return list(entry)
            pair = self.tables.pairs.get(off)
            if pair is None:
                raise UnconfiguredEntryError(f"qubit pair {off} is not configured")
            return [IqeCommand.play(drive_channel(q), value) for q in pair]
        if name == "APP":
            return list(self.tables.app_commands(off, value))
        raise UnmappedAddressError(f"stores to {name} are not supported")

    def execute(self, access: MmioAccess) -> list[IqeCommand]:
        if access.direction != "store":
            raise ParameterError("the driver only decodes stores")
        return self.store(access.address, access.value)


def driver_decode(access: MmioAccess, tables: DecodeTables | None = None, driver: Driver | None = None) -> list[IqeCommand]:
    """Decode one store. Pass a ``driver`` to keep trigger staging across calls."""
    drv = driver or Driver(tables=tables)
    return drv.execute(access)


def decode_program(program: Iterable[PseudoInstruction], tables: DecodeTables | None = None,
                   layout: MmioLayout = DEFAULT_LAYOUT) -> list[IqeCommand]:
    """Full IQE command stream of a program (loads produce no commands)."""
    drv = Driver(layout, tables)
    out: list[IqeCommand] = []
    for access in expand_program(program, layout):
        if access.direction == "store":
            out.extend(drv.execute(access))
    return out


__all__ = [
    "AppEntry", "BROADCAST", "DEFAULT_LAYOUT", "DecodeTables", "Driver", "IqeCommand", "MmioAccess",
    "MmioLayout", "MmioRegion", "Opcode", "PSEUDO_KINDS", "PseudoInstruction", "WORD_BYTES", "app",
    "decode_program", "drive_channel", "driver_decode", "expand_program", "expand_pseudo", "fmr",
    "load_program", "load_tables", "play", "qwait", "readout_channel", "save_program",
    "sq", "tq", "trig", "wire_roundtrip",
]
