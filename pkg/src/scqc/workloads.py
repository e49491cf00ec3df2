"""Experiment programs at four abstraction levels and their cost profile.

Levels, from most to least verbose:

* pulse: one ``play`` per channel and operation;
* gate: one ``sq`` per qubit / ``tq`` per qubit pair;
* parallel: one ``app`` per gate layer, broadcast to a partition group;
* logical: one ``app`` per block of syndrome cycles, expanded by a macro.

Every program carries the decode-table document it needs, so the parallel and
logical programs of the same experiment decode to the same command stream.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .iqe_sim import (
    ControlStack,
    DurationTable,
    IqeSimulator,
    T1Model,
    qubit_topology,
)
from .layout import PatchLayout
from .qisa import (
    DecodeTables,
    IqeCommand,
    Opcode,
    PseudoInstruction,
    app,
    decode_program,
    drive_channel,
    expand_pseudo,
    fmr,
    play,
    qwait,
    readout_channel,
    sq,
    tq,
    trig,
)

# operation indices
RESET, H, PI, CZ, MEASURE = 0, 1, 2, 64, 128
TRIG_ALL = (1 << 20) - 1
GROUP_BASE = 0xF00
LOGICAL_GROUP = 0xFFE


class Level(str, Enum):
    PULSE = "pulse"
    GATE = "gate"
    PARALLEL = "parallel"
    LOGICAL = "logical"


@dataclass(frozen=True)
class CostModel:
    single_ns: int = 20
    two_ns: int = 40
    measure_ns: int = 600
    mmio_cycles: int = 17
    clock_ghz: float = 1.0
    syndrome_cycle_ns: float = 1000.0

    def __post_init__(self):
        if min(self.single_ns, self.two_ns, self.measure_ns, self.mmio_cycles) <= 0:
            raise ParameterError("cost-model constants must be positive")
        if self.clock_ghz <= 0 or self.syndrome_cycle_ns <= 0:
            raise ParameterError("cost-model constants must be positive")

    @property
    def durations(self) -> DurationTable:
        return DurationTable(self.measure_ns, self.single_ns, self.two_ns, self.measure_ns)

    @property
    def cycle_ns(self) -> int:
        return 2 * self.single_ns + 4 * self.two_ns + self.measure_ns


@dataclass
class Program:
    level: Level
    experiment: str
    d: int
    rounds: int
    instructions: list[PseudoInstruction]
    tables: dict  # decode-table update document
    qubits: int
    groups: dict[int, tuple[int, ...]]
    words_per_cycle: int

    def __len__(self) -> int:
        return len(self.instructions)

    def decode_tables(self) -> DecodeTables:
        return DecodeTables().configure(self.tables)

    def commands(self) -> list[IqeCommand]:
        return decode_program(self.instructions, self.decode_tables())

    def tables_json(self) -> dict:
        def conv(obj):
            if isinstance(obj, IqeCommand):
                return obj.to_dict()
            if isinstance(obj, dict):
                return {k: conv(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [conv(v) for v in obj]
            return obj
        return conv(self.tables)


# ---------------------------------------------------------------------------
# generation


@dataclass
class _Phase:
    ancillas: list[int]
    data: list[int]
    layers: list[list[tuple[int, int]]]  # qubit-id pairs per two-qubit layer
    anc_group: int = -1
    cz_groups: tuple[int, ...] = ()


@dataclass
class _Builder:
    level: Level
    universe: PatchLayout
    qid: dict = field(default_factory=dict)
    groups: dict[int, tuple[int, ...]] = field(default_factory=dict)
    pairs: dict[tuple[int, int], int] = field(default_factory=dict)
    app_ops: set = field(default_factory=set)

    def __post_init__(self):
        keys = [("d", q) for q in self.universe.data] + [("a", a) for a in self.universe.ancillas]
        self.qid = {key: k for k, key in enumerate(keys)}

    @property
    def qubits(self) -> int:
        return len(self.qid)

    def new_group(self, members: Iterable[int]) -> int:
        gid = GROUP_BASE + len(self.groups)
        if gid >= LOGICAL_GROUP:
            raise ParameterError("out of partition group ids")
        self.groups[gid] = tuple(sorted(set(members)))
        return gid

    def phase(self, layout: PatchLayout) -> _Phase:
        anc = [self.qid[("a", a)] for a in layout.ancillas]
        data = [self.qid[("d", q)] for q in layout.data]
        layers = [[(self.qid[("a", a)], self.qid[("d", q)]) for a, q in layer] for layer in layout.gate_layers()]
        ph = _Phase(anc, data, layers)
        if self.level in (Level.PARALLEL, Level.LOGICAL):
            ph.anc_group = self.new_group(anc)
            ph.cz_groups = tuple(self.new_group([q for p in layer for q in p]) for layer in layers)
        if self.level is Level.GATE:
            for layer in layers:
                for p in layer:
                    self.pairs.setdefault(p, len(self.pairs))
        return ph

    # emission helpers ---------------------------------------------------
    def single(self, qubits: Sequence[int], op: int, group: int) -> list[PseudoInstruction]:
        if self.level in (Level.PARALLEL, Level.LOGICAL):
            self.app_ops.add((group, op))
            return [app(group, op)]
        if self.level is Level.GATE:
            return [sq(q, op) for q in qubits]
        ch = readout_channel if op >= MEASURE else drive_channel
        return [play(ch(q), op) for q in qubits]

    def double(self, pairs: Sequence[tuple[int, int]], op: int, group: int) -> list[PseudoInstruction]:
        if self.level in (Level.PARALLEL, Level.LOGICAL):
            self.app_ops.add((group, op))
            return [app(group, op)]
        if self.level is Level.GATE:
            return [tq(self.pairs[p], op) for p in pairs]
        return [play(drive_channel(q), op) for p in pairs for q in p]

    def cycle(self, ph: _Phase, cost: CostModel) -> list[PseudoInstruction]:
        seq = self.single(ph.ancillas, H, ph.anc_group) + [qwait(cost.single_ns)]
        for layer, gid in zip(ph.layers, ph.cz_groups or (-1,) * 4):
            seq += self.double(layer, CZ, gid) + [qwait(cost.two_ns)]
        seq += self.single(ph.ancillas, H, ph.anc_group) + [qwait(cost.single_ns)]
        seq += self.single(ph.ancillas, MEASURE, ph.anc_group)
        seq += self.single(ph.ancillas, RESET, ph.anc_group)
        seq.append(trig(TRIG_ALL, 1, 0))
        return seq

    def tables_doc(self, macros: dict[str, list[IqeCommand]], logical_ops: dict[int, str]) -> dict:
        doc: dict = {}
        if self.pairs:
            doc["pairs"] = [{"pair": pid, "qubits": list(p)} for p, pid in sorted(self.pairs.items(), key=lambda kv: kv[1])]
        apps = [{"group": g, "op": op, "commands": [IqeCommand.play(g, op)]} for g, op in sorted(self.app_ops)]
        apps += [{"group": LOGICAL_GROUP, "op": op, "macro": name} for op, name in sorted(logical_ops.items())]
        if apps:
            doc["app_table"] = apps
        if macros:
            doc["macros"] = macros
        return doc


def _blocks(rounds: int, d: int) -> list[int]:
    """Split ``rounds`` into ``max(1, round(rounds/d))`` near-equal blocks."""
    k = max(1, int(math.floor(rounds / d + 0.5)))
    k = min(k, rounds) if rounds else 1
    base, extra = divmod(rounds, k)
    return [base + 1] * extra + [base] * (k - extra)


class _Segments:
    """Ordered program pieces: fixed preambles and runs of syndrome cycles."""

    def __init__(self):
        self.items: list[tuple[str, object]] = []

    def fixed(self, name: str, instrs: list[PseudoInstruction]) -> None:
        self.items.append(("fixed", (name, instrs)))

    def cycles(self, cycle: list[PseudoInstruction], rounds: int) -> None:
        self.items.append(("cycles", (cycle, rounds)))


def _assemble(b: _Builder, segs: _Segments, d: int) -> tuple[list[PseudoInstruction], dict]:
    if b.level is not Level.LOGICAL:
        out: list[PseudoInstruction] = []
        for kind, payload in segs.items:
            if kind == "fixed":
                out += payload[1]
            else:
                cycle, rounds = payload
                out += cycle * rounds
        return out, b.tables_doc({}, {})
    # logical: the same parallel-level stream, wrapped into macros
    base_tables = DecodeTables().configure(b.tables_doc({}, {}))
    macros: dict[str, list[IqeCommand]] = {}
    ops: dict[int, str] = {}
    out = []

    def macro_app(name: str, instrs: list[PseudoInstruction]) -> None:
        if name not in macros:
            macros[name] = decode_program(instrs, base_tables)
            ops[len(ops)] = name
        op = next(k for k, v in ops.items() if v == name)
        out.append(app(LOGICAL_GROUP, op))

    for k, (kind, payload) in enumerate(segs.items):
        if kind == "fixed":
            macro_app(f"{payload[0]}", payload[1])
        else:
            cycle, rounds = payload
            for size in _blocks(rounds, d):
                macro_app(f"seg{k}_cycles{size}", cycle * size)
    return out, b.tables_doc(macros, ops)


def _words_per_cycle(b: _Builder, cycle: list[PseudoInstruction]) -> int:
    tables = DecodeTables().configure(b.tables_doc({}, {}))
    return len(decode_program(cycle, tables))


def gen_memory_program(d: int, n: int, level: Level | str, cost: CostModel | None = None) -> Program:
    """Memory experiment: data reset, ``n`` syndrome cycles, data measurement."""
    level = Level(level)
    cost = cost or CostModel()
    if d < 3 or d % 2 == 0 or n < 1:
        raise ParameterError("need odd d >= 3 and n >= 1")
    layout = PatchLayout(d, ((0, d),))
    b = _Builder(level, layout)
    ph = b.phase(layout)
    data_group = b.new_group(ph.data) if level in (Level.PARALLEL, Level.LOGICAL) else -1
    cycle = b.cycle(ph, cost)
    segs = _Segments()
    segs.fixed("prologue", b.single(ph.data, RESET, data_group) + [qwait(cost.measure_ns)])
    segs.cycles(cycle, n)
    segs.fixed("epilogue", b.single(ph.data, MEASURE, data_group) + [trig(TRIG_ALL, 1, 0)])
    words = _words_per_cycle(b, cycle)
    instrs, tables = _assemble(b, segs, d)
    return Program(level, "memory", d, n, instrs, tables, b.qubits, dict(b.groups), words)


def gen_bell_program(d: int, m: int, n1: int, n2: int, n3: int, level: Level | str,
                     cost: CostModel | None = None) -> Program:
    """Bell-state preparation by lattice surgery: split, merged, split phases."""
    level = Level(level)
    cost = cost or CostModel()
    if d < 3 or d % 2 == 0 or m < 1 or min(n1, n2, n3) < 1:
        raise ParameterError("need odd d >= 3, m >= 1 and all phase rounds >= 1")
    if (d + m) % 2:
        raise ParameterError("d + m must be even so both patches share the check pattern")
    merged = PatchLayout(d, ((0, 2 * d + m),))
    split = PatchLayout(d, ((0, d), (d + m, 2 * d + m)))
    b = _Builder(level, merged)
    ps, pm = b.phase(split), b.phase(merged)
    routing = sorted(set(pm.data) - set(ps.data))
    par = level in (Level.PARALLEL, Level.LOGICAL)
    data_group = b.new_group(ps.data) if par else -1
    route_group = b.new_group(routing) if par else -1
    split_cycle, merged_cycle = b.cycle(ps, cost), b.cycle(pm, cost)
    segs = _Segments()
    segs.fixed("prologue", b.single(ps.data, RESET, data_group) + [qwait(cost.measure_ns)])
    segs.cycles(split_cycle, n1)
    segs.fixed("merge", b.single(routing, RESET, route_group) + [qwait(cost.measure_ns)])
    segs.cycles(merged_cycle, n2)
    segs.fixed("split", b.single(routing, MEASURE, route_group) + [qwait(cost.measure_ns)])
    segs.cycles(split_cycle, n3)
    segs.fixed("epilogue", b.single(ps.data, MEASURE, data_group) + [trig(TRIG_ALL, 1, 0)])
    words = _words_per_cycle(b, merged_cycle)
    instrs, tables = _assemble(b, segs, d)
    return Program(level, "bell", d, n1 + n2 + n3, instrs, tables, b.qubits, dict(b.groups), words)


def memory_rounds(d: int) -> int:
    """Default memory-experiment length ``7/2 (d+1)``."""
    return 7 * (d + 1) // 2


# ---------------------------------------------------------------------------
# profiling


@dataclass(frozen=True)
class CostReport:
    level: str
    d: int
    n: int
    instr_count: int
    mmio_accesses: int
    classical_ns: float
    quantum_ns: float
    words_per_cycle: int
    bandwidth_bps: float

    CSV_FIELDS = ("level", "d", "n", "instr_count", "classical_ns", "quantum_ns", "bandwidth_bps")

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def command_timeline_ns(commands: Iterable[IqeCommand], durations: DurationTable) -> float:
    """Quantum execution time of a command stream seen as one broadcast queue."""
    total = 0.0
    cursor = 0.0
    end = 0.0
    for cmd in commands:
        if cmd.opcode is Opcode.WAIT:
            cursor += cmd.time
            end = max(end, cursor)
        elif cmd.opcode is Opcode.PLAY:
            end = max(end, cursor + durations(cmd.index))
        elif cmd.opcode is Opcode.TRIGGER:
            total += cmd.count * max(float(cmd.interval), end)
            cursor = end = 0.0
    return total


def profile(program: Program | None, cost: CostModel | None = None) -> CostReport:
    cost = cost or CostModel()
    if program is None or not program.instructions:
        level = program.level.value if program else "empty"
        d = program.d if program else 0
        n = program.rounds if program else 0
        return CostReport(level, d, n, 0, 0, 0.0, 0.0, 0, 0.0)
    accesses = sum(len(expand_pseudo(i)) for i in program.instructions)
    classical = accesses * cost.mmio_cycles / cost.clock_ghz
    quantum = command_timeline_ns(program.commands(), cost.durations)
    bandwidth = Fraction(program.words_per_cycle * 64 * 10**9) / Fraction(cost.syndrome_cycle_ns)
    return CostReport(program.level.value, program.d, program.rounds, len(program.instructions), accesses,
                      float(classical), float(quantum), program.words_per_cycle, float(bandwidth))


def reports_csv(reports: Sequence[CostReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CostReport.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit ``y = c * x**k`` in log space; returns (c, k)."""
    k, logc = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(math.exp(logc)), float(k)


# ---------------------------------------------------------------------------
# T1 calibration


def gen_t1_program(delays: Sequence[int], repeats: int, qubit: int = 0) -> list[PseudoInstruction]:
    """Per delay: excite, wait, read out, trigger ``repeats`` replays, load results."""
    if len(set(delays)) < 3:
        raise ParameterError("need at least three distinct delays")
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    out: list[PseudoInstruction] = []
    for delay in delays:
        out += [
            play(drive_channel(qubit), PI),
            qwait(int(delay)),
            play(readout_channel(qubit), MEASURE),
            trig(TRIG_ALL, repeats, 0),
        ]
        out += [fmr(4 * k) for k in range(repeats)]
    return out


def t1_fit(delays: Sequence[float], fractions: Sequence[float]) -> float:
    """T1 from log-linear least squares of excited fraction against delay."""
    x = np.asarray(delays, dtype=float)
    y = np.asarray(fractions, dtype=float)
    if x.shape != y.shape or len(np.unique(x)) < 3:
        raise ParameterError("need at least three distinct delays with one fraction each")
    keep = y > 0
    if keep.sum() < 3 or np.ptp(y[keep]) == 0:
        raise ParameterError("degenerate decay data: cannot fit T1")
    slope, _ = np.polyfit(x[keep], np.log(y[keep]), 1)
    if slope >= 0:
        raise ParameterError("excited fraction does not decay: cannot fit T1")
    return float(-1.0 / slope)


@dataclass
class T1Result:
    delays: list[int]
    fractions: list[float]
    t1_ns: float


def run_t1(delays: Sequence[int], repeats: int, t1_ns: float, seed: int = 0, jitter_ps: float = 0.0) -> T1Result:
    """Run the calibration program through the driver and the simulator."""
    sim = IqeSimulator(qubit_topology(1, jitter_ps=jitter_ps), model=T1Model(t1_ns), seed=seed)
    result = ControlStack(sim).run(gen_t1_program(delays, repeats))
    loads = np.asarray(result.loads, dtype=float).reshape(len(delays), repeats)
    fractions = loads.mean(axis=1).tolist()
    return T1Result(list(delays), fractions, t1_fit(delays, fractions))


def simulate_program(program: Program, seed: int = 0, jitter_ps: float = 0.0):
    """Run a generated program on a per-qubit device topology."""
    sim = IqeSimulator(qubit_topology(program.qubits, program.groups, jitter_ps), seed=seed)
    return ControlStack(sim, program.decode_tables()).run(program.instructions), sim


def save_report(path: str | Path, reports: Sequence[CostReport]) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(reports_csv(reports), encoding="utf-8")
    else:
        path.write_text(json.dumps([r.to_dict() for r in reports], indent=1) + "\n", encoding="utf-8")
