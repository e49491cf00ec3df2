import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scqc.errors import ParameterError, UnconfiguredEntryError, UnmappedAddressError
from scqc.iqe_sim import DeviceConfig, DeviceKind, IqeSimulator
from scqc.qisa import (
    BROADCAST,
    DEFAULT_LAYOUT,
    DecodeTables,
    Driver,
    IqeCommand,
    MmioAccess,
    MmioLayout,
    MmioRegion,
    Opcode,
    PseudoInstruction,
    app,
    decode_program,
    driver_decode,
    expand_program,
    expand_pseudo,
    fmr,
    load_program,
    load_tables,
    play,
    qwait,
    save_program,
    sq,
    tq,
    trig,
    wire_roundtrip,
)
from scqc.workloads import Level, gen_memory_program


def _golden(fixtures_dir):
    return json.loads((fixtures_dir / "mmio_golden.json").read_text())


def _bus(access: MmioAccess) -> str:
    if access.direction == "load":
        return ""
    return access.value.to_bytes(access.width, "little").hex()


def test_golden_expansions(fixtures_dir):
    doc = _golden(fixtures_dir)
    kinds = set()
    for case in doc["cases"]:
        instr = PseudoInstruction.from_dict(case["pseudo"])
        kinds.add(instr.kind)
        got = expand_pseudo(instr)
        want = case["accesses"]
        assert len(got) == len(want)
        for a, w in zip(got, want):
            assert a.to_dict() == {k: w[k] for k in ("address", "width", "value", "direction")}
            assert _bus(a) == w["bus"]
    assert kinds == {"trig", "qwait", "play", "fmr", "sq", "tq", "app"}


def test_golden_wire_words(fixtures_dir):
    doc = _golden(fixtures_dir)
    tables = DecodeTables().configure(doc["tables"])
    for case in doc["cases"]:
        driver = Driver(tables=tables)
        words = []
        for access in expand_pseudo(PseudoInstruction.from_dict(case["pseudo"])):
            if access.direction == "store":
                words += [cmd.encode() for cmd in driver.execute(access)]
        assert words == [int(w, 16) for w in case["words"]]


def test_listed_expansions():
    assert expand_pseudo(qwait(500)) == [MmioAccess(0x40002000, 4, 500)]
    assert expand_pseudo(sq(7, 5)) == [MmioAccess(0x40010007, 1, 5)]
    assert expand_pseudo(fmr(0)) == [MmioAccess(0x40003000, 4, 0, "load")]
    assert [a.address for a in expand_pseudo(trig(1, 2, 3))] == [0x40001008, 0x40001004, 0x40001000]


def test_expansion_errors():
    with pytest.raises(ParameterError):
        expand_pseudo(sq(0x4000, 1))
    with pytest.raises(ParameterError):
        expand_pseudo(play(0, 256))
    with pytest.raises(ParameterError):
        expand_pseudo(fmr(0x1400 * 4))
    with pytest.raises(ParameterError):
        expand_pseudo(fmr(2))
    with pytest.raises(ParameterError):
        expand_pseudo(qwait(-1))
    with pytest.raises(ParameterError):
        PseudoInstruction("jump")


def test_layout_regions_disjoint():
    with pytest.raises(ParameterError):
        MmioLayout((MmioRegion("A", 0, 4, 4), MmioRegion("B", 8, 1, 4)))
    with pytest.raises(UnmappedAddressError):
        DEFAULT_LAYOUT.locate(0x50000000)
    assert DEFAULT_LAYOUT["FMR"].size == 0x5000


@given(
    kind=st.sampled_from(["play", "sq", "tq", "app", "fmr", "qwait", "trig"]),
    offset=st.integers(0, 0x8000),
    value=st.integers(0, 255),
)
@settings(max_examples=300)
def test_region_safety(kind, offset, value):
    region_of = {"play": "PLAY", "sq": "SQ", "tq": "TQ", "app": "APP", "fmr": "FMR", "qwait": "WAIT", "trig": "TRIGGER"}
    instr = PseudoInstruction(kind, offset=offset if kind != "fmr" else offset * 4 % 0x5000, value=value,
                              time=offset, mask=value, count=1, interval=offset)
    try:
        accesses = expand_pseudo(instr)
    except ParameterError:
        return
    region = DEFAULT_LAYOUT[region_of[kind]]
    for a in accesses:
        assert region.contains(a.address)
        assert region.contains(a.address + a.width - 1)


def test_staged_trigger():
    drv = Driver()
    base = DEFAULT_LAYOUT["TRIGGER"].base
    assert drv.store(base + 4, 10) == []
    assert drv.store(base + 8, 0b1011) == []
    (cmd,) = drv.store(base + 0, 250)
    assert cmd.opcode is Opcode.TRIGGER
    assert (cmd.mask, cmd.count, cmd.interval) == (0b1011, 10, 250)
    with pytest.raises(UnmappedAddressError):
        drv.store(base + 12, 1)


def test_single_count_store_emits_nothing():
    access = MmioAccess(DEFAULT_LAYOUT["TRIGGER"].base + 4, 4, 10)
    assert driver_decode(access) == []


def test_play_and_app_examples():
    (cmd,) = driver_decode(MmioAccess(DEFAULT_LAYOUT["PLAY"].base + 3, 1, 17))
    assert (cmd.opcode, cmd.target, cmd.index) == (Opcode.PLAY, 3, 17)
    tables = DecodeTables().configure({"app_table": [{"group": 2, "op": 9, "commands": [{"op": "play", "index": 4}]}]})
    out = driver_decode(MmioAccess(DEFAULT_LAYOUT["APP"].base + 2, 1, 9), tables)
    assert len(out) == 1 and out[0].target == 2
    assert len(out[0].to_bytes()) == 8


def test_sq_defaults_and_overrides():
    drv = Driver()
    (cmd,) = drv.store(DEFAULT_LAYOUT["SQ"].base + 4, 1)
    assert (cmd.target, cmd.index) == (8, 1)
    (cmd,) = drv.store(DEFAULT_LAYOUT["SQ"].base + 4, 128)
    assert (cmd.target, cmd.index) == (9, 128)
    drv.configure_tables({"gate_table": [{"qubit": 4, "index": 1, "commands": [
        {"op": "play", "target": 8, "index": 1}, {"op": "wait", "time": 20}, {"op": "play", "target": 8, "index": 1}]}]})
    assert len(drv.store(DEFAULT_LAYOUT["SQ"].base + 4, 1)) == 3


def test_tq_needs_pair_map():
    drv = Driver()
    with pytest.raises(UnconfiguredEntryError):
        drv.store(DEFAULT_LAYOUT["TQ"].base + 0, 64)
    drv.configure_tables({"pairs": [{"pair": 0, "qubits": [3, 5]}]})
    assert [c.target for c in drv.store(DEFAULT_LAYOUT["TQ"].base, 64)] == [6, 10]
    drv.configure_tables({"gate_table": [{"pair": 0, "index": 64, "commands": [{"op": "play", "target": 100, "index": 64}]}]})
    assert [c.target for c in drv.store(DEFAULT_LAYOUT["TQ"].base, 64)] == [100]


def test_loads_are_not_decoded():
    with pytest.raises(ParameterError):
        driver_decode(MmioAccess(0x40003000, 4, 0, "load"))
    with pytest.raises(UnmappedAddressError):
        driver_decode(MmioAccess(0x40000000, 4, 0))
    with pytest.raises(UnmappedAddressError):
        driver_decode(MmioAccess(0x40003000, 4, 0))


def test_remap_to_macro_emits_two_words():
    tables = DecodeTables().configure({
        "macros": {"pair": [{"op": "play", "target": 2, "index": 9}, {"op": "wait", "time": 40}]},
        "app_table": [{"group": 2, "op": 9, "macro": "pair"}],
    })
    out = driver_decode(MmioAccess(DEFAULT_LAYOUT["APP"].base + 2, 1, 9), tables)
    assert len(out) == 2


def test_clear_entry_then_decode_raises():
    tables = DecodeTables().configure({"app_table": [{"group": 2, "op": 9, "commands": [{"op": "play"}]}]})
    cleared = tables.configure({"app_table": [{"group": 2, "op": 9, "commands": None}]})
    access = MmioAccess(DEFAULT_LAYOUT["APP"].base + 2, 1, 9)
    assert driver_decode(access, tables)
    with pytest.raises(UnconfiguredEntryError):
        driver_decode(access, cleared)


def test_configure_is_atomic():
    tables = DecodeTables().configure({"app_table": [{"group": 1, "op": 1, "commands": [{"op": "play"}]}]})
    with pytest.raises(ParameterError):
        tables.configure({"app_table": [
            {"group": 5, "op": 5, "commands": [{"op": "play"}]},
            {"group": 6, "op": 6, "macro": "missing"},
        ]})
    assert set(tables.app_table) == {(1, 1)}
    with pytest.raises(ParameterError):
        tables.configure({"app_table": [{"group": 7, "op": 1, "commands": [{"op": "bogus"}]}]})


def test_reconfiguration_locality():
    rng = np.random.default_rng(0)
    entries = [{"group": g, "op": o, "commands": [{"op": "play", "index": int(rng.integers(256))}]}
               for g in range(8) for o in range(4)]
    tables = DecodeTables().configure({"app_table": entries})
    program = [app(g, o) for g in range(8) for o in range(4)]
    before = [c.to_bytes() for c in decode_program(program, tables)]
    changed = tables.configure({"app_table": [{"group": 3, "op": 2, "commands": [{"op": "wait", "time": 7}]}]})
    after = [c.to_bytes() for c in decode_program(program, changed)]
    diff = [k for k, (a, b) in enumerate(zip(before, after)) if a != b]
    assert diff == [program.index(app(3, 2))]


def test_logical_macro_expands_to_cycle():
    prog = gen_memory_program(3, 1, Level.LOGICAL)
    parallel = gen_memory_program(3, 1, Level.PARALLEL)
    tables = prog.decode_tables()
    cycle_app = prog.instructions[1]  # prologue, one cycle block, epilogue
    out = decode_program([cycle_app], tables)
    assert len(out) == 15
    assert out == decode_program(parallel.instructions[2:17], parallel.decode_tables())


def test_tables_file(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"gate_table": [{"qubit": 1, "index": 2, "commands": [{"op": "play", "target": 5, "index": 2}]}],
                                "app_table": [{"group": 4, "op": 0, "commands": [{"op": "play", "index": 3}]}]}))
    tables = load_tables(path)
    assert tables.gate_table[(1, 2)][0].target == 5
    assert tables.app_commands(4, 0)[0].target == 4


def test_program_file_round_trip(tmp_path):
    program = [trig(7, 2, 100), qwait(20), play(1, 2), fmr(4), sq(3, 1), tq(0, 64), app(0xF00, 1)]
    path = tmp_path / "p.json"
    save_program(path, program)
    assert load_program(path) == program
    assert expand_program(load_program(path)) == expand_program(program)


# ---------------------------------------------------------------------------
# wire format


def test_wire_examples():
    assert wire_roundtrip(IqeCommand.wait(0)) == IqeCommand.wait(0)
    sat = IqeCommand.trigger((1 << 20) - 1, (1 << 20) - 1, (1 << 22) - 1)
    assert wire_roundtrip(sat) == sat
    assert (sat.count, sat.interval, sat.mask) == ((1 << 20) - 1, (1 << 22) - 1, (1 << 20) - 1)
    assert IqeCommand.wait(5).target == BROADCAST


def test_wire_field_limits():
    with pytest.raises(ParameterError):
        IqeCommand.trigger(1, 0, 0)
    with pytest.raises(ParameterError):
        IqeCommand.trigger(1, 1 << 20, 0)
    with pytest.raises(ParameterError):
        IqeCommand.trigger(1, 1, 1 << 22)
    with pytest.raises(ParameterError):
        IqeCommand.trigger(1 << 20, 1, 0)
    with pytest.raises(ParameterError):
        IqeCommand.play(4096, 0)
    with pytest.raises(ParameterError):
        IqeCommand.decode(1 << 64)
    with pytest.raises(ParameterError):
        IqeCommand.from_bytes(b"\x00" * 7)
    # a trigger word with count 0 is not a valid command
    with pytest.raises(ParameterError):
        IqeCommand.decode(2 << 62)


def test_wire_layout_bits():
    cmd = IqeCommand(Opcode.CONFIG, 0xABC, 0xDE, 0x2_FFFF_FFFF_FF)
    assert cmd.encode() == (3 << 62) | (0xABC << 50) | (0xDE << 42) | 0x2_FFFF_FFFF_FF
    assert cmd.to_bytes() == cmd.encode().to_bytes(8, "little")


def random_commands(count, seed=0):
    rng = np.random.default_rng(seed)
    ops = rng.integers(0, 4, count).tolist()
    targets = rng.integers(0, 4096, count).tolist()
    indices = rng.integers(0, 256, count).tolist()
    payloads = rng.integers(0, 2**42, count, dtype=np.int64).tolist()
    for op, target, index, payload in zip(ops, targets, indices, payloads):
        if op == Opcode.TRIGGER and payload >> 22 == 0:
            payload |= 1 << 22
        yield IqeCommand(op, target, index, payload)


def test_wire_fuzz_million():
    count = 0
    for cmd in random_commands(1_000_000, seed=42):
        assert wire_roundtrip(cmd) == cmd
        count += 1
    assert count == 1_000_000


@pytest.mark.parametrize("size", [1, 25, 16384])
def test_app_dispatch_is_eight_bytes(size):
    tables = DecodeTables().configure({"app_table": [{"group": 0xF00, "op": 1, "commands": [{"op": "play", "index": 1}]}]})
    # group members plus one bystander device outside the group
    devices = [DeviceConfig(k, DeviceKind.AWG, {0xF00}, (k,)) for k in range(size)]
    devices.append(DeviceConfig(size, DeviceKind.AWG, {7}, (size,)))
    sim = IqeSimulator(devices)
    for cmd in decode_program([app(0xF00, 1)], tables):
        sim.dispatch(cmd)
    assert sim.wire_bytes == 8
    assert sim.enqueued == size
