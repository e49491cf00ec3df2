import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scqc.errors import ParameterError
from scqc.qisa import Opcode
from scqc.workloads import (
    CostModel,
    Level,
    fit_power_law,
    gen_bell_program,
    gen_memory_program,
    gen_t1_program,
    memory_rounds,
    profile,
    reports_csv,
    run_t1,
    simulate_program,
    t1_fit,
)


def _pulse_cycle(d):
    # H, H, measure, reset on every ancilla; two plays per ancilla-data interaction;
    # six waits and one trigger
    interactions = 4 * (d - 1) ** 2 + 4 * (d - 1)
    return 4 * (d * d - 1) + 2 * interactions + 7


def _gate_cycle(d):
    return 4 * (d * d - 1) + 4 * (d - 1) ** 2 + 4 * (d - 1) + 7


def test_parallel_cycle_is_fifteen():
    prog = gen_memory_program(5, 21, Level.PARALLEL)
    assert prog.words_per_cycle == 15
    assert len(prog) == 2 + 15 * 21 + 2
    cycle = prog.instructions[2:17]
    assert [i.kind for i in cycle].count("app") == 8
    assert [i.kind for i in cycle].count("qwait") == 6
    assert cycle[-1].kind == "trig"
    assert prog.instructions[17:32] == cycle


@pytest.mark.parametrize("d", [3, 5, 7])
def test_instruction_counts_per_level(d):
    n = memory_rounds(d)
    fixed_pulse = 2 * (d * d + 1)
    assert len(gen_memory_program(d, n, Level.PULSE)) == fixed_pulse + n * _pulse_cycle(d)
    assert len(gen_memory_program(d, n, Level.GATE)) == fixed_pulse + n * _gate_cycle(d)
    assert len(gen_memory_program(d, n, Level.PARALLEL)) == 4 + 15 * n


def test_logical_count_independent_of_distance():
    small = gen_memory_program(5, memory_rounds(5), Level.LOGICAL)
    large = gen_memory_program(25, memory_rounds(25), Level.LOGICAL)
    assert len(small) == len(large) == 6


def test_pulse_counts_scale_cubically():
    ds = [5, 11, 21]
    counts = [len(gen_memory_program(d, memory_rounds(d), Level.PULSE)) for d in ds]
    _, k = fit_power_law(ds, counts)
    assert abs(k - 3) <= 0.15 * 3
    c = np.dot(counts, np.power(ds, 3.0)) / np.dot(np.power(ds, 3.0), np.power(ds, 3.0))
    for d, y in zip(ds, counts):
        assert abs(c * d**3 - y) <= 0.15 * y


def test_fit_power_law_exact():
    c, k = fit_power_law([1, 2, 4], [3, 24, 192])
    assert c == pytest.approx(3) and k == pytest.approx(3)


def test_parallel_and_logical_stream_identical():
    for d, n in ((3, 4), (5, 21)):
        par = gen_memory_program(d, n, Level.PARALLEL).commands()
        log = gen_memory_program(d, n, Level.LOGICAL).commands()
        assert par == log
    par = gen_bell_program(3, 1, 2, 3, 2, Level.PARALLEL).commands()
    assert par == gen_bell_program(3, 1, 2, 3, 2, Level.LOGICAL).commands()


def _schedule_key(schedule):
    return sorted((p.channel, p.start, p.index, p.duration) for p in schedule.pulses)


@pytest.mark.parametrize("make", [lambda lv: gen_memory_program(3, 3, lv), lambda lv: gen_bell_program(3, 1, 2, 2, 2, lv)])
def test_levels_produce_the_same_schedule(make):
    keys, wire = {}, {}
    for lv in Level:
        res, _ = simulate_program(make(lv))
        keys[lv] = _schedule_key(res.schedule)
        wire[lv] = res.wire_bytes
    assert keys[Level.PULSE] == keys[Level.GATE] == keys[Level.PARALLEL] == keys[Level.LOGICAL]
    assert wire[Level.PARALLEL] < wire[Level.GATE] <= wire[Level.PULSE]


@pytest.mark.parametrize("d", [5, 7, 9])
def test_classical_time_ordering(d):
    n = memory_rounds(d)
    t = {lv: profile(gen_memory_program(d, n, lv)).classical_ns for lv in Level}
    assert t[Level.LOGICAL] < t[Level.PARALLEL] < t[Level.GATE] < t[Level.PULSE]


def test_quantum_time_equal_across_levels():
    q = {profile(gen_memory_program(5, 21, lv)).quantum_ns for lv in Level}
    # prologue reset plus 21 cycles of 800 ns plus data readout
    assert q == {600 + 21 * 800 + 600}


def test_bandwidth_exact():
    rep = profile(gen_memory_program(5, 21, Level.PARALLEL))
    assert rep.bandwidth_bps == 960_000_000
    assert 15 * 64 * 10**6 == 960_000_000
    assert profile(gen_memory_program(7, 28, Level.LOGICAL)).bandwidth_bps == 960_000_000


def test_classical_time_from_accesses():
    cost = CostModel(mmio_cycles=10, clock_ghz=2.0)
    rep = profile(gen_memory_program(3, 2, Level.PARALLEL), cost)
    assert rep.classical_ns == rep.mmio_accesses * 10 / 2.0
    # every pseudo-instruction is one access except the trigger, which is three
    assert rep.mmio_accesses == rep.instr_count + 2 * 3


def test_empty_program_profile():
    rep = profile(None)
    assert rep.classical_ns == rep.quantum_ns == rep.bandwidth_bps == 0
    text = reports_csv([rep])
    assert text.splitlines()[0] == "level,d,n,instr_count,classical_ns,quantum_ns,bandwidth_bps"


def test_cost_model_cycle():
    assert CostModel().cycle_ns == 800
    with pytest.raises(ParameterError):
        CostModel(single_ns=0)


def test_generator_validation():
    with pytest.raises(ParameterError):
        gen_memory_program(4, 3, Level.PULSE)
    with pytest.raises(ParameterError):
        gen_memory_program(3, 0, Level.PULSE)
    with pytest.raises(ParameterError):
        gen_bell_program(3, 2, 1, 1, 1, Level.PULSE)
    with pytest.raises(ValueError):
        gen_memory_program(3, 3, "quantum")


@given(d=st.sampled_from([3, 5]), n=st.integers(1, 30))
@settings(max_examples=25, deadline=None)
def test_logical_blocks_cover_rounds(d, n):
    prog = gen_memory_program(d, n, Level.LOGICAL)
    k = max(1, math.floor(n / d + 0.5))
    assert len(prog) == 2 + min(k, n)
    cmds = prog.commands()
    assert sum(c.opcode is Opcode.TRIGGER for c in cmds) == n + 1


# ---------------------------------------------------------------------------
# T1 calibration


def test_t1_fit_exact_synthetic():
    delays = [10_000, 30_000, 50_000, 80_000]
    fractions = [math.exp(-t / 42_000) for t in delays]
    assert t1_fit(delays, fractions) == pytest.approx(42_000)


def test_t1_fit_rejects_degenerate():
    with pytest.raises(ParameterError):
        t1_fit([1, 2, 3], [0.5, 0.5, 0.5])
    with pytest.raises(ParameterError):
        t1_fit([1, 2], [0.5, 0.2])
    with pytest.raises(ParameterError):
        t1_fit([1, 2, 3], [0.2, 0.3, 0.4])


def test_t1_program_shape():
    prog = gen_t1_program([10, 20, 30], 4)
    assert len(prog) == 3 * (4 + 4)
    with pytest.raises(ParameterError):
        gen_t1_program([10, 10, 20], 4)


def test_t1_recovers_time_constant():
    res = run_t1([10_000, 30_000, 50_000, 80_000, 120_000], 2000, 50_000, seed=1)
    assert abs(res.t1_ns - 50_000) <= 0.1 * 50_000
    assert res.fractions == sorted(res.fractions, reverse=True)
