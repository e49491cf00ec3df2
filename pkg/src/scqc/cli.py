"""``scqc`` command-line entry point.

Exit codes: 0 success, 1 invariant violation (e.g. an invalid correction),
2 usage or parameter error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import noise, qisa, sandwich, workloads
from .decoders import DECODERS, validate_rows
from .errors import InfeasibleError, ParameterError, WindowDecodeError
from .iqe_sim import ConstantModel, ControlStack, IqeSimulator, load_topology, qubit_topology
from .surface_graph import CodeParams, DecoderGraph, build_graph, plan_windows

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2
BENCH_FIELDS = ("experiment", "d", "p", "inner", "step", "window_size", "windows", "shots", "workers",
                "per_layer_us_1ghz", "logical_failures", "valid_fraction")
CHUNK = 10_000


class InvariantViolation(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("SCQ_SEED")
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise ParameterError(f"SCQ_SEED must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# shared argument groups


def _add_code_args(p: argparse.ArgumentParser, multi_d: bool = False) -> None:
    p.add_argument("--exp", choices=("memory", "bell"), default="memory", help="experiment type")
    if multi_d:
        p.add_argument("-d", type=int, nargs="+", default=[5], help="code distance(s)")
    else:
        p.add_argument("-d", type=int, default=3, help="code distance")
    p.add_argument("-n", type=int, default=None, help="memory rounds (default 7/2 (d+1))")
    p.add_argument("-m", type=int, default=None, help="Bell routing length (default 3d)")
    p.add_argument("--n1", type=int, default=None, help="Bell rounds before the merge (default d)")
    p.add_argument("--n2", type=int, default=None, help="Bell merged rounds (default d)")
    p.add_argument("--n3", type=int, default=None, help="Bell rounds after the split (default d)")


def _params(args, d: int) -> CodeParams:
    if args.exp == "memory":
        return CodeParams.memory(d, args.n if args.n is not None else workloads.memory_rounds(d))
    return CodeParams.bell(d, args.m if args.m is not None else 3 * d,
                           args.n1 or d, args.n2 or d, args.n3 or d)


def _graph(args, d: int) -> DecoderGraph:
    if getattr(args, "graph", None):
        return DecoderGraph.load(args.graph)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_graph(_params(args, d))


def _add_decode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-p", type=float, default=0.001, help="edge flip probability")
    p.add_argument("--inner", choices=sorted(DECODERS), default="uf", help="inner decoder")
    p.add_argument("--step", type=int, default=None, help="window core size (default (d+1)/2)")
    p.add_argument("--workers", type=int, default=1, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="noise seed (default $SCQ_SEED or 0)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph(args) -> int:
    graph = _graph(args, args.d)
    text = graph.dumps() + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sample(args) -> int:
    graph = _graph(args, args.d)
    nz = noise.NoiseParams(args.p, args.seed)
    batch = noise.sample_batch(graph, nz, args.shots)
    noise.write_syndrome_file(args.output, batch.events, graph.layers)
    print(json.dumps({"shots": args.shots, "detectors": graph.num_detectors, "layers": graph.layers,
                      "p_detect": noise.detection_event_stats(batch) if args.shots else 0.0}))
    return EXIT_OK


def _decode_stats(graph: DecoderGraph, events: np.ndarray, truth: np.ndarray | None, inner, step: int | None,
                  workers: int) -> dict:
    if step is None:
        corr = np.concatenate([
            sandwich._decode_rows(inner, graph, events[k:k + CHUNK]) for k in range(0, len(events), CHUNK)
        ]) if len(events) else np.zeros((0, graph.num_edges), np.uint8)
        plan_desc = {"windows": 1, "step": graph.layers}
    else:
        dec = sandwich.SandwichDecoder(graph, plan_windows(graph, step), inner)
        parts = [dec.decode_batch(events[k:k + CHUNK], workers)[0] for k in range(0, len(events), CHUNK)]
        corr = np.concatenate(parts) if parts else np.zeros((0, graph.num_edges), np.uint8)
        plan_desc = {"windows": len(dec.windows), "step": step}
    valid = validate_rows(graph, corr, events)
    out = {"shots": int(len(events)), **plan_desc, "valid_fraction": float(valid.mean()) if len(events) else 1.0}
    if truth is not None:
        fails = sandwich.logical_failures(graph, corr, truth)
        out["logical_failures"] = int(fails.sum())
        out["failure_rate"] = float(fails.mean()) if len(events) else 0.0
    if not valid.all():
        raise InvariantViolation(json.dumps(out))
    return out


def cmd_decode(args) -> int:
    graph = _graph(args, args.d)
    inner = DECODERS[args.inner]()
    truth = None
    if args.input:
        header, events = noise.read_syndrome_file(args.input)
        if header.detectors != graph.num_detectors:
            raise ParameterError(f"syndrome file has {header.detectors} detectors, graph has {graph.num_detectors}")
    else:
        batch = noise.sample_batch(graph, noise.NoiseParams(args.p, args.seed), args.shots)
        events, truth = batch.events, batch.logical_truth
    step = None if args.whole else (args.step or (graph.params.d + 1) // 2)
    stats = _decode_stats(graph, events, truth, inner, step, args.workers)
    print(json.dumps(stats))
    return EXIT_OK


def _parse_soc(text: str) -> tuple[int, float]:
    try:
        cores, clock = text.split(":")
        return int(cores), float(clock)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected CORES:GHZ, got {text!r}") from None


def cmd_bench(args) -> int:
    rows = []
    inner = DECODERS[args.inner]()
    for d in args.d:
        graph = _graph(args, d)
        step = args.step or (d + 1) // 2
        dec = sandwich.SandwichDecoder(graph, plan_windows(graph, step), inner)
        nz = noise.NoiseParams(args.p, args.seed)
        run_times, fails, valid, total = [], 0, 0, 0
        for r in range(args.runs):
            batch = noise.sample_batch(graph, nz, args.shots, start=r * args.shots)
            corr, stats = dec.decode_batch(batch.events, args.workers)
            run_times.append(float(np.mean(stats.window_ns)) / 1000.0)
            fails += int(sandwich.logical_failures(graph, corr, batch.logical_truth).sum())
            valid += int(validate_rows(graph, corr, batch.events).sum())
            total += len(batch)
        per_layer = sandwich.throughput_metric(run_times, step, args.clock_ghz)
        rows.append({
            "experiment": args.exp, "d": d, "p": args.p, "inner": args.inner, "step": step,
            "window_size": dec.plan.window_size, "windows": len(dec.windows), "shots": total,
            "workers": args.workers, "per_layer_us_1ghz": f"{per_layer:.6g}",
            "logical_failures": fails, "valid_fraction": valid / total if total else 1.0,
        })
    fh = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.output:
            fh.close()
    for row in rows:
        for cores, clock in args.soc:
            ok = sandwich.soc_feasibility(float(row["per_layer_us_1ghz"]), cores, clock)
            print(f"# soc d={row['d']} cores={cores} clock_ghz={clock} per_layer_us={row['per_layer_us_1ghz']} "
                  f"budget_us={cores * clock:g} feasible={ok}", file=sys.stderr)
    if any(row["valid_fraction"] != 1.0 for row in rows):
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_profile(args) -> int:
    cost = workloads.CostModel(clock_ghz=args.clock_ghz, syndrome_cycle_ns=args.cycle_ns)
    levels = [workloads.Level(args.level)] if args.level else list(workloads.Level)
    reports = []
    for d in args.d:
        for level in levels:
            if args.exp == "memory":
                prog = workloads.gen_memory_program(d, args.n or workloads.memory_rounds(d), level, cost)
            else:
                prog = workloads.gen_bell_program(d, args.m or 3 * d, args.n1 or d, args.n2 or d, args.n3 or d,
                                                  level, cost)
            reports.append(workloads.profile(prog, cost))
    if args.output:
        workloads.save_report(args.output, reports)
    if args.format == "json":
        print(json.dumps([r.to_dict() for r in reports], indent=1))
    else:
        sys.stdout.write(workloads.reports_csv(reports))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.program:
        program = qisa.load_program(args.program)
        tables = qisa.load_tables(args.tables) if args.tables else None
        if not args.topology:
            raise ParameterError("--topology is required with --program")
        devices, durations = load_topology(args.topology)
        sim = IqeSimulator(devices, durations, ConstantModel(0), seed=args.seed)
    else:
        if args.exp == "memory":
            prog = workloads.gen_memory_program(args.d, args.n or workloads.memory_rounds(args.d), args.level)
        else:
            prog = workloads.gen_bell_program(args.d, args.m or 3 * args.d, args.n1 or args.d, args.n2 or args.d,
                                              args.n3 or args.d, args.level)
        program, tables = prog.instructions, prog.decode_tables()
        sim = IqeSimulator(qubit_topology(prog.qubits, prog.groups, args.jitter_ps), seed=args.seed)
    result = ControlStack(sim, tables).run(program)
    doc = {"wire_bytes": result.wire_bytes, "mmio_accesses": result.mmio_accesses,
           "commands": len(result.commands), "loads": result.loads, "schedule": result.schedule.to_dict()}
    text = json.dumps(doc)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
        print(json.dumps({k: v for k, v in doc.items() if k != "schedule"} | {"end_ns": result.schedule.end}))
    else:
        print(text)
    return EXIT_OK


def cmd_t1(args) -> int:
    delays = [int(round(float(x) * 1000)) for x in args.delays_us.split(",")]
    res = workloads.run_t1(delays, args.repeats, args.t1_us * 1000.0, seed=args.seed)
    print(json.dumps({"delays_ns": res.delays, "excited_fraction": res.fractions,
                      "t1_fit_us": res.t1_ns / 1000.0, "t1_model_us": args.t1_us}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scqc", description="Surface-code control stack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="build and serialize a decoder graph")
    _add_code_args(p)
    p.add_argument("-o", "--output", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_graph, graph=None)

    p = sub.add_parser("sample", help="sample shots into a syndrome file")
    _add_code_args(p)
    p.add_argument("--graph", help="graph JSON file instead of generated parameters")
    p.add_argument("-p", type=float, default=0.001)
    p.add_argument("--shots", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True, help="syndrome file path")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("decode", help="windowed decode with validity and logical statistics")
    _add_code_args(p)
    _add_decode_args(p)
    p.add_argument("--graph", help="graph JSON file instead of generated parameters")
    p.add_argument("--input", help="syndrome file (default: sample fresh shots)")
    p.add_argument("--shots", type=int, default=1000)
    p.add_argument("--whole", action="store_true", help="decode the whole volume without windows")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="throughput sweep to CSV plus feasibility report")
    _add_code_args(p, multi_d=True)
    _add_decode_args(p)
    p.add_argument("--runs", type=int, default=5, help="timed runs per distance")
    p.add_argument("--shots", type=int, default=200, help="shots per run")
    p.add_argument("--clock-ghz", type=float, default=1.0, help="clock of this machine, for normalization")
    p.add_argument("--soc", type=_parse_soc, action="append", default=None,
                   help="CORES:GHZ pair for the feasibility report (repeatable)")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench, graph=None)

    p = sub.add_parser("profile", help="workload cost report")
    _add_code_args(p, multi_d=True)
    p.add_argument("--level", choices=[lv.value for lv in workloads.Level], default=None)
    p.add_argument("--clock-ghz", type=float, default=1.0)
    p.add_argument("--cycle-ns", type=float, default=1000.0, help="syndrome cycle for the bandwidth figure")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output", help="report path (.csv or .json)")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("simulate", help="run a program through the driver and electronics model")
    _add_code_args(p)
    p.add_argument("--level", choices=[lv.value for lv in workloads.Level], default="parallel")
    p.add_argument("--program", help="program JSON file (requires --topology)")
    p.add_argument("--tables", help="decode-table JSON file")
    p.add_argument("--topology", help="device topology JSON file")
    p.add_argument("--jitter-ps", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", help="schedule dump path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("t1", help="T1 calibration demo against the decay model")
    p.add_argument("--t1-us", type=float, default=50.0)
    p.add_argument("--delays-us", default="10,30,50,80,120")
    p.add_argument("--repeats", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_t1)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "seed", "absent") is None:
            args.seed = _default_seed()
        if getattr(args, "soc", "absent") is None:
            args.soc = [(16, 2.5), (1088, 1.0)]
        for name in ("shots", "runs", "workers"):
            if getattr(args, name, 1) < (0 if name == "shots" else 1):
                raise ParameterError(f"--{name} out of range")
        return args.func(args)
    except (InvariantViolation, InfeasibleError, WindowDecodeError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ParameterError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
