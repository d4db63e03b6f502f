"""``fabricbench`` command line.

Exit codes: 0 success, 1 validation error or bad usage, 2 runtime/IO error,
3 partial results (e.g. an agent dropped out of a link benchmark).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from fabricbench import analysis, inventory, netsim, perfmodel, topology
from fabricbench.errors import FabricbenchError, ValidationError
from fabricbench.jsonfile import JsonDocument
from fabricbench.matrix import parse_matrix_csv
from fabricbench.report import RunManifest, emit_report, rows_to_csv
from fabricbench.units import parse_size

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_INVENTORY = DATA_DIR / "zhores.json"
DEFAULT_TOPOLOGY = DATA_DIR / "fat_tree_2to1.json"
DEFAULT_LINPACK = DATA_DIR / "linpack.json"
SCALING_FILES = ("aggregation_binary.csv", "advection_coagulation.csv", "aggregation_ternary.csv")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("fabricbench")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("FABRICBENCH_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


# -- model ----------------------------------------------------------------------


def _load_inventory(manifest: RunManifest, path) -> inventory.ClusterInventory:
    text = manifest.read_text(path)
    return inventory.parse_inventory(JsonDocument(text, source=str(path)))


def _peak_rows(report: inventory.PeakReport) -> str:
    return rows_to_csv(report.as_rows())


def cmd_model(args) -> int:
    manifest = RunManifest(f"model {args.what}", config={k: v for k, v in vars(args).items() if k in ("freq",)})
    if args.what == "peak":
        path = args.inventory or DEFAULT_INVENTORY
        report = inventory.cluster_peak(_load_inventory(manifest, path))
        for w in report.warnings:
            log.warning(w)
        table = _peak_rows(report)
        sys.stdout.write(table)
        print(f"total_tflops={report.total_tflops:.1f} computed_tflops={report.computed_total_tflops:.1f}"
              f" nodes={report.total_nodes} cores={report.total_cores}")
        if args.out:
            emit_report(table, "csv", args.out, manifest)
    elif args.what == "linpack":
        path = args.inventory or DEFAULT_LINPACK
        manifest.read_text(path)
        rows = []
        for run in perfmodel.load_linpack_runs(path):
            rows.append({"label": run.label, "n": run.n, "rmax": run.rmax, "rpeak": run.rpeak,
                         "efficiency_pct": round(perfmodel.linpack_efficiency(run), 1)})
        _emit_table(rows, args, manifest)
    elif args.what == "scaling":
        if not args.inp:
            raise ValidationError("model scaling needs --in <series.csv>")
        series = perfmodel.parse_scaling_csv(manifest.read_text(args.inp), label=Path(args.inp).stem)
        rows = [{"workers": r.workers, "time_s": r.time, "speedup": round(r.speedup, 2),
                 "efficiency_pct": round(100 * r.efficiency, 1), "superlinear": r.superlinear}
                for r in perfmodel.speedup_table(series)]
        _emit_table(rows, args, manifest)
    elif args.what == "flops":
        print(f"{perfmodel.core_peak_flops(args.vector_width, args.units, args.flops_per_fma, args.freq):g} GFlop/s")
    elif args.what == "little":
        est = perfmodel.little_law_bandwidth(
            perfmodel.MemoryParams(args.latency, args.bytes_in_flight, args.channels))
        print(f"per_channel_gbps={est.per_channel:.2f} total_gbps={est.total:.2f}")
    elif args.what == "ppw":
        if not args.inp:
            raise ValidationError("model ppw needs --in <sweep.csv>")
        curve = perfmodel.perf_per_watt(perfmodel.parse_sweep_csv(manifest.read_text(args.inp)))
        rows = [{"freq_ghz": f, "gflops_per_watt": round(e, 3)} for f, e in curve.points]
        _emit_table(rows, args, manifest)
        print(f"best_freq_ghz={curve.best_freq:g}")
    return EXIT_OK


def _emit_table(rows, args, manifest) -> None:
    sys.stdout.write(rows_to_csv(rows))
    if getattr(args, "out", None):
        fmt = "csv" if str(args.out).endswith(".csv") else "json"
        emit_report(rows, fmt, args.out, manifest)


# -- micro ------------------------------------------------------------------------


def cmd_micro(args) -> int:
    from fabricbench import microbench

    manifest = RunManifest(f"micro {args.kind}", config={"threads": args.threads, "seconds": args.seconds})
    if args.kind == "fma":
        result = microbench.fma_peak_bench(args.threads, args.seconds, freq=args.freq)
        data = result.to_dict()
        print(f"fma: {result.metric_value:.2f} GFlop/s ({args.threads} threads, cv {result.cv:.3f})")
    elif args.kind == "triad":
        result = microbench.stream_triad(args.elems, args.threads, cache_bytes=args.cache_bytes)
        data = result.to_dict()
        print(f"triad: {result.metric_value:.2f} GB/s ({args.threads} threads, cv {result.cv:.3f})")
    else:
        curve = microbench.latency_chase(args.max_buffer, mode=args.mode)
        data = {"mode": args.mode, "points": [{"buffer_size": p.buffer_size, "latency_ns": p.latency_ns} for p in curve],
                "non_decreasing": microbench.is_non_decreasing(curve)}
        for p in curve:
            print(f"{p.buffer_size:>12d} B  {p.latency_ns:8.2f} ns")
    if args.json:
        emit_report(data, "json", args.json, manifest)
    return EXIT_OK


# -- topo / simulate ------------------------------------------------------------------


def _load_topology(manifest: RunManifest, path) -> topology.FatTreeTopology:
    manifest.read_text(path)
    return topology.load_topology(path)


def cmd_topo(args) -> int:
    manifest = RunManifest(f"topo {args.what}")
    topo = _load_topology(manifest, args.topology or DEFAULT_TOPOLOGY)
    if args.what == "ratio":
        print(f"{topology.oversubscription_ratio(topo):g}")
        return EXIT_OK
    routes = topology.all_pair_routes(topo)
    rows = [{"src": r.src, "dst": r.dst, "spine": "" if r.spine(topo) is None else r.spine(topo),
             "links": " ".join(str(link) for link in r.links)} for r in routes]
    sys.stdout.write(rows_to_csv(rows))
    print("# spine_usage=" + ",".join(str(u) for u in topology.spine_usage(topo, routes)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    manifest = RunManifest("simulate", config={"mode": args.mode, "msg_size": args.msg_size,
                                                "per_message_latency_us": args.latency_us,
                                                "max_concurrent": args.max_concurrent})
    topo = _load_topology(manifest, args.topology or DEFAULT_TOPOLOGY)
    background = []
    if args.background:
        manifest.read_text(args.background)
        background = topology.load_flows(args.background, topo)
    plan = netsim.SimPlan(topo, args.msg_size, args.mode, args.latency_us, tuple(background), args.max_concurrent)
    matrix = netsim.simulate(plan)
    emit_report(matrix.to_csv(), "csv", args.out, manifest)
    return EXIT_OK


# -- link ---------------------------------------------------------------------------------


def cmd_link(args) -> int:
    from fabricbench.linkbench import agent, coordinator, plan as planmod

    if args.role == "agent":
        return agent.run_agent(args.listen, args.coordinator, crash_on=args.crash_on)
    manifest = RunManifest("link coordinator")
    text = manifest.read_text(args.plan)
    bench_plan = planmod.parse_plan(JsonDocument(text, source=str(args.plan)))
    manifest.config = bench_plan.to_dict()
    result = coordinator.run_coordinator(bench_plan, args.listen)
    emit_report(result.matrix.to_csv(), "csv", args.out, manifest)
    for pair, reason in result.failures.items():
        log.warning("pair %s-%s missing: %s", pair[0], pair[1], reason)
    return EXIT_PARTIAL if result.partial else EXIT_OK


# -- analyze --------------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    manifest = RunManifest(f"analyze {args.what}", config={"bins": args.bins, "k": args.k, "threshold": args.threshold})
    matrix = parse_matrix_csv(manifest.read_text(args.inp), source=str(args.inp))
    if args.what == "hist":
        hist = analysis.build_histogram(matrix.bandwidths(), bins=args.bins)
        data = hist.to_dict()
        if args.gnuplot:
            Path(args.gnuplot).write_text(hist.to_gnuplot())
    elif args.what == "stats":
        data = analysis.summarize(matrix, args.k).to_dict()
    elif args.what == "failing":
        flagged = analysis.detect_failing_links(matrix, args.k)
        data = {"k": args.k, "flagged": [{"src": s, "dst": d, "bandwidth": b} for s, d, b in flagged]}
    else:
        if not args.parallel:
            raise ValidationError("analyze compare needs --parallel <matrix.csv>")
        other = parse_matrix_csv(manifest.read_text(args.parallel), source=str(args.parallel))
        data = analysis.compare_modes(matrix, other, args.threshold).to_dict()
    emit_report(data, "json", args.out, manifest)
    return EXIT_OK


# -- demo -----------------------------------------------------------------------------------


def run_demo(out_dir: Path, msg_size: int = 1 << 20, bins: int = 10, latency_us: float = 1.0) -> dict:
    """Reproduce the packaged reference tables and the serial/parallel fabric contrast."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("demo", config={"msg_size": msg_size, "bins": bins, "per_message_latency_us": latency_us})

    peak = inventory.cluster_peak(_load_inventory(manifest, DEFAULT_INVENTORY))
    emit_report(peak.as_rows(), "csv", out_dir / "peak.csv", manifest)

    manifest.read_text(DEFAULT_LINPACK)
    linpack = [{"label": r.label, "efficiency_pct": perfmodel.linpack_efficiency(r)}
               for r in perfmodel.load_linpack_runs(DEFAULT_LINPACK)]
    scaling = {}
    for name in SCALING_FILES:
        series = perfmodel.parse_scaling_csv(manifest.read_text(DATA_DIR / name), label=name)
        table = perfmodel.speedup_table(series)
        scaling[name] = [{"workers": r.workers, "speedup": r.speedup, "efficiency": r.efficiency} for r in table]

    topo = _load_topology(manifest, DEFAULT_TOPOLOGY)
    modes = {}
    matrices = {}
    for mode in netsim.MODES:
        matrix = netsim.simulate(netsim.SimPlan(topo, msg_size, mode, latency_us))
        matrices[mode] = matrix
        matrix.save(out_dir / f"{mode}.csv")
        hist = netsim.histogram_of(matrix, bins)
        (out_dir / f"{mode}_hist.dat").write_text(hist.to_gnuplot())
        modes[mode] = {"stats": analysis.summarize(matrix).to_dict(), "histogram": hist.to_dict()}
    comparison = analysis.compare_modes(matrices["serial"], matrices["parallel"])

    data = {
        "peak": {"total_tflops": peak.total_tflops, "computed_total_tflops": peak.computed_total_tflops,
                 "nodes": peak.total_nodes, "cores": peak.total_cores, "warnings": list(peak.warnings)},
        "core_peak_gflops_3_5ghz": perfmodel.core_peak_flops(8, 2, 2, 3.5),
        "little_law_gbps_per_channel": perfmodel.little_law_bandwidth(perfmodel.MemoryParams(27.4)).per_channel,
        "linpack": linpack,
        "scaling": scaling,
        "fabric": {
            "topology": topo.to_dict(),
            "oversubscription": topology.oversubscription_ratio(topo),
            "modes": modes,
            "comparison": comparison.to_dict(),
        },
    }
    emit_report(data, "json", out_dir / "demo.json", manifest)
    return data


def cmd_demo(args) -> int:
    out = Path(args.out_dir)
    data = run_demo(out, args.msg_size, args.bins)
    fabric = data["fabric"]
    print(f"peak: {data['peak']['total_tflops']:.1f} TFlop/s over {data['peak']['nodes']} nodes")
    for row in data["linpack"]:
        print(f"linpack {row['label']}: {row['efficiency_pct']:.1f}%")
    for name, table in data["scaling"].items():
        last = table[-1]
        print(f"scaling {name}: S({last['workers']}) = {last['speedup']:.2f}")
    for mode, body in fabric["modes"].items():
        st = body["stats"]
        print(f"{mode}: mean {st['mean']:.3f} GB/s, stddev {st['stddev']:.3f}, min {st['min']:.3f}")
    print(f"contended pairs: {len(fabric['comparison']['contended'])}; reports in {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fabricbench", description="Cluster performance characterization toolkit")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    m = sub.add_parser("model", help="analytic models")
    m.add_argument("what", choices=["peak", "linpack", "scaling", "flops", "little", "ppw"])
    m.add_argument("--inventory", help="inventory JSON (peak) or Linpack runs JSON (linpack)")
    m.add_argument("--in", dest="inp", help="input CSV for scaling/ppw")
    m.add_argument("--out")
    m.add_argument("--vector-width", type=int, default=8)
    m.add_argument("--units", type=int, default=2)
    m.add_argument("--flops-per-fma", type=int, default=2)
    m.add_argument("--freq", type=float, default=3.5, help="GHz")
    m.add_argument("--latency", type=float, default=27.4, help="memory latency in ns")
    m.add_argument("--bytes-in-flight", type=float, default=perfmodel.DEFAULT_BYTES_IN_FLIGHT)
    m.add_argument("--channels", type=int, default=1)
    m.set_defaults(func=cmd_model)

    mi = sub.add_parser("micro", help="node microbenchmarks")
    mi.add_argument("kind", choices=["fma", "triad", "latency"])
    mi.add_argument("--threads", type=int, default=1)
    mi.add_argument("--seconds", type=float, default=1.0)
    mi.add_argument("--freq", type=float, help="declared core clock in GHz for the peak bound")
    mi.add_argument("--elems", type=int, help="triad array length")
    mi.add_argument("--cache-bytes", type=parse_size, default=32 << 20)
    mi.add_argument("--max-buffer", type=parse_size, default=64 << 20)
    mi.add_argument("--mode", choices=["random", "sequential"], default="random")
    mi.add_argument("--json")
    mi.set_defaults(func=cmd_micro)

    t = sub.add_parser("topo", help="fat-tree topology queries")
    t.add_argument("what", choices=["ratio", "routes"])
    t.add_argument("--topology")
    t.set_defaults(func=cmd_topo)

    s = sub.add_parser("simulate", help="flow-level all-pairs ping-pong simulation")
    s.add_argument("--topology")
    s.add_argument("--mode", choices=list(netsim.MODES), default="serial")
    s.add_argument("--msg-size", type=parse_size, default=1 << 20)
    s.add_argument("--latency-us", type=float, default=1.0)
    s.add_argument("--background")
    s.add_argument("--max-concurrent", type=int)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)

    lk = sub.add_parser("link", help="socket all-pairs ping-pong")
    roles = lk.add_subparsers(dest="role", metavar="role", required=True)
    co = roles.add_parser("coordinator")
    co.add_argument("--plan", required=True)
    co.add_argument("--listen", help="overrides the plan's coordinator address")
    co.add_argument("--out", default="-")
    ag = roles.add_parser("agent")
    ag.add_argument("--listen", required=True)
    ag.add_argument("--coordinator", required=True)
    ag.add_argument("--crash-on", choices=["plan"], help=argparse.SUPPRESS)
    lk.set_defaults(func=cmd_link)

    a = sub.add_parser("analyze", help="statistics over a bandwidth matrix")
    a.add_argument("what", choices=["hist", "stats", "failing", "compare"])
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--parallel", help="parallel-mode matrix for compare")
    a.add_argument("--bins", type=int, default=10)
    a.add_argument("--k", type=float, default=analysis.DEFAULT_K)
    a.add_argument("--threshold", type=float, default=analysis.DEFAULT_CONTENTION_THRESHOLD)
    a.add_argument("--gnuplot", help="also write the histogram as two-column text")
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("demo", help="reproduce reference tables and fabric contrast")
    d.add_argument("--out-dir", default="demo-out")
    d.add_argument("--msg-size", type=parse_size, default=1 << 20)
    d.add_argument("--bins", type=int, default=10)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"fabricbench: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, FabricbenchError) as exc:
        print(f"fabricbench: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
