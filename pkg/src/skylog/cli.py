"""Command-line entry point.

One subcommand per workflow stage: collect (daemon), serve/probe (active
measurement endpoints), simulate (collector against the simulated backend),
analyze, export.  Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Optional

from . import analysis
from .collector import (
    CollectorConfig,
    PlanPositionSource,
    SimClock,
    SystemClock,
    TracePositionSource,
    run_collection,
)
from .geoexport import export_csv, export_geojson
from .modem import ReplayBackend
from .netprobe import MeasurementServer, ProbeConfig, rtt_probe, throughput_test
from .records import (
    EndToEndRecord,
    GeoPosition,
    encode_e2e,
    read_e2e_trace,
    read_trace,
)
from .simenv import SimE2eEngine, SimModemBackend, load_environment, load_flight_plan

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for runtime failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid_spec(text: str) -> tuple[float, float]:
    try:
        ground_s, alt_s = text.split(",")
        ground, alt = float(ground_s), float(alt_s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected GROUND,ALT meters (e.g. 25,10), got {text!r}")
    if ground <= 0 or alt <= 0:
        raise argparse.ArgumentTypeError("voxel sizes must be positive")
    return ground, alt


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skylog",
                     description="UAV cellular-coverage survey toolkit")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"],
                        help="logging verbosity (default: warning)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the environment file's RNG seed "
                             "(sim paths only)")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("collect", help="run the sampling daemon",
                       description="Poll a modem backend on a fixed cadence and "
                                   "write trace files until stopped.")
    p.add_argument("--config", required=True,
                   help="environment file (stations, propagation, seed)")
    p.add_argument("--duration", type=float, default=None,
                   help="stop after this many seconds (default: run until SIGINT)")
    p.add_argument("--backend", choices=["sim", "replay", "hw"], default="sim",
                   help="modem backend (default: sim)")
    p.add_argument("--plan", help="flight plan file (required for the sim backend)")
    p.add_argument("--replay", metavar="TRACE",
                   help="trace file to re-ingest (required for the replay backend)")
    p.add_argument("--out", default="skylog-out", help="output directory")
    p.add_argument("--interval-ms", type=int, default=1000,
                   help="RAN sampling interval (default: 1000)")
    p.add_argument("--e2e-interval", type=float, default=60.0,
                   help="seconds between end-to-end tests, 0 disables (default: 60)")
    p.add_argument("--run-id", default=None, help="output file name stem")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("serve", help="run the echo/throughput server",
                       description="Measurement server; prints the bound ports "
                                   "as one JSON line, then serves until SIGINT.")
    p.add_argument("--bind", default="0.0.0.0", help="bind address")
    p.add_argument("--rtt-port", type=int, default=7701, help="UDP echo port")
    p.add_argument("--tp-port", type=int, default=7702, help="TCP throughput port")
    p.add_argument("--dl-throttle-mbps", type=float, default=None,
                   help="cap download streaming rate (testing aid)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("probe", help="run one end-to-end test",
                       description="RTT burst plus bidirectional throughput "
                                   "against a server; prints one record line.")
    p.add_argument("--server", required=True, help="server host")
    p.add_argument("--rtt-port", type=int, default=7701)
    p.add_argument("--tp-port", type=int, default=7702)
    p.add_argument("--count", type=int, default=20, help="RTT probes per burst")
    p.add_argument("--interval-ms", type=int, default=200, help="RTT probe spacing")
    p.add_argument("--timeout-ms", type=int, default=1000, help="RTT reply timeout")
    p.add_argument("--duration", type=float, default=5.0,
                   help="seconds per throughput direction (default: 5)")
    p.add_argument("--block-bytes", type=int, default=65536, help="upload block size")
    p.add_argument("--ul-throttle-mbps", type=float, default=None,
                   help="cap upload rate (testing aid)")
    p.add_argument("--lat", type=float, default=0.0, help="tag position latitude")
    p.add_argument("--lon", type=float, default=0.0, help="tag position longitude")
    p.add_argument("--alt", type=float, default=0.0, help="tag altitude (m AMSL)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("simulate", help="run the collector on the simulated backend",
                       description="Full collection run against the simulated "
                                   "radio environment on a virtual clock; "
                                   "deterministic for a fixed seed.")
    p.add_argument("--env", required=True, help="environment file")
    p.add_argument("--plan", required=True, help="flight plan file")
    p.add_argument("--duration", type=float, required=True, help="simulated seconds")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--interval-ms", type=int, default=1000,
                   help="RAN sampling interval (default: 1000)")
    p.add_argument("--e2e-interval", type=float, default=60.0,
                   help="seconds between end-to-end tests, 0 disables (default: 60)")
    p.add_argument("--run-id", default=None, help="output file name stem")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="summarize traces into a coverage report",
                       description="Coverage report plus distribution tables, "
                                   "written as one JSON document and sibling "
                                   "CSV tables next to it.")
    p.add_argument("--ran", nargs="+", required=True, metavar="TRACE",
                   help="RAN trace file(s)")
    p.add_argument("--e2e", nargs="+", default=[], metavar="TRACE",
                   help="end-to-end trace file(s)")
    p.add_argument("--report", required=True, help="output report path")
    p.add_argument("--rsrq-poor", type=float, default=analysis.DEFAULT_RSRQ_POOR_DB,
                   help="poor-quality RSRQ threshold, dB (default: -19)")
    p.add_argument("--tp-min", type=float, default=analysis.DEFAULT_TP_MIN_MBPS,
                   help="throughput floor, Mbps (default: 5)")
    p.add_argument("--rtt-max", type=float, default=analysis.DEFAULT_RTT_MAX_MS,
                   help="latency ceiling on RTT medians, ms (default: 150)")
    p.add_argument("--alt-bin", type=float, default=10.0,
                   help="altitude bin height, m (default: 10)")
    p.add_argument("--rtt-bin", type=float, default=10.0,
                   help="RTT histogram bin width, ms (default: 10)")
    p.add_argument("--grid", type=_grid_spec, default=(25.0, 10.0),
                   metavar="GROUND,ALT", help="voxel sizes in m (default: 25,10)")
    p.add_argument("--by-voxel", action="store_true",
                   help="weight the RSRQ fraction by occupied voxel instead of "
                        "by sample (de-biases hover dwells)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export", help="export a trace for map rendering")
    p.add_argument("--ran", required=True, metavar="TRACE", help="RAN trace file")
    p.add_argument("--format", required=True, choices=["geojson", "csv"])
    p.add_argument("--metric", choices=list(analysis.SERVING_METRICS),
                   help="limit geojson properties to one metric")
    p.add_argument("--grid", type=_grid_spec, default=None, metavar="GROUND,ALT",
                   help="aggregate into voxels of this size instead of "
                        "exporting raw records")
    p.add_argument("--out", required=True, help="output file")
    p.set_defaults(func=cmd_export)

    return parser


def _load_env(path: str, seed_override: Optional[int]):
    env = load_environment(path)
    if seed_override is not None:
        env = dataclasses.replace(env, seed=seed_override)
    return env


def cmd_collect(args) -> int:
    if args.backend == "hw":
        raise UsageError("no hardware modem driver is built in; use sim or replay")
    stop = threading.Event()
    if args.backend == "sim":
        if not args.plan:
            raise UsageError("--plan is required with the sim backend")
        env = _load_env(args.config, args.seed)
        source = PlanPositionSource(load_flight_plan(args.plan))
        modem = SimModemBackend(env, source.position)
        engine = SimE2eEngine(env) if args.e2e_interval > 0 else None
        clock = SystemClock()
    else:
        if not args.replay:
            raise UsageError("--replay TRACE is required with the replay backend")
        modem = ReplayBackend(args.replay)
        source = TracePositionSource(args.replay)
        engine = None
        clock = SimClock()  # re-ingesting a trace should not wait out wall time
    cfg = CollectorConfig(output_dir=args.out,
                          sample_interval_ms=args.interval_ms,
                          e2e_interval_s=args.e2e_interval,
                          duration_s=args.duration, run_id=args.run_id)
    previous = {s: signal.signal(s, lambda *_: stop.set())
                for s in (signal.SIGINT, signal.SIGTERM)}
    try:
        summary = run_collection(cfg, clock, modem, source,
                                 e2e_engine=engine, stop_event=stop)
    finally:
        for s, handler in previous.items():
            signal.signal(s, handler)
    print(json.dumps(summary.to_doc()))
    return EXIT_OK


def cmd_serve(args) -> int:
    server = MeasurementServer(args.bind, args.rtt_port, args.tp_port,
                               dl_throttle_mbps=args.dl_throttle_mbps)
    server.start()
    print(json.dumps({"bind": args.bind, "rtt_port": server.rtt_port,
                      "tp_port": server.tp_port}), flush=True)
    try:
        server.wait()
    finally:
        server.stop()
    return EXIT_OK


def cmd_probe(args) -> int:
    try:
        cfg = ProbeConfig(server_host=args.server, rtt_port=args.rtt_port,
                          tp_port=args.tp_port, rtt_count=args.count,
                          rtt_interval_ms=args.interval_ms,
                          rtt_timeout_ms=args.timeout_ms,
                          tp_duration_s=args.duration,
                          tp_block_bytes=args.block_bytes,
                          ul_throttle_mbps=args.ul_throttle_mbps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rtt = rtt_probe(cfg)
    dl = throughput_test(cfg, "DL")
    ul = throughput_test(cfg, "UL")
    rec = EndToEndRecord(ts_unix_ms=time.time_ns() // 1_000_000,
                         pos=GeoPosition(args.lat, args.lon, args.alt),
                         rtt=rtt, dl_mbps=dl, ul_mbps=ul,
                         duration_s=cfg.tp_duration_s)
    print(encode_e2e(rec))
    return EXIT_OK


def cmd_simulate(args) -> int:
    env = _load_env(args.env, args.seed)
    plan = load_flight_plan(args.plan)
    cfg = CollectorConfig(output_dir=args.out,
                          sample_interval_ms=args.interval_ms,
                          e2e_interval_s=args.e2e_interval,
                          duration_s=args.duration, run_id=args.run_id)
    source = PlanPositionSource(plan)
    modem = SimModemBackend(env, source.position)
    engine = SimE2eEngine(env) if args.e2e_interval > 0 else None
    summary = run_collection(cfg, SimClock(), modem, source, e2e_engine=engine)
    print(json.dumps(summary.to_doc()))
    return EXIT_OK


def _stats_rows(bins) -> list[list]:
    rows = []
    for b in bins:
        rows.append([b.lower, b.count, b.mean,
                     "" if b.std is None else b.std, b.min, b.max])
    return rows


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(cell) for cell in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_analyze(args) -> int:
    ran = [rec for p in args.ran for rec in read_trace(p)]
    e2e = [rec for p in args.e2e for rec in read_e2e_trace(p)]
    ground_m, alt_m = args.grid
    report = analysis.coverage_report(
        ran, e2e, rsrq_poor_db=args.rsrq_poor, tp_min_mbps=args.tp_min,
        rtt_max_ms=args.rtt_max, by_voxel=args.by_voxel,
        grid_ground_m=ground_m, grid_alt_m=alt_m)

    doc: dict = {"coverage": report.to_doc()}
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    tables = []  # (suffix, header, rows)
    if ran:
        table = analysis.ecdf([r.serving.rsrq_db for r in ran])
        doc["ecdf_rsrq_db"] = [[x, f] for x, f in table]
        tables.append(("ecdf-rsrq", ["rsrq_db", "cum_frac"],
                       [[x, f] for x, f in table]))
        for metric in ("rsrp", "sinr"):
            bins = analysis.altitude_bins(ran, metric, args.alt_bin)
            doc[f"alt_bins_{metric}"] = [b.to_doc() for b in bins]
            tables.append((f"alt-{metric}",
                           ["alt_lower_m", "count", "mean", "std", "min", "max"],
                           _stats_rows(bins)))
    rtt_medians = [r.rtt.p50_ms for r in e2e if r.rtt.p50_ms is not None]
    if rtt_medians:
        pdf = analysis.histogram_pdf(rtt_medians, args.rtt_bin)
        doc["pdf_rtt_ms"] = [[start, density] for start, density in pdf]
        tables.append(("pdf-rtt", ["bin_start_ms", "density"],
                       [[s, d] for s, d in pdf]))

    report_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    for suffix, header, rows in tables:
        _write_csv(report_path.with_name(f"{report_path.stem}-{suffix}.csv"),
                   header, rows)
    print(json.dumps({"report": str(report_path),
                      "csv_tables": len(tables),
                      "fractions": doc["coverage"]["fractions"]}))
    return EXIT_OK


def cmd_export(args) -> int:
    records = read_trace(args.ran)
    if args.grid is not None:
        source = analysis.grid_aggregate(records, args.grid[0], args.grid[1])
    else:
        source = records
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "geojson":
        doc = export_geojson(source, metric=args.metric)
        out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        count = len(doc["features"])
        what = "features"
    else:
        if args.metric:
            raise UsageError("--metric applies to geojson export only")
        text = export_csv(source)
        out.write_text(text, encoding="utf-8")
        count = len(text.splitlines()) - 1
        what = "rows"
    print(json.dumps({"out": str(out), "count": count, "kind": what}))
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"skylog: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("skylog: interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError, RuntimeError) as exc:
        # config errors, trace decode errors, socket failures, analysis errors
        print(f"skylog: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
