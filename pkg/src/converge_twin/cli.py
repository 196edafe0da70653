"""Operator command line: validate scenarios, run sessions locally, compare
exported datasets, and serve the REST interface.

Exit codes: 0 success, 1 domain error (invalid scenario, simulation or
comparison failure), 2 I/O or usage error. Every flag can also be supplied
through the environment with a ``CONVERGE_`` prefix, e.g. ``CONVERGE_SEED=7``.
"""
from __future__ import annotations

import argparse
import os
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from .errors import TwinError
from .netsim import run_scenario
from .scenario import load_scenario
from .trace import export_bytes, parse_export

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


def _env(name: str, default=None):
    return os.environ.get(f"CONVERGE_{name.upper()}", default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="converge-twin",
        description="digital twin for vision-aided radio experiments",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check a scenario file and exit")
    p.add_argument("--scenario", default=_env("scenario"), required=_env("scenario") is None)

    p = sub.add_parser("run", help="run a scenario in-process and export the dataset")
    p.add_argument("--scenario", default=_env("scenario"), required=_env("scenario") is None)
    p.add_argument("--policy", choices=("reactive", "proactive"),
                   default=_env("policy", "reactive"))
    p.add_argument("--seed", type=int, default=_env("seed"))
    p.add_argument("--out", default=_env("out"))

    p = sub.add_parser("compare", help="print metric deltas between two exports")
    p.add_argument("dataset_a")
    p.add_argument("dataset_b")

    p = sub.add_parser("serve", help="start the REST service")
    p.add_argument("--listen", default=_env("listen", "127.0.0.1:8000"),
                   metavar="HOST:PORT")
    p.add_argument("--policy-file", default=_env("policy_file"))
    p.add_argument("--store", default=_env("store", "./twin-data"),
                   help="trace repository directory")
    p.add_argument("--ui-dir", default=_env("ui_dir"),
                   help="static dashboard bundle to serve under /ui/")
    return parser


# -- validate -----------------------------------------------------------------

def cmd_validate(args) -> int:
    path = Path(args.scenario)
    try:
        scenario = load_scenario(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    except TwinError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"ok: {scenario.name} ({len(scenario.scene.devices)} devices, "
          f"{len(scenario.scene.obstacles)} obstacles, "
          f"{len(scenario.panels)} panels)")
    return EXIT_OK


# -- run ----------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        scenario = load_scenario(Path(args.scenario))
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_IO
    except TwinError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    config = scenario.sim
    if args.seed is not None:
        config = replace(config, rng_seed=int(args.seed))
    try:
        records, summary = run_scenario(scenario, args.policy.upper(), config)
    except TwinError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if args.out:
        try:
            Path(args.out).write_bytes(export_bytes(records))
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"policy           {summary['policy']}")
    print(f"ticks            {summary['ticks']}")
    print(f"outage_s         {summary['outage_s']:.3f}")
    print(f"mean_snr_db      {summary['mean_snr_db']:.2f}")
    print(f"mean_throughput  {summary['mean_throughput_bps'] / 1e6:.1f} Mbit/s")
    print(f"switch_count     {summary['switch_count']}")
    if summary["switch_latencies_s"]:
        lat = ", ".join(f"{v * 1e3:.0f} ms" for v in summary["switch_latencies_s"])
        print(f"switch_latency   {lat}")
    if "switch_lead_s" in summary:
        print(f"switch_lead      {summary['switch_lead_s'] * 1e3:.0f} ms")
    if args.out:
        print(f"dataset          {args.out}")
    return EXIT_OK


# -- compare ------------------------------------------------------------------

def _dataset_metrics(records) -> dict:
    radio = [r for r in records if r.kind == "RADIO"]
    if not radio:
        return {"outage_s": 0.0, "mean_throughput_bps": 0.0, "switch_count": 0}
    times = sorted(r.timestamp_s for r in radio)
    diffs = [b - a for a, b in zip(times, times[1:]) if b > a]
    tick_s = statistics.median(diffs) if diffs else 0.0
    outage_ticks = sum(1 for r in radio if r.payload.get("throughput_bps", 0) <= 0)
    switches = sum(
        1
        for r in records if r.kind == "EVENT"
        for e in r.payload.get("events", [])
        if e.get("event") == "switch_complete"
    )
    return {
        "outage_s": outage_ticks * tick_s,
        "mean_throughput_bps": statistics.fmean(
            r.payload.get("throughput_bps", 0.0) for r in radio),
        "switch_count": switches,
    }


def cmd_compare(args) -> int:
    headers, metrics = [], []
    for path in (args.dataset_a, args.dataset_b):
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_IO
        try:
            header, records = parse_export(data)
        except TwinError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
        headers.append(header)
        metrics.append(_dataset_metrics(records))
    if headers[0].get("schema_version") != headers[1].get("schema_version"):
        print(
            f"error: schema_version mismatch: "
            f"{headers[0].get('schema_version')} vs {headers[1].get('schema_version')}",
            file=sys.stderr,
        )
        return EXIT_DOMAIN
    a, b = metrics
    print(f"{'metric':<22}{'a':>14}{'b':>14}{'delta (b-a)':>16}")
    rows = [
        ("outage_s", a["outage_s"], b["outage_s"], "{:.3f}"),
        ("mean_throughput_mbps", a["mean_throughput_bps"] / 1e6,
         b["mean_throughput_bps"] / 1e6, "{:.1f}"),
        ("switch_count", a["switch_count"], b["switch_count"], "{:d}"),
    ]
    for name, va, vb, fmt in rows:
        print(f"{name:<22}{fmt.format(va):>14}{fmt.format(vb):>14}"
              f"{fmt.format(vb - va):>16}")
    return EXIT_OK


# -- serve --------------------------------------------------------------------

def cmd_serve(args) -> int:
    import signal
    import socket

    import uvicorn

    from .core.auth import PolicyStore
    from .core.service import create_app
    from .core.sessions import SessionManager
    from .core.storage import TraceStore

    try:
        host, port_s = args.listen.rsplit(":", 1)
        port = int(port_s)
    except ValueError:
        print(f"error: --listen must be HOST:PORT, got {args.listen!r}",
              file=sys.stderr)
        return EXIT_IO
    # fail fast with a readable reason instead of a server stack trace
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        print(f"error: cannot bind {args.listen}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    finally:
        probe.close()

    if args.policy_file:
        try:
            policies = PolicyStore.from_file(args.policy_file)
        except OSError as exc:
            print(f"error: cannot read {args.policy_file}: {exc}", file=sys.stderr)
            return EXIT_IO
        except TwinError as exc:
            print(f"invalid policy file: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
    else:
        policies = PolicyStore([])  # default deny; only /v1/healthz answers

    store = TraceStore(args.store)
    manager = SessionManager(store)
    app = create_app(manager, policies, ui_dir=args.ui_dir)

    import contextlib

    class _Server(uvicorn.Server):
        # stock uvicorn re-raises a captured SIGTERM after shutdown, which
        # would kill the process before sessions are aborted; just exit
        @contextlib.contextmanager
        def capture_signals(self):
            original = {sig: signal.signal(sig, self.handle_exit)
                        for sig in (signal.SIGINT, signal.SIGTERM)}
            try:
                yield
            finally:
                for sig, handler in original.items():
                    signal.signal(sig, handler)

    server = _Server(uvicorn.Config(app, host=host, port=port, log_level="info"))
    try:
        server.run()
    finally:
        # abort any RUNNING session so state lands in ABORTED, records durable
        manager.shutdown()
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "validate": cmd_validate,
        "run": cmd_run,
        "compare": cmd_compare,
        "serve": cmd_serve,
    }[args.subcommand]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
