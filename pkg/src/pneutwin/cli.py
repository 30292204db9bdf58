"""Command-line interface.

One verb per host API call plus serving and benchmarking:

  serve-sim   run a simulated device server (optionally with the UI bridge)
  set         set one channel's target pressure
  set-all     set every channel's target in one broadcast
  get         read one channel's pressure and flow
  stream      print live telemetry
  record      record telemetry to CSV (live, or a deterministic local sim)
  run-traj    execute a trajectory file and print the response report
  inject      inject a disturbance flow pulse
  bench       benchmark the tick kernels

Exit codes: 0 ok, 1 device/config error, 2 transport error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import config as config_mod
from .bench import format_report, run_benchmark
from .client import ClientError, ClientSession, DeviceReportedError, PneuClient
from .client import Timeout as ClientTimeout
from .client import TransportClosed
from .config import ConfigError
from .device import DeviceError
from .harness import SimHarness
from .server import DeviceServer
from .trajectory import EnvelopeViolation, Trajectory, run_trajectory

EXIT_OK = 0
EXIT_DEVICE_ERROR = 1
EXIT_TRANSPORT_ERROR = 2


def _add_connection_args(parser):
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9191)


def _add_sim_args(parser):
    parser.add_argument("--channels", type=int, default=None,
                        help="channel count (overrides config)")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scenario", default=None,
                        help="JSON scenario script (disturbance/leak schedule)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pneutwin", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("serve-sim", help="run a simulated device server")
    _add_connection_args(p)
    _add_sim_args(p)
    p.add_argument("--accelerated", action="store_true",
                   help="free-run instead of pacing at the tick rate")
    p.add_argument("--tick-hz", type=int, default=50,
                   help="control tick rate (>= 50)")
    p.add_argument("--decimation", type=int, default=2,
                   help="publish telemetry every N ticks (default 2 = 25 Hz)")
    p.add_argument("--duration", type=float, default=None,
                   help="stop after this much simulated time")
    p.add_argument("--stdio", action="store_true",
                   help="serve the protocol over stdin/stdout instead of TCP")
    p.add_argument("--ui-port", type=int, default=None,
                   help="also serve the WebSocket console bridge on this port")
    p.add_argument("--assets", default=None,
                   help="static console assets directory for the bridge")

    p = sub.add_parser("set", help="set one channel target")
    _add_connection_args(p)
    p.add_argument("channel", type=int)
    p.add_argument("kpa", type=float)

    p = sub.add_parser("set-all", help="set all channel targets")
    _add_connection_args(p)
    p.add_argument("kpa", type=float, nargs="+")

    p = sub.add_parser("get", help="read one channel pressure and flow")
    _add_connection_args(p)
    p.add_argument("channel", type=int)

    p = sub.add_parser("stream", help="print live telemetry")
    _add_connection_args(p)
    p.add_argument("--duration", type=float, default=5.0,
                   help="simulated seconds to stream")

    p = sub.add_parser("record", help="record telemetry to CSV")
    _add_connection_args(p)
    _add_sim_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--sim", action="store_true",
                   help="record a deterministic in-process simulation "
                        "instead of connecting")
    p.add_argument("--traj", default=None,
                   help="apply this trajectory during a --sim recording")

    p = sub.add_parser("run-traj", help="run a trajectory and report metrics")
    _add_connection_args(p)
    _add_sim_args(p)
    p.add_argument("--traj", required=True)
    p.add_argument("--sim", action="store_true",
                   help="run against an in-process simulation")
    p.add_argument("--json", dest="json_out", default=None,
                   help="also write the report as JSON to this file")

    p = sub.add_parser("inject", help="inject a disturbance flow pulse")
    _add_connection_args(p)
    p.add_argument("channel", type=int)
    p.add_argument("flow_lpm", type=float)
    p.add_argument("duration_s", type=float)

    p = sub.add_parser("bench", help="benchmark the tick kernels")
    p.add_argument("--channels", type=int, default=10)
    p.add_argument("--ticks", type=int, default=5000)

    return parser


def _build_sim_device(args, dt=0.02):
    device = config_mod.build_device(args.config, channel_count=args.channels,
                                     seed=args.seed, dt=dt)
    if args.scenario:
        device.load_scenario(config_mod.load_scenario(args.scenario))
    return device


def _serve_sim(args) -> int:
    if args.tick_hz < 50:
        raise ValueError("tick rate must be at least 50 Hz")
    device = _build_sim_device(args, dt=1.0 / args.tick_hz)
    max_ticks = (round(args.duration / device.dt)
                 if args.duration is not None else None)
    if args.stdio:
        from .server import serve_stdio

        print(f"serving {device.channel_count}-channel simulated device "
              f"over stdio", file=sys.stderr, flush=True)
        serve_stdio(device, decimation=args.decimation,
                    accelerated=args.accelerated, max_ticks=max_ticks)
        return EXIT_OK
    server = DeviceServer(device, host=args.host, port=args.port,
                          decimation=args.decimation,
                          accelerated=args.accelerated, max_ticks=max_ticks)
    port = server.start()
    print(f"serving {device.channel_count}-channel simulated device "
          f"on {args.host}:{port}"
          + (" (accelerated)" if args.accelerated else " at 50 Hz"),
          flush=True)
    try:
        if args.ui_port is not None:
            from .bridge import serve_ui_bridge

            client = PneuClient(host="127.0.0.1", port=port)
            print(f"console bridge on http://{args.host}:{args.ui_port}/",
                  flush=True)
            serve_ui_bridge(client, args.ui_port, host=args.host,
                            assets_dir=args.assets)
        else:
            server.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def _stream(args) -> int:
    client = PneuClient(host=args.host, port=args.port)
    try:
        sub = client.stream_telemetry()
        first = sub.get(timeout=2.0)
        end_tick = first.tick + round(args.duration / 0.02)
        snapshot = first
        while True:
            cells = " ".join(f"{ch.pressure_kpa:8.2f}/{ch.target_kpa:6.2f}"
                             for ch in snapshot.channels)
            print(f"tick {snapshot.tick:8d} {cells}")
            if snapshot.tick >= end_tick:
                return EXIT_OK
            snapshot = sub.get(timeout=5.0)
    finally:
        client.close()


def _record(args) -> int:
    if args.sim:
        device = _build_sim_device(args)
        harness = SimHarness(device)
        trajectory = Trajectory.load(args.traj) if args.traj else None
        rows = harness.record_csv(args.out, args.duration, trajectory)
    else:
        client = PneuClient(host=args.host, port=args.port)
        try:
            rows = client.record_csv(args.out, args.duration)
        finally:
            client.close()
    print(f"wrote {rows} rows to {args.out}")
    return EXIT_OK


def _run_traj(args) -> int:
    trajectory = Trajectory.load(args.traj)
    if args.sim:
        session = SimHarness(_build_sim_device(args))
        report = run_trajectory(session, trajectory)
    else:
        client = PneuClient(host=args.host, port=args.port)
        try:
            session = ClientSession(client)
            report = run_trajectory(session, trajectory)
            session.close()
        finally:
            client.close()
    for line in report.summary_lines():
        print(line)
    settled = "yes" if report.all_settled else "NO"
    print(f"all settled: {settled}   max overshoot: "
          f"{report.max_overshoot_kpa:.2f} kPa   run oscillation: "
          f"{report.run_oscillation_index:.3f}")
    if args.json_out:
        payload = {
            "steps": [vars(s) | {"settled": s.settled} for s in report.steps],
            "all_settled": report.all_settled,
            "max_overshoot_kpa": report.max_overshoot_kpa,
            "run_oscillation_index": report.run_oscillation_index,
        }
        with open(args.json_out, "w") as fh:
            json.dump(payload, fh, indent=2)
    return EXIT_OK if report.all_settled else EXIT_DEVICE_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "serve-sim":
            return _serve_sim(args)
        if args.verb == "set":
            with PneuClient(host=args.host, port=args.port) as client:
                client.set_pressure(args.channel, args.kpa)
                print("ok")
            return EXIT_OK
        if args.verb == "set-all":
            with PneuClient(host=args.host, port=args.port) as client:
                client.set_all(args.kpa)
                print("ok")
            return EXIT_OK
        if args.verb == "get":
            with PneuClient(host=args.host, port=args.port) as client:
                pressure = client.read_pressure(args.channel)
                flow = client.read_flow(args.channel)
            print(f"channel {args.channel}: {pressure:.2f} kPa, "
                  f"{flow:.3f} L/min")
            return EXIT_OK
        if args.verb == "stream":
            return _stream(args)
        if args.verb == "record":
            return _record(args)
        if args.verb == "run-traj":
            return _run_traj(args)
        if args.verb == "inject":
            with PneuClient(host=args.host, port=args.port) as client:
                client.inject_disturbance(args.channel, args.flow_lpm,
                                          args.duration_s)
                print("ok")
            return EXIT_OK
        if args.verb == "bench":
            print(format_report(run_benchmark(args.channels, args.ticks)))
            return EXIT_OK
        raise AssertionError(f"unhandled verb {args.verb}")
    except (DeviceReportedError, DeviceError, ConfigError, EnvelopeViolation,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEVICE_ERROR
    except (ClientTimeout, TransportClosed, ConnectionError, OSError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT_ERROR
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEVICE_ERROR


if __name__ == "__main__":
    sys.exit(main())
