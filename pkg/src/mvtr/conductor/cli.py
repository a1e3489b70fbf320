"""Command-line entry point.

Subcommands: sim (live service), headless (scripted run to a recording),
replay, verify, bench-pipeline, sync-report.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time

from ..clocksync import SimClock, SyncedSlave, _mix, run_sync
from ..pipeline import CaptureConfig, align_streams, demosaic_bilinear, synth_capture
from ..recorder import ChannelKind, RecordingReader, decode_kinematics, verify
from .config import SimConfig, default_config
from .server import ConductorServer
from .sim import run_headless


def _load_config(path) -> SimConfig:
    if path is None:
        return default_config()
    return SimConfig.load(path)


def cmd_sim(args) -> int:
    config = _load_config(args.config)
    host, _, port = args.listen.rpartition(":")
    server = ConductorServer(config, host or "127.0.0.1", int(port))

    async def main():
        await server.start()
        print(f"listening on {server.host}:{server.port} "
              f"(TCP length-prefixed JSON and WebSocket)")
        await server._server.serve_forever()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def cmd_headless(args) -> int:
    config = _load_config(args.config)
    with open(args.script) as fh:
        script = json.load(fh)
    started = time.perf_counter()
    report = run_headless(config, script, args.out)
    report["wall_s"] = round(time.perf_counter() - started, 3)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def cmd_replay(args) -> int:
    with RecordingReader(args.recording) as reader:
        for cid in sorted(reader.channels):
            ch = reader.channels[cid]
            print(f"channel {cid}: {ch.name} ({ch.kind.name}, {ch.nominal_rate_hz} Hz)")
        prev_ts = None
        shown = 0
        for _offset, rec, crc_ok in reader.scan():
            if prev_ts is not None and args.speed > 0:
                time.sleep(max(0, rec.master_ts - prev_ts) * 1e-9 / args.speed)
            prev_ts = rec.master_ts
            ch = reader.channels.get(rec.channel_id)
            if ch is not None and ch.kind == ChannelKind.KINEMATICS and shown < args.max_lines:
                arms = decode_kinematics(rec.payload)
                tips = " ".join(
                    f"arm{a.arm_id}=({a.position[0]:.4f},{a.position[1]:.4f},{a.position[2]:.4f})"
                    for a in arms)
                print(f"t={rec.master_ts} {tips}" + ("" if crc_ok else " [CRC FAIL]"))
                shown += 1
    return 0


def cmd_verify(args) -> int:
    report = verify(args.recording)
    print(json.dumps({
        "record_counts": {str(k): v for k, v in sorted(report.record_counts.items())},
        "crc_failures": list(report.crc_failures),
        "rate_estimates_hz": {str(k): round(v, 3)
                              for k, v in sorted(report.rate_estimates.items())},
        "max_stereo_skew_ns": report.max_stereo_skew_ns,
        "truncated": report.truncated,
    }, indent=2))
    return 0 if not report.crc_failures and not report.truncated else 1


def cmd_bench_pipeline(args) -> int:
    cfgs = [CaptureConfig(width=args.width, height=args.height, stream_id=sid)
            for sid in ("cam0", "cam1")]
    clock = SimClock()
    frame_ns = round(1e9 / 30)
    streams = [[], []]
    started = time.perf_counter()
    for i in range(args.frames):
        for si, cfg in enumerate(cfgs):
            bayer = synth_capture(cfg, clock, i * frame_ns, i)
            rgb = demosaic_bilinear(bayer)
            streams[si].append((rgb.seq, i * frame_ns + si))
    tuples, _ = align_streams(streams, frame_ns // 2)
    elapsed = time.perf_counter() - started
    fps = args.frames / elapsed
    print(json.dumps({
        "width": args.width, "height": args.height, "frames": args.frames,
        "stereo_pairs_aligned": len(tuples),
        "elapsed_s": round(elapsed, 3), "fps": round(fps, 1),
    }, indent=2))
    return 0


def cmd_sync_report(args) -> int:
    config = _load_config(args.config)
    master = SimClock()
    slaves = []
    for i, dev_id in enumerate(sorted(config.devices)):
        dev = config.devices[dev_id]
        slaves.append(SyncedSlave(
            slave_id=dev_id, clock=dev.clock(seed=_mix(config.seed, i)), link=dev.link))
    report = run_sync(master, slaves, duration_s=args.duration,
                      sync_interval_s=config.sync_interval_s, seed=config.seed)
    with open(args.out, "w") as fh:
        fh.write("true_time_ns,slave_id,residual_ns\n")
        for p in report.trace:
            fh.write(f"{p.true_time},{p.slave_id},{p.residual_ns}\n")
    for slave_id in sorted(report.final_p99):
        status = report.statuses[slave_id]
        print(f"{slave_id}: {status}, final p99 |residual| = {report.final_p99[slave_id]} ns")
    print(f"wrote {len(report.trace)} residual points to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvtr",
        description="deterministic multi-viewpoint telerobotics simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run the live service")
    p.add_argument("--config", default=None, help="JSON config file (default: built-in)")
    p.add_argument("--listen", default="127.0.0.1:8571", help="host:port to bind")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("headless", help="scripted run writing a recording")
    p.add_argument("--config", default=None)
    p.add_argument("--script", required=True, help="JSON script file")
    p.add_argument("--out", required=True, help="output recording path")
    p.set_defaults(func=cmd_headless)

    p = sub.add_parser("replay", help="print a recording's kinematics stream")
    p.add_argument("recording")
    p.add_argument("--speed", type=float, default=0.0,
                   help="pace output at this multiple of real time (0 = no pacing)")
    p.add_argument("--max-lines", type=int, default=50)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("verify", help="check CRCs, rates, and stereo skew")
    p.add_argument("recording")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench-pipeline", help="synth->demosaic->align throughput")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--frames", type=int, default=90)
    p.set_defaults(func=cmd_bench_pipeline)

    p = sub.add_parser("sync-report", help="run clock sync, export residual CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--duration", type=float, default=30.0)
    p.set_defaults(func=cmd_sync_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
