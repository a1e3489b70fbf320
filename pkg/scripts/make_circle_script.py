#!/usr/bin/env python3
"""Generate a headless script that acquires PSM1 and traces a circle.

The master hand moves on a circle of the given radius in the console
x/y plane; the commanded tip then traces the same circle scaled by the
teleop scale in the camera frame of the assigned ECM.

Usage: python3 scripts/make_circle_script.py --out circle.json [options]
"""

import argparse
import json
import math


def circle_script(duration_s: float, rate_hz: int, radius: float,
                  period_s: float, console: str, psm: str) -> dict:
    events = [
        {"at_ms": 250, "msg": {"type": "routing",
         "cmd": {"op": "acquire_psm", "console": console, "psm": psm}}},
        {"at_ms": 260, "msg": {"type": "engage", "console_id": console,
         "master_side": "left", "psm": psm}},
    ]
    n = int((duration_s - 0.5) * rate_hz)
    prev = (0.0, 0.0)
    for i in range(1, n + 1):
        theta = 2 * math.pi * (i / rate_hz) / period_s
        cur = (radius * (math.cos(theta) - 1.0), radius * math.sin(theta))
        events.append({"at_ms": 300 + i * 1000.0 / rate_hz, "msg": {
            "type": "input", "console_id": console, "master_side": "left",
            "pose_delta": {"translation": [cur[0] - prev[0], cur[1] - prev[1], 0.0]},
        }})
        prev = cur
    return {"duration_s": duration_s, "events": events}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--duration", type=float, default=60.0)
    parser.add_argument("--rate", type=int, default=100, help="input rate in Hz")
    parser.add_argument("--radius", type=float, default=0.02, help="meters")
    parser.add_argument("--period", type=float, default=8.0, help="seconds per lap")
    parser.add_argument("--console", default="console1")
    parser.add_argument("--psm", default="PSM1")
    args = parser.parse_args()
    script = circle_script(args.duration, args.rate, args.radius, args.period,
                           args.console, args.psm)
    with open(args.out, "w") as fh:
        json.dump(script, fh)
    print(f"wrote {len(script['events'])} events to {args.out}")


if __name__ == "__main__":
    main()
