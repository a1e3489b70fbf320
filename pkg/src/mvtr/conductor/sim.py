"""Deterministic fixed-step simulation binding all core modules.

One logical owner advances ticks; messages are applied at tick
boundaries in arrival order, so the full state at tick k is a pure
function of (config, seed, ordered inputs up to k).
"""

from __future__ import annotations

import hashlib
import json
import random
import struct

from ..clocksync import (
    SimClock, SyncedSlave, UnsynchronizedError, _mix, residual_vs_master,
    to_master_time,
)
from ..geometry import RigidTransform, UnitQuat, Vec3
from ..kinematics import diff_ik
from ..pipeline import StageLatency, align_streams, latency_report
from ..recorder import (
    ArmSample, ChannelDescriptor, ChannelKind, Record, RecordingWriter,
    encode_kinematics,
)
from ..teleop import (
    AcquirePsm, AssignPsm, MasterState, ReleasePsm, RoutingTable, SelectView,
    TeleopError, TeleopSystem, disengage, make_world,
)
from .config import SimConfig, _pose_to_dict

PROTOCOL_VERSION = 1

KINEMATICS_CHANNEL_ID = 1
FIRST_CAMERA_CHANNEL_ID = 10

# frame metadata payload: seq u32, device-local exposure timestamp u64
_FRAME_PAYLOAD = struct.Struct("<IQ")


def _ack(of: str) -> dict:
    return {"type": "ack", "of": of}


def _error(code: str, detail: str = "") -> dict:
    return {"type": "error", "code": code, "detail": detail}


def _quat_from_wire(q) -> UnitQuat:
    return UnitQuat.of(float(q[0]), float(q[1]), float(q[2]), float(q[3]))


class Simulation:
    """TickState plus the message handlers that mutate it."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.tick = 0
        self.tick_ns = round(1e9 / config.tick_rate_hz)
        self.true_time = 0
        self.sync_interval_ticks = max(
            1, round(config.sync_interval_s * config.tick_rate_hz))
        self.frame_interval_ticks = config.tick_rate_hz // config.frame_rate_hz
        self.kin_interval_ticks = max(
            1, config.tick_rate_hz // config.kinematics_rate_hz)

        self.models = {a: c.model() for a, c in config.arms.items()}
        self.arm_index = {a: i for i, a in enumerate(sorted(config.arms))}
        joints = {a: c.home_joints for a, c in config.arms.items()}
        self.world = make_world(self.models, joints)

        psms = frozenset(a for a, c in config.arms.items() if c.kind.value == "PSM")
        ecms = frozenset(a for a, c in config.arms.items() if c.kind.value == "ECM")
        table = RoutingTable(
            psms=psms, ecms=ecms, consoles=frozenset(config.consoles),
            psm_to_ecm=dict(config.psm_to_ecm),
            console_view=dict(config.console_view),
            max_arms_per_console=config.max_arms_per_console,
        )
        self.teleop = TeleopSystem(table, cam_scale=config.cam_scale)
        self.masters = {}   # (console, side) -> MasterState
        self._dirty = False

        self.master_clock = SimClock()
        self.slaves = {}
        self._sync_rngs = {}
        for i, dev_id in enumerate(sorted(config.devices)):
            dev = config.devices[dev_id]
            self.slaves[dev_id] = SyncedSlave(
                slave_id=dev_id, clock=dev.clock(seed=_mix(config.seed, i)),
                link=dev.link,
            )
            self._sync_rngs[dev_id] = random.Random(_mix(config.seed, 1000 + i))

        self.camera_channel = {}
        for i, sid in enumerate(sorted(config.cameras)):
            self.camera_channel[sid] = FIRST_CAMERA_CHANNEL_ID + i
        self.frame_seq = {sid: 0 for sid in config.cameras}
        self.frame_buffers = {sid: [] for sid in config.cameras}

        self.writer = None
        self.recording_path = None
        self.frames_emitted = 0
        self.errors = []

    # ---- message handling ------------------------------------------------

    def handle_message(self, msg) -> dict:
        """Apply one wire message; returns the reply. State is unchanged
        on any error reply."""
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return _error("bad_message", "expected a JSON object with a type field")
        mtype = msg["type"]
        handler = getattr(self, f"_on_{mtype}", None)
        if handler is None:
            return _error("unknown_type", mtype)
        try:
            return handler(msg)
        except (TeleopError,) as e:
            return _error(e.code, str(e))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            return _error("bad_message", f"{type(e).__name__}: {e}")

    def _on_hello(self, msg) -> dict:
        version = msg.get("protocol_version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            return _error("version_mismatch",
                          f"server speaks protocol {PROTOCOL_VERSION}, client sent {version}")
        return {"type": "welcome", "protocol_version": PROTOCOL_VERSION}

    def _on_input(self, msg) -> dict:
        console = msg["console_id"]
        side = msg["master_side"]
        if console not in self.config.consoles or side not in ("left", "right"):
            return _error("unknown_id", f"{console}/{side}")
        prev = self.masters.get((console, side))
        pose = prev.pose if prev else RigidTransform.identity()
        delta = msg.get("pose_delta", {})
        t = delta.get("translation")
        if t is not None:
            pose = RigidTransform(
                pose.rotation, pose.translation + Vec3(float(t[0]), float(t[1]), float(t[2])))
        q = delta.get("rotation_wxyz")
        if q is not None:
            pose = RigidTransform(_quat_from_wire(q) * pose.rotation, pose.translation)
        clutch = bool(msg.get("clutch", prev.clutch if prev else False))
        grip = float(msg.get("grip", prev.grip if prev else 0.0))
        self.masters[(console, side)] = MasterState(pose=pose, clutch=clutch, grip=grip)
        self._dirty = True
        return _ack("input")

    def _on_engage(self, msg) -> dict:
        console = msg["console_id"]
        side = msg["master_side"]
        psm = msg["psm"]
        if not msg.get("on", True):
            pair = self.teleop.pairs.get(psm)
            if pair is not None and pair.console_id == console:
                disengage(pair)
            self._dirty = True
            return _ack("engage")
        master = self.masters.get((console, side))
        if master is None:
            master = MasterState(pose=RigidTransform.identity())
            self.masters[(console, side)] = master
        self.teleop.engage_pair(
            console, side, psm, master, self.world,
            scale=float(msg.get("scale", self.config.teleop_scale)),
        )
        self._dirty = True
        return _ack("engage")

    def _on_routing(self, msg) -> dict:
        cmd = msg["cmd"]
        op = cmd["op"]
        if op == "assign_psm":
            command = AssignPsm(cmd["psm"], cmd["ecm"])
        elif op == "select_view":
            command = SelectView(cmd["console"], cmd["ecm"])
        elif op == "acquire_psm":
            command = AcquirePsm(cmd["console"], cmd["psm"])
        elif op == "release_psm":
            command = ReleasePsm(cmd["console"], cmd["psm"])
        else:
            return _error("unknown_command", op)
        self.teleop.apply_routing(command)
        self._dirty = True
        return _ack("routing")

    def _on_camera_mode(self, msg) -> dict:
        console = msg["console_id"]
        on = bool(msg["on"])
        side = msg.get("master_side", "left")
        master = self.masters.get((console, side))
        if master is None:
            master = MasterState(pose=RigidTransform.identity())
            self.masters[(console, side)] = master
        self.teleop.set_camera_mode(console, on, master, self.world)
        self._dirty = True
        return _ack("camera_mode")

    def _on_record(self, msg) -> dict:
        action = msg["action"]
        if action == "start":
            if self.writer is not None:
                return _error("recording", f"already recording to {self.recording_path}")
            self.start_recording(msg["path"])
            return _ack("record")
        if action == "stop":
            self.stop_recording()
            return _ack("record")
        return _error("bad_message", f"unknown record action {action}")

    def _on_snapshot_request(self, msg) -> dict:
        return self.snapshot()

    def release_client(self, console: str) -> list:
        """Disconnect semantics: drop ownership; the arms freeze at their
        last commanded pose on the next tick."""
        dropped = self.teleop.release_console(console)
        self._dirty = True
        return dropped

    # ---- recording ---------------------------------------------------------

    def channels(self) -> list:
        chans = [ChannelDescriptor(
            id=KINEMATICS_CHANNEL_ID, kind=ChannelKind.KINEMATICS,
            name="kinematics", nominal_rate_hz=float(self.config.kinematics_rate_hz),
        )]
        for sid in sorted(self.camera_channel):
            chans.append(ChannelDescriptor(
                id=self.camera_channel[sid], kind=ChannelKind.STEREO_FRAME,
                name=sid, nominal_rate_hz=float(self.config.frame_rate_hz),
            ))
        return chans

    def start_recording(self, path) -> None:
        self.writer = RecordingWriter(path, self.channels())
        self.recording_path = path

    def stop_recording(self) -> None:
        if self.writer is not None:
            self.writer.finalize()
            self.writer = None
            self.recording_path = None

    # ---- tick loop -----------------------------------------------------------

    def step(self, inputs=()) -> list:
        """Apply one tick's messages, then advance one tick. Returns the
        reply for each input, in order. The tick always completes."""
        replies = [self.handle_message(m) for m in inputs]
        self.tick += 1
        self.true_time = self.tick * self.tick_ns

        if self.tick % self.sync_interval_ticks == 0:
            dt = self.sync_interval_ticks * self.tick_ns * 1e-9
            for dev_id in sorted(self.slaves):
                self.slaves[dev_id].handle_exchange(
                    self.master_clock, self.true_time, self._sync_rngs[dev_id], dt)

        if self._dirty:
            self._resolve()
            self._dirty = False

        if self.writer is not None and self.tick % self.kin_interval_ticks == 0:
            self._record_kinematics()

        if self.config.cameras and self.tick % self.frame_interval_ticks == 0:
            self._emit_frames()
        return replies

    def _resolve(self) -> None:
        commands = self.teleop.resolve(self.masters, self.world, solve_joints=True)
        for arm_id, cmd in commands.arms.items():
            if cmd.frozen:
                if cmd.error:
                    self.errors.append((self.tick, arm_id, cmd.error))
                continue
            state = self.world[arm_id]
            state.pose = cmd.pose
            state.joints = cmd.joints

    def _robot_master_ts(self):
        robot = self.slaves.get("robot")
        if robot is None or not robot.synchronized:
            return None
        return to_master_time(robot, robot.clock.local_time(self.true_time))

    def _record_kinematics(self) -> None:
        ts = self._robot_master_ts()
        if ts is None:
            return
        samples = []
        for arm_id in sorted(self.world):
            state = self.world[arm_id]
            q = state.pose.rotation
            p = state.pose.translation
            samples.append(ArmSample(
                arm_id=self.arm_index[arm_id],
                joints=tuple(state.joints.values),
                quat_wxyz=(q.w, q.x, q.y, q.z),
                position=(p.x, p.y, p.z),
            ))
        self.writer.append(Record(
            channel_id=KINEMATICS_CHANNEL_ID, master_ts=ts,
            payload=encode_kinematics(samples),
        ))

    def _emit_frames(self) -> None:
        for sid in sorted(self.config.cameras):
            cam = self.config.cameras[sid]
            slave = self.slaves[cam.device]
            seq = self.frame_seq[sid]
            self.frame_seq[sid] = seq + 1
            exposure_ts = slave.clock.local_time(self.true_time)
            if not slave.synchronized:
                continue
            master_ts = to_master_time(slave, exposure_ts)
            buf = self.frame_buffers[sid]
            buf.append((seq, master_ts))
            if len(buf) > 4096:
                del buf[:2048]
            self.frames_emitted += 1
            if self.writer is not None:
                self.writer.append(Record(
                    channel_id=self.camera_channel[sid], master_ts=master_ts,
                    payload=_FRAME_PAYLOAD.pack(seq, exposure_ts),
                ))

    # ---- published views ---------------------------------------------------

    def snapshot(self) -> dict:
        arms = {}
        for arm_id in sorted(self.world):
            state = self.world[arm_id]
            arms[arm_id] = {
                "kind": state.model.kind.value,
                "pose": _pose_to_dict(state.pose),
                "joints": list(state.joints.values),
            }
        engagement = {}
        for psm, pair in sorted(self.teleop.pairs.items()):
            engagement[psm] = {
                "console": pair.console_id, "side": pair.side,
                "engaged": pair.engaged, "scale": pair.scale,
            }
        table = self.teleop.table
        return {
            "type": "snapshot",
            "protocol_version": PROTOCOL_VERSION,
            "tick": self.tick,
            "true_time_ns": self.true_time,
            "arms": arms,
            "routing": {
                "psm_to_ecm": dict(sorted(table.psm_to_ecm.items())),
                "console_view": dict(sorted(table.console_view.items())),
                "ownership": dict(sorted(table.ownership.items())),
            },
            "engagement": engagement,
            "cameras": {sid: self.config.cameras[sid].ecm
                        for sid in sorted(self.config.cameras)},
        }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(self.snapshot(), sort_keys=True).encode()

    def telemetry(self) -> dict:
        residuals = {}
        for dev_id, slave in sorted(self.slaves.items()):
            if slave.synchronized:
                residuals[dev_id] = residual_vs_master(
                    self.master_clock, slave.clock, self.true_time)
            else:
                residuals[dev_id] = None
        report = latency_report(
            StageLatency(self.config.stage_latencies_ns), self.config.latency_budget_ns)
        elapsed_s = self.true_time * 1e-9
        n_cams = max(1, len(self.config.cameras))
        fps = self.frames_emitted / n_cams / elapsed_s if elapsed_s > 0 else 0.0
        return {
            "type": "telemetry",
            "residuals_ns": residuals,
            "photon_to_glass_ns": report.photon_to_glass_ns,
            "within_budget": report.within_budget,
            "fps": fps,
            "recording_status": "recording" if self.writer is not None else "idle",
        }

    def alignment_stats(self) -> dict:
        streams = [self.frame_buffers[sid] for sid in sorted(self.frame_buffers)]
        streams = [s for s in streams if s]
        if len(streams) < 2:
            return {"tuples": 0, "max_spread_ns": 0}
        tuples, dropped = align_streams(streams, self.config.alignment_tolerance_ns)
        return {
            "tuples": len(tuples),
            "max_spread_ns": max((t.spread for t in tuples), default=0),
            "dropped": dropped,
        }


# ---- headless runner ----------------------------------------------------------


class ScriptError(ValueError):
    pass


def load_script(obj) -> tuple:
    """Script: {"duration_s": float, "events": [{"at_ms": float, "msg": {...}}]}.

    Returns (duration_s, events sorted by time as (at_ms, msg))."""
    duration_s = float(obj.get("duration_s", 1.0))
    events = []
    for e in obj.get("events", []):
        if "at_ms" not in e:
            raise ScriptError(f"event missing at_ms: {e}")
        at_ms = float(e["at_ms"])
        if at_ms < 0 or at_ms > duration_s * 1000.0:
            raise ScriptError(f"event at {at_ms} ms outside duration {duration_s} s")
        events.append((at_ms, e["msg"]))
    events.sort(key=lambda pair: pair[0])
    return duration_s, events


def _validate_script_ids(config: SimConfig, events) -> None:
    """Abort before start when a script references an unknown id."""
    arm_ids = set(config.arms)
    consoles = set(config.consoles)
    for at_ms, msg in events:
        if not isinstance(msg, dict):
            raise ScriptError(f"event at {at_ms} ms is not an object")
        for key in ("psm", "ecm"):
            for holder in (msg, msg.get("cmd", {})):
                ref = holder.get(key)
                if ref is not None and ref not in arm_ids:
                    raise ScriptError(f"unknown arm id {ref!r} at {at_ms} ms")
        for key in ("console_id",):
            ref = msg.get(key)
            if ref is not None and ref not in consoles:
                raise ScriptError(f"unknown console {ref!r} at {at_ms} ms")
        ref = msg.get("cmd", {}).get("console")
        if ref is not None and ref not in consoles:
            raise ScriptError(f"unknown console {ref!r} at {at_ms} ms")


def run_headless(config: SimConfig, script: dict, out_path=None) -> dict:
    """Scripted run; deterministic: identical (config, script) inputs give
    a byte-identical recording. Returns the exit report."""
    duration_s, events = load_script(script)
    _validate_script_ids(config, events)
    sim = Simulation(config)
    if out_path is not None:
        sim.start_recording(out_path)
    total_ticks = round(duration_s * config.tick_rate_hz)
    # map each event to the first tick whose boundary is >= its time
    per_tick = {}
    for at_ms, msg in events:
        tick = min(total_ticks - 1, int(at_ms * config.tick_rate_hz / 1000.0))
        per_tick.setdefault(tick, []).append(msg)
    error_replies = 0
    for k in range(total_ticks):
        replies = sim.step(per_tick.get(k, ()))
        for r in replies:
            if r.get("type") == "error":
                error_replies += 1
    record_counts = {}
    if sim.writer is not None:
        record_counts = {cid: len(v) for cid, v in sim.writer._index.items()}
        sim.stop_recording()
    report = {
        "ticks": sim.tick,
        "duration_s": duration_s,
        "frames_emitted": sim.frames_emitted,
        "record_counts": record_counts,
        "error_replies": error_replies,
        "arm_errors": len(sim.errors),
        "alignment": sim.alignment_stats(),
    }
    if out_path is not None:
        with open(out_path, "rb") as fh:
            report["sha256"] = hashlib.sha256(fh.read()).hexdigest()
    return report
