"""Simulation configuration: dataclasses plus JSON loading.

The config file is a single JSON object; `SimConfig.from_dict` documents
the accepted keys through its defaults. See configs/default.json for a
complete example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..clocksync import LinkModel, SimClock
from ..geometry import RigidTransform, UnitQuat, Vec3
from ..kinematics import ArmKind, ArmModel


class ConfigError(ValueError):
    pass


def _pose_from_dict(d) -> RigidTransform:
    if d is None:
        return RigidTransform.identity()
    q = d.get("quat_wxyz", [1.0, 0.0, 0.0, 0.0])
    t = d.get("translation", [0.0, 0.0, 0.0])
    return RigidTransform(UnitQuat.of(*q), Vec3(*t))


def _pose_to_dict(p: RigidTransform) -> dict:
    return {
        "quat_wxyz": [p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z],
        "translation": [p.translation.x, p.translation.y, p.translation.z],
    }


@dataclass(frozen=True)
class ArmConfig:
    kind: ArmKind
    base: RigidTransform
    tool_offset: RigidTransform
    home_joints: tuple

    def model(self) -> ArmModel:
        return ArmModel(kind=self.kind, base=self.base, tool_offset=self.tool_offset)


@dataclass(frozen=True)
class DeviceConfig:
    offset0_ns: int = 0
    drift_ppm: float = 0.0
    noise_sigma_ns: float = 0.0
    link: LinkModel = field(
        default_factory=lambda: LinkModel(10_000, 10_000, jitter_sigma=200.0)
    )

    def clock(self, seed: int) -> SimClock:
        return SimClock(
            offset0=self.offset0_ns, drift_ppm=self.drift_ppm,
            noise_sigma=self.noise_sigma_ns, seed=seed,
        )


@dataclass(frozen=True)
class CameraStreamConfig:
    ecm: str
    device: str
    width: int = 64
    height: int = 48
    bit_depth: int = 8


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    tick_rate_hz: int = 1000
    frame_rate_hz: int = 30
    kinematics_rate_hz: int = 200
    telemetry_rate_hz: int = 10
    snapshot_rate_hz: int = 30
    sync_interval_s: float = 0.1
    alignment_tolerance_ns: int = 16_666_666
    teleop_scale: float = 0.25
    cam_scale: float = 1.0
    max_arms_per_console: int = 2
    latency_budget_ns: int = 8_000_000
    stage_latencies_ns: tuple = (
        ("acquire", 1_500_000),
        ("transfer", 1_000_000),
        ("demosaic", 2_000_000),
        ("rectify", 1_000_000),
        ("render", 1_000_000),
        ("display", 1_000_000),
    )
    arms: dict = field(default_factory=dict)          # arm_id -> ArmConfig
    consoles: tuple = ("console1", "console2")
    psm_to_ecm: dict = field(default_factory=dict)
    console_view: dict = field(default_factory=dict)
    devices: dict = field(default_factory=dict)       # device_id -> DeviceConfig
    cameras: dict = field(default_factory=dict)       # stream_id -> CameraStreamConfig

    def __post_init__(self):
        if self.tick_rate_hz < self.frame_rate_hz:
            raise ConfigError("tick_rate_hz must be >= frame_rate_hz")
        psms = {a for a, c in self.arms.items() if c.kind is ArmKind.PSM}
        ecms = {a for a, c in self.arms.items() if c.kind is ArmKind.ECM}
        for psm, ecm in self.psm_to_ecm.items():
            if psm not in psms or ecm not in ecms:
                raise ConfigError(f"routing references unknown arm: {psm} -> {ecm}")
        if psms - set(self.psm_to_ecm):
            raise ConfigError("every PSM needs an assigned ECM")
        for sid, cam in self.cameras.items():
            if cam.ecm not in ecms:
                raise ConfigError(f"camera {sid} references unknown ECM {cam.ecm}")
            if cam.device not in self.devices:
                raise ConfigError(f"camera {sid} references unknown device {cam.device}")

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        arms = {}
        for arm_id, a in d.get("arms", {}).items():
            kind = ArmKind(a["kind"])
            home = a.get("home_joints")
            if home is None:
                home = [0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0] if kind is ArmKind.PSM \
                    else [0.0, 0.0, 0.1, 0.0]
            arms[arm_id] = ArmConfig(
                kind=kind,
                base=_pose_from_dict(a.get("base")),
                tool_offset=_pose_from_dict(a.get("tool_offset")),
                home_joints=tuple(home),
            )
        devices = {}
        for dev_id, v in d.get("devices", {}).items():
            link = v.get("link", {})
            devices[dev_id] = DeviceConfig(
                offset0_ns=v.get("offset0_ns", 0),
                drift_ppm=v.get("drift_ppm", 0.0),
                noise_sigma_ns=v.get("noise_sigma_ns", 0.0),
                link=LinkModel(
                    delay_m2s=link.get("delay_m2s_ns", 10_000),
                    delay_s2m=link.get("delay_s2m_ns", 10_000),
                    jitter_sigma=link.get("jitter_sigma_ns", 200.0),
                    drop_prob=link.get("drop_prob", 0.0),
                ),
            )
        cameras = {}
        for sid, v in d.get("cameras", {}).items():
            cameras[sid] = CameraStreamConfig(
                ecm=v["ecm"], device=v["device"],
                width=v.get("width", 64), height=v.get("height", 48),
                bit_depth=v.get("bit_depth", 8),
            )
        routing = d.get("routing", {})
        kwargs = {
            k: d[k]
            for k in (
                "seed", "tick_rate_hz", "frame_rate_hz", "kinematics_rate_hz",
                "telemetry_rate_hz", "snapshot_rate_hz", "sync_interval_s",
                "alignment_tolerance_ns", "teleop_scale", "cam_scale",
                "max_arms_per_console", "latency_budget_ns",
            )
            if k in d
        }
        if "stage_latencies_ns" in d:
            kwargs["stage_latencies_ns"] = tuple(
                (name, int(ns)) for name, ns in d["stage_latencies_ns"].items()
            )
        return SimConfig(
            arms=arms,
            devices=devices,
            cameras=cameras,
            consoles=tuple(routing.get("consoles", ("console1", "console2"))),
            psm_to_ecm=dict(routing.get("psm_to_ecm", {})),
            console_view=dict(routing.get("console_view", {})),
            **kwargs,
        )

    @staticmethod
    def load(path) -> "SimConfig":
        with open(path) as fh:
            return SimConfig.from_dict(json.load(fh))


def default_config() -> SimConfig:
    """Two PSMs, two ECMs, two camera streams, three synced devices."""
    return SimConfig.from_dict({
        "arms": {
            "PSM1": {"kind": "PSM", "base": {"translation": [0.15, 0.0, 0.0]}},
            "PSM2": {"kind": "PSM", "base": {"translation": [-0.15, 0.0, 0.0]}},
            "ECM-A": {"kind": "ECM", "base": {"translation": [0.0, 0.15, 0.0]}},
            "ECM-B": {"kind": "ECM", "base": {"translation": [0.0, -0.15, 0.0]}},
        },
        "routing": {
            "psm_to_ecm": {"PSM1": "ECM-A", "PSM2": "ECM-A"},
            "console_view": {"console1": "ECM-A", "console2": "ECM-B"},
            "consoles": ["console1", "console2"],
        },
        "devices": {
            "cam0": {"offset0_ns": 250_000, "drift_ppm": 35.0},
            "cam1": {"offset0_ns": -400_000, "drift_ppm": -20.0},
            "robot": {"offset0_ns": 90_000, "drift_ppm": 12.0},
        },
        "cameras": {
            "cam0": {"ecm": "ECM-A", "device": "cam0"},
            "cam1": {"ecm": "ECM-B", "device": "cam1"},
        },
    })
