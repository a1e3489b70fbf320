"""Multi-console teleoperation state machine.

Instruments are driven in the reference frame of their assigned camera
arm: master-hand motion measured in console display axes is replayed,
scaled, along the camera axes of that arm, with a fixed orientation
offset captured at engage time so commanded motion starts jump-free.

Single-writer discipline: all mutation happens on one logical control
tick sequence (the conductor's). Snapshots of the routing table are
immutable values and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .geometry import RigidTransform, UnitQuat, Vec3, compose, invert
from .kinematics import ArmModel, JointVector, diff_ik, fk

DEFAULT_TELEOP_SCALE = 0.25
DEFAULT_CAMERA_SCALE = 1.0
MAX_GRIP_RAD = 1.2


class TeleopError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(detail or code)
        self.code = code


class RoutingError(TeleopError):
    pass


# routing commands
@dataclass(frozen=True)
class AssignPsm:
    psm: str
    ecm: str


@dataclass(frozen=True)
class SelectView:
    console: str
    ecm: str


@dataclass(frozen=True)
class AcquirePsm:
    console: str
    psm: str


@dataclass(frozen=True)
class ReleasePsm:
    console: str
    psm: str


@dataclass(frozen=True)
class RoutingTable:
    psms: frozenset
    ecms: frozenset
    consoles: frozenset
    psm_to_ecm: dict
    console_view: dict = field(default_factory=dict)
    ownership: dict = field(default_factory=dict)  # psm -> console
    max_arms_per_console: int = 2

    def __post_init__(self):
        missing = self.psms - set(self.psm_to_ecm)
        if missing:
            raise RoutingError("unknown_id", f"PSMs without an assigned ECM: {sorted(missing)}")

    def owned_count(self, console: str) -> int:
        return sum(1 for c in self.ownership.values() if c == console)

    def owner_of(self, psm: str):
        return self.ownership.get(psm)


def update_routing(table: RoutingTable, cmd) -> RoutingTable:
    """Apply one routing command, returning the new table.

    Raises RoutingError with codes "unknown_id", "owned", "capacity".
    Engagements affected by a reassignment/release are dropped by the
    caller (see TeleopSystem.apply_routing).
    """
    if isinstance(cmd, AssignPsm):
        if cmd.psm not in table.psms or cmd.ecm not in table.ecms:
            raise RoutingError("unknown_id", f"{cmd.psm}/{cmd.ecm}")
        return replace(table, psm_to_ecm={**table.psm_to_ecm, cmd.psm: cmd.ecm})
    if isinstance(cmd, SelectView):
        if cmd.console not in table.consoles or cmd.ecm not in table.ecms:
            raise RoutingError("unknown_id", f"{cmd.console}/{cmd.ecm}")
        return replace(table, console_view={**table.console_view, cmd.console: cmd.ecm})
    if isinstance(cmd, AcquirePsm):
        if cmd.console not in table.consoles or cmd.psm not in table.psms:
            raise RoutingError("unknown_id", f"{cmd.console}/{cmd.psm}")
        owner = table.owner_of(cmd.psm)
        if owner is not None and owner != cmd.console:
            raise RoutingError("owned", f"{cmd.psm} owned by {owner}")
        if owner is None and table.owned_count(cmd.console) >= table.max_arms_per_console:
            raise RoutingError(
                "capacity", f"{cmd.console} already owns {table.owned_count(cmd.console)} arms"
            )
        return replace(table, ownership={**table.ownership, cmd.psm: cmd.console})
    if isinstance(cmd, ReleasePsm):
        if cmd.console not in table.consoles or cmd.psm not in table.psms:
            raise RoutingError("unknown_id", f"{cmd.console}/{cmd.psm}")
        if table.owner_of(cmd.psm) != cmd.console:
            raise RoutingError("owned", f"{cmd.psm} not owned by {cmd.console}")
        ownership = dict(table.ownership)
        del ownership[cmd.psm]
        return replace(table, ownership=ownership)
    raise RoutingError("unknown_command", repr(cmd))


@dataclass(frozen=True)
class MasterState:
    pose: RigidTransform
    clutch: bool = False
    grip: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.grip <= MAX_GRIP_RAD:
            raise ValueError(f"grip {self.grip} outside [0, {MAX_GRIP_RAD}]")


@dataclass
class TeleopPair:
    console_id: str
    side: str  # "left" | "right"
    psm_id: str
    scale: float = DEFAULT_TELEOP_SCALE
    engaged: bool = False
    engage_master_pose: RigidTransform = None
    engage_tip_pose_cam: RigidTransform = None
    orientation_offset: UnitQuat = None
    last_commanded: RigidTransform = None

    def __post_init__(self):
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must lie in (0, 1]")


def engage(pair: TeleopPair, master: MasterState, tip_pose_world: RigidTransform,
           camera_pose_world: RigidTransform) -> None:
    """Record engage anchors so a zero-delta step commands the current pose."""
    if master.clutch:
        raise TeleopError("clutched", "cannot engage while clutch is pressed")
    tip_in_cam = compose(invert(camera_pose_world), tip_pose_world)
    pair.engage_master_pose = master.pose
    pair.engage_tip_pose_cam = tip_in_cam
    pair.orientation_offset = tip_in_cam.rotation * master.pose.rotation.conjugate()
    pair.last_commanded = tip_pose_world
    pair.engaged = True


def disengage(pair: TeleopPair) -> None:
    pair.engaged = False
    pair.engage_master_pose = None
    pair.engage_tip_pose_cam = None
    pair.orientation_offset = None


def teleop_step(pair: TeleopPair, master: MasterState,
                camera_pose_world: RigidTransform) -> RigidTransform:
    """Commanded world tip pose for one tick of an engaged pair.

    While clutched, holds the last commanded pose and re-anchors so that
    releasing the clutch causes no jump.
    """
    if not pair.engaged:
        raise TeleopError("not_engaged", pair.psm_id)
    if master.clutch:
        pair.engage_master_pose = master.pose
        pair.engage_tip_pose_cam = compose(invert(camera_pose_world), pair.last_commanded)
        pair.orientation_offset = (
            pair.engage_tip_pose_cam.rotation * master.pose.rotation.conjugate()
        )
        return pair.last_commanded
    delta = master.pose.translation - pair.engage_master_pose.translation
    p_cam = pair.engage_tip_pose_cam.translation + pair.scale * delta
    r_cam = pair.orientation_offset * master.pose.rotation
    commanded = compose(camera_pose_world, RigidTransform(r_cam, p_cam))
    pair.last_commanded = commanded
    return commanded


@dataclass
class ArmState:
    model: ArmModel
    joints: JointVector
    pose: RigidTransform  # last commanded (world)


@dataclass(frozen=True)
class ArmCommand:
    pose: RigidTransform
    joints: JointVector
    frozen: bool
    error: str = ""


@dataclass(frozen=True)
class CommandSet:
    arms: dict  # arm_id -> ArmCommand


class TeleopSystem:
    """Owns pairs, camera-mode arbitration, and routing-induced disengagement."""

    def __init__(self, table: RoutingTable, cam_scale: float = DEFAULT_CAMERA_SCALE):
        self.table = table
        self.cam_scale = cam_scale
        self.pairs = {}           # psm_id -> TeleopPair
        self.camera_holder = {}   # ecm_id -> console_id
        self.camera_anchor = {}   # console_id -> (master_pose, camera_pose)

    def apply_routing(self, cmd) -> RoutingTable:
        self.table = update_routing(self.table, cmd)
        if isinstance(cmd, (AssignPsm, ReleasePsm)):
            pair = self.pairs.get(cmd.psm)
            if pair is not None:
                disengage(pair)
        return self.table

    def engage_pair(self, console: str, side: str, psm: str, master: MasterState,
                    world: dict, scale: float = DEFAULT_TELEOP_SCALE) -> TeleopPair:
        if self.table.owner_of(psm) != console:
            raise TeleopError("not_owned", f"{psm} not owned by {console}")
        pair = self.pairs.get(psm)
        if pair is None or pair.console_id != console or pair.side != side:
            pair = TeleopPair(console_id=console, side=side, psm_id=psm, scale=scale)
            self.pairs[psm] = pair
        ecm = self.table.psm_to_ecm[psm]
        engage(pair, master, world[psm].pose, world[ecm].pose)
        return pair

    def release_console(self, console: str) -> list:
        """Drop everything a console holds (e.g. on disconnect). Returns PSM ids."""
        dropped = []
        for psm, owner in list(self.table.ownership.items()):
            if owner == console:
                pair = self.pairs.get(psm)
                if pair is not None:
                    disengage(pair)
                self.table = update_routing(self.table, ReleasePsm(console, psm))
                dropped.append(psm)
        for ecm, holder in list(self.camera_holder.items()):
            if holder == console:
                del self.camera_holder[ecm]
        self.camera_anchor.pop(console, None)
        return dropped

    def set_camera_mode(self, console: str, on: bool, master: MasterState, world: dict):
        ecm = self.table.console_view.get(console)
        if ecm is None:
            raise TeleopError("no_view", f"{console} has no selected view")
        if on:
            holder = self.camera_holder.get(ecm)
            if holder is not None and holder != console:
                raise TeleopError("camera_held", f"{ecm} steered by {holder}")
            self.camera_holder[ecm] = console
            self.camera_anchor[console] = (master.pose, world[ecm].pose)
        else:
            if self.camera_holder.get(ecm) == console:
                del self.camera_holder[ecm]
            self.camera_anchor.pop(console, None)

    def camera_step(self, console: str, master: MasterState, world: dict) -> RigidTransform:
        """Commanded camera pose: the scene follows the hand (negated delta)."""
        ecm = self.table.console_view.get(console)
        if ecm is None:
            raise TeleopError("no_view", console)
        if self.camera_holder.get(ecm) != console:
            raise TeleopError("camera_held", f"{console} does not hold camera mode on {ecm}")
        if master.clutch:
            anchor_master, anchor_cam = self.camera_anchor[console]
            self.camera_anchor[console] = (master.pose, world[ecm].pose)
            return world[ecm].pose
        anchor_master, anchor_cam = self.camera_anchor[console]
        delta = master.pose.translation - anchor_master.translation
        pos = anchor_cam.translation + anchor_cam.rotation.rotate(-self.cam_scale * delta)
        rot_delta = master.pose.rotation * anchor_master.rotation.conjugate()
        rot = anchor_cam.rotation * rot_delta.conjugate()
        return RigidTransform(rot, pos)

    def resolve(self, masters: dict, world: dict, solve_joints: bool = True) -> CommandSet:
        """One control tick: engaged pairs follow their masters, camera-mode
        consoles steer their cameras, every other arm freezes at its last
        commanded pose. Per-arm failures downgrade that arm to frozen."""
        out = {}
        errors = {}
        for psm, pair in self.pairs.items():
            if not pair.engaged:
                continue
            master = masters.get((pair.console_id, pair.side))
            if master is None:
                continue
            ecm = self.table.psm_to_ecm.get(psm)
            try:
                pose = teleop_step(pair, master, world[ecm].pose)
                out[psm] = pose
            except TeleopError as e:
                errors[psm] = e.code
        for ecm, console in self.camera_holder.items():
            master = masters.get((console, "left")) or masters.get((console, "right"))
            if master is None:
                continue
            try:
                out[ecm] = self.camera_step(console, master, world)
            except TeleopError as e:
                errors[ecm] = e.code
        arms = {}
        for arm_id, state in world.items():
            if arm_id in out:
                pose = out[arm_id]
                joints = state.joints
                if solve_joints:
                    position_only = state.model.kind.value == "ECM"
                    ik = diff_ik(state.model, pose, state.joints, position_only=position_only)
                    if ik.converged:
                        joints = ik.joints
                    else:
                        arms[arm_id] = ArmCommand(state.pose, state.joints, True,
                                                  error=f"ik_{ik.reason or 'failed'}")
                        continue
                arms[arm_id] = ArmCommand(pose, joints, False)
            else:
                arms[arm_id] = ArmCommand(state.pose, state.joints, True,
                                          error=errors.get(arm_id, ""))
        return CommandSet(arms=arms)


def make_world(models: dict, joints: dict) -> dict:
    """arm_id -> ArmState with poses from forward kinematics."""
    world = {}
    for arm_id, model in models.items():
        q = joints[arm_id]
        world[arm_id] = ArmState(model, JointVector.of(q), fk(model, q).pose)
    return world
