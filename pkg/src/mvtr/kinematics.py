"""Arm models with a remote center of motion, FK/IK, base registration,
and pinhole camera projection.

Chain convention (RCM at the base origin, all rotations about it):

    tip = base . Ry(q1) . Rx(q2) . Tz(q3) . Rz(q4) [. Rx(q5) . Ry(q6)] . tool_offset

Instrument arms (PSM) use all six joints plus a jaw value; camera arms
(ECM) stop after the roll joint. The instrument shaft is the local z axis
after the first two rotations, so it always passes through the base origin
regardless of joint values: the remote-center property.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, UnitQuat, Vec3, compose, invert


class ArmKind(enum.Enum):
    PSM = "PSM"
    ECM = "ECM"


# (min, max) per joint, jaw last for PSM
DEFAULT_PSM_LIMITS = (
    (-1.5, 1.5),   # yaw
    (-1.5, 1.5),   # pitch
    (0.0, 0.24),   # insertion (m)
    (-2.2, 2.2),   # roll
    (-1.4, 1.4),   # wrist pitch
    (-1.4, 1.4),   # wrist yaw
    (0.0, 1.0),    # jaw
)
DEFAULT_ECM_LIMITS = (
    (-1.5, 1.5),
    (-1.5, 1.5),
    (0.0, 0.24),
    (-2.2, 2.2),
)


def joint_count(kind: ArmKind) -> int:
    return 7 if kind is ArmKind.PSM else 4


@dataclass(frozen=True)
class ArmModel:
    kind: ArmKind
    base: RigidTransform = field(default_factory=RigidTransform.identity)
    tool_offset: RigidTransform = field(default_factory=RigidTransform.identity)
    joint_limits: tuple = ()

    def __post_init__(self):
        limits = self.joint_limits or (
            DEFAULT_PSM_LIMITS if self.kind is ArmKind.PSM else DEFAULT_ECM_LIMITS
        )
        object.__setattr__(self, "joint_limits", tuple(tuple(l) for l in limits))
        if len(self.joint_limits) != joint_count(self.kind):
            raise ValueError("joint_limits length does not match arm kind")
        ins_lo, ins_hi = self.joint_limits[2]
        if not (0.0 <= ins_lo < ins_hi):
            raise ValueError("insertion limits must satisfy 0 <= min < max")

    @property
    def pose_joint_count(self) -> int:
        """Joints that affect the pose (jaw excluded)."""
        return 6 if self.kind is ArmKind.PSM else 4

    def max_reach(self) -> float:
        return self.joint_limits[2][1] + self.tool_offset.translation.norm()

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lims = np.array(self.joint_limits[: len(q)])
        return np.clip(q, lims[:, 0], lims[:, 1])

    def within_limits(self, q) -> bool:
        return all(lo - 1e-12 <= v <= hi + 1e-12 for v, (lo, hi) in zip(q, self.joint_limits))


@dataclass(frozen=True)
class JointVector:
    values: tuple

    @staticmethod
    def of(values) -> "JointVector":
        return JointVector(tuple(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=float)


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1]], dtype=float)


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)


def _tz(d):
    m = np.eye(4)
    m[2, 3] = d
    return m


def fk_matrix(model: ArmModel, q) -> np.ndarray:
    """World<-tip homogeneous matrix; the fast path used by the IK solver."""
    q = np.asarray(q, dtype=float)
    m = model.base.to_matrix() @ _ry(q[0]) @ _rx(q[1]) @ _tz(q[2]) @ _rz(q[3])
    if model.kind is ArmKind.PSM:
        m = m @ _rx(q[4]) @ _ry(q[5])
    return m @ model.tool_offset.to_matrix()


@dataclass(frozen=True)
class FkResult:
    pose: RigidTransform
    within_limits: bool


def fk(model: ArmModel, q) -> FkResult:
    """Forward kinematics; joint-limit violations flag the result, never fail."""
    vals = q.values if isinstance(q, JointVector) else tuple(q)
    if len(vals) != joint_count(model.kind):
        raise ValueError(
            f"{model.kind.value} expects {joint_count(model.kind)} joints, got {len(vals)}"
        )
    pose = RigidTransform.from_matrix(fk_matrix(model, vals[: model.pose_joint_count]))
    return FkResult(pose=pose, within_limits=model.within_limits(vals))


def shaft_line(model: ArmModel, q) -> tuple:
    """(point, direction) of the instrument shaft in world coordinates."""
    vals = q.values if isinstance(q, JointVector) else tuple(q)
    m = model.base.to_matrix() @ _ry(vals[0]) @ _rx(vals[1]) @ _tz(vals[2])
    return Vec3.from_array(m[:3, 3]), Vec3.from_array(m[:3, 2])


def _batched_chain(model: ArmModel, qs: np.ndarray) -> np.ndarray:
    """fk_matrix for a (N, n_joints) batch of joint vectors -> (N, 4, 4)."""
    n = qs.shape[0]
    c1, s1 = np.cos(qs[:, 0]), np.sin(qs[:, 0])
    c2, s2 = np.cos(qs[:, 1]), np.sin(qs[:, 1])
    c4, s4 = np.cos(qs[:, 3]), np.sin(qs[:, 3])
    zero = np.zeros(n)
    one = np.ones(n)
    ry = np.stack(
        [c1, zero, s1, zero, zero, one, zero, zero, -s1, zero, c1, zero, zero, zero, zero, one],
        axis=-1,
    ).reshape(n, 4, 4)
    rx = np.stack(
        [one, zero, zero, zero, zero, c2, -s2, zero, zero, s2, c2, zero, zero, zero, zero, one],
        axis=-1,
    ).reshape(n, 4, 4)
    tz = np.tile(np.eye(4), (n, 1, 1))
    tz[:, 2, 3] = qs[:, 2]
    rz = np.stack(
        [c4, -s4, zero, zero, s4, c4, zero, zero, zero, zero, one, zero, zero, zero, zero, one],
        axis=-1,
    ).reshape(n, 4, 4)
    m = model.base.to_matrix()[None] @ ry @ rx @ tz @ rz
    if model.kind is ArmKind.PSM:
        c5, s5 = np.cos(qs[:, 4]), np.sin(qs[:, 4])
        c6, s6 = np.cos(qs[:, 5]), np.sin(qs[:, 5])
        rx5 = np.stack(
            [one, zero, zero, zero, zero, c5, -s5, zero, zero, s5, c5, zero, zero, zero, zero, one],
            axis=-1,
        ).reshape(n, 4, 4)
        ry6 = np.stack(
            [c6, zero, s6, zero, zero, one, zero, zero, -s6, zero, c6, zero, zero, zero, zero, one],
            axis=-1,
        ).reshape(n, 4, 4)
        m = m @ rx5 @ ry6
    return m @ model.tool_offset.to_matrix()[None]


def _rotvec_from_matrix(r: np.ndarray) -> np.ndarray:
    """Rotation matrix -> axis*angle vector."""
    tr = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = math.acos(tr)
    if angle < 1e-12:
        return np.zeros(3)
    if angle > math.pi - 1e-6:
        # near pi: extract axis from the symmetric part
        d = np.sqrt(np.maximum(np.diag((r + np.eye(3)) / 2.0), 0.0))
        axis = d / (np.linalg.norm(d) + 1e-300)
        # fix signs from off-diagonals
        if r[0, 1] + r[1, 0] < 0:
            axis[1] = -axis[1]
        if r[0, 2] + r[2, 0] < 0:
            axis[2] = -axis[2]
        return axis * angle
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return v * (angle / (2.0 * math.sin(angle)))


def _analytic_ik(model: ArmModel, target: RigidTransform) -> np.ndarray:
    """Closed-form joint estimate; exact when tool_offset is identity.

    Position fixes yaw/pitch/insertion (the pre-roll frame translates only
    along its z axis); the remaining rotation factors as Rz*Rx*Ry.
    """
    pre_tool = compose(invert(model.base), compose(target, invert(model.tool_offset)))
    p = pre_tool.translation
    q3 = p.norm()
    if q3 < 1e-12:
        q1 = q2 = 0.0
    else:
        q2 = -math.asin(max(-1.0, min(1.0, p.y / q3)))
        q1 = math.atan2(p.x, p.z)
    r = (_ry(q1)[:3, :3] @ _rx(q2)[:3, :3]).T @ pre_tool.rotation.to_matrix()
    if model.kind is ArmKind.ECM:
        return np.array([q1, q2, q3, math.atan2(r[1, 0], r[0, 0])])
    # r = Rz(q4) Rx(q5) Ry(q6)
    q5 = math.asin(max(-1.0, min(1.0, r[2, 1])))
    q4 = math.atan2(-r[0, 1], r[1, 1])
    q6 = math.atan2(-r[2, 0], r[2, 2])
    return np.array([q1, q2, q3, q4, q5, q6])


@dataclass(frozen=True)
class IkResult:
    joints: JointVector
    converged: bool
    iterations: int
    pos_residual: float
    rot_residual: float
    reason: str = ""


def _pose_error(target_m: np.ndarray, cur_m: np.ndarray, position_only: bool) -> np.ndarray:
    dp = target_m[:3, 3] - cur_m[:3, 3]
    if position_only:
        return dp
    drot = _rotvec_from_matrix(target_m[:3, :3] @ cur_m[:3, :3].T)
    return np.concatenate([dp, drot])


def diff_ik(
    model: ArmModel,
    target: RigidTransform,
    seed,
    tol: float = 1e-6,
    max_iter: int = 100,
    damping: float = 1e-3,
    fd_step: float = 1e-6,
    position_only: bool = False,
) -> IkResult:
    """Damped least-squares IK on a central-difference numerical Jacobian.

    Converges when position error and (unless position_only) geodesic
    orientation error both fall within tol. The jaw joint, when present,
    is passed through from the seed unchanged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    seed_vals = seed.values if isinstance(seed, JointVector) else tuple(seed)
    if len(seed_vals) != joint_count(model.kind):
        raise ValueError("seed length does not match arm kind")
    n = model.pose_joint_count

    rcm = invert(model.base).apply(target.translation)
    if rcm.norm() > model.max_reach() + 1e-9:
        q = JointVector.of(seed_vals)
        return IkResult(q, False, 0, math.inf, math.inf, reason="unreachable")

    target_m = target.to_matrix()
    lims = np.array(model.joint_limits[:n])

    def solve_from(q):
        return _dls_iterate(
            model, q, target_m, lims, tol, max_iter, damping, fd_step, position_only
        )

    def residuals(q):
        err = _pose_error(target_m, fk_matrix(model, q), position_only)
        return (float(np.linalg.norm(err[:3])),
                0.0 if position_only else float(np.linalg.norm(err[3:])))

    q0 = np.array(seed_vals[:n], dtype=float)
    pos0, rot0 = residuals(q0)
    if pos0 <= tol and rot0 <= tol:
        q, converged, iters, pos_res, rot_res = q0, True, 0, pos0, rot0
    else:
        # closed-form estimate is exact for identity tool offsets; accept it
        # outright when within tolerance and skip the iterative solve
        q_alt = np.clip(_analytic_ik(model, target), lims[:, 0], lims[:, 1])
        pos_a, rot_a = residuals(q_alt)
        if pos_a <= tol and rot_a <= tol:
            q, converged, iters, pos_res, rot_res = q_alt, True, 1, pos_a, rot_a
        else:
            q, converged, iters, pos_res, rot_res = solve_from(q0)
            if not converged:
                # restart from the closed-form estimate, keep whichever is better
                q2, conv2, it2, pos2, rot2 = solve_from(q_alt)
                if conv2 or pos2 + rot2 < pos_res + rot_res:
                    q, converged, iters, pos_res, rot_res = q2, conv2, it2, pos2, rot2
    out = tuple(q) + tuple(seed_vals[n:])
    if converged:
        return IkResult(JointVector.of(out), True, iters, pos_res, rot_res)
    return IkResult(
        JointVector.of(out), False, iters, pos_res, rot_res, reason="max_iter exceeded"
    )


def _dls_iterate(model, q, target_m, lims, tol, max_iter, damping, fd_step, position_only):
    n = len(q)
    best_q = q.copy()
    best_pos = best_rot = math.inf
    iters = 0
    for iters in range(max_iter + 1):
        cur_m = fk_matrix(model, q)
        err = _pose_error(target_m, cur_m, position_only)
        pos_res = float(np.linalg.norm(err[:3]))
        rot_res = 0.0 if position_only else float(np.linalg.norm(err[3:]))
        if pos_res < best_pos:
            best_pos, best_rot, best_q = pos_res, rot_res, q.copy()
        if pos_res <= tol and rot_res <= tol:
            return q, True, iters, pos_res, rot_res
        if iters == max_iter:
            break
        # central-difference Jacobian, all perturbations in one batch
        batch = np.repeat(q[None, :], 2 * n, axis=0)
        for j in range(n):
            batch[2 * j, j] += fd_step
            batch[2 * j + 1, j] -= fd_step
        mats = _batched_chain(model, batch)
        dim = 3 if position_only else 6
        jac = np.empty((dim, n))
        for j in range(n):
            ep = _pose_error(target_m, mats[2 * j], position_only)
            em = _pose_error(target_m, mats[2 * j + 1], position_only)
            jac[:, j] = (em - ep) / (2.0 * fd_step)
        jjt = jac @ jac.T + (damping**2) * np.eye(dim)
        dq = jac.T @ np.linalg.solve(jjt, err)
        q = np.clip(q + dq, lims[:, 0], lims[:, 1])

    return best_q, False, iters, best_pos, best_rot


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    rms: float


def register_base(pairs) -> RegistrationResult:
    """Least-squares rigid transform T with world ~= T(base), Kabsch/SVD.

    pairs: iterable of (Vec3 in world, Vec3 in arm base). Needs at least
    three non-collinear pairs; the reflection case is guarded by a
    determinant check.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise RegistrationError(f"need at least 3 point pairs, got {len(pairs)}")
    world = np.array([w.as_array() if isinstance(w, Vec3) else w for w, _ in pairs])
    base = np.array([b.as_array() if isinstance(b, Vec3) else b for _, b in pairs])
    wc = world - world.mean(axis=0)
    bc = base - base.mean(axis=0)
    h = bc.T @ wc
    u, s, vt = np.linalg.svd(h)
    # collinear points leave the rotation about the line unconstrained
    scale = float(np.abs(bc).max()) or 1.0
    if s[1] <= 1e-9 * max(s[0], scale**2):
        raise RegistrationError("degenerate configuration: points are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = world.mean(axis=0) - r @ base.mean(axis=0)
    residuals = world - (base @ r.T + t)
    rms = float(np.sqrt((residuals**2).sum(axis=1).mean()))
    return RegistrationResult(
        RigidTransform(UnitQuat.from_matrix(r), Vec3.from_array(t)), rms
    )


class BehindCameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 640
    height: int = 480
    baseline: float = 0.005
    working_range: tuple = (0.050, 0.150)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.baseline):
            raise ValueError("baseline must be positive")
        lo, hi = self.working_range
        if not lo < hi:
            raise ValueError("working_range min must be below max")


@dataclass(frozen=True)
class Projection:
    u: float
    v: float
    in_working_range: bool


def project(cam: CameraModel, p_camera: Vec3) -> Projection:
    """Pinhole projection of a camera-frame point; z <= 0 is an error."""
    if p_camera.z <= 0:
        raise BehindCameraError(f"point at z={p_camera.z} is behind the camera")
    u = cam.fx * p_camera.x / p_camera.z + cam.cx
    v = cam.fy * p_camera.y / p_camera.z + cam.cy
    lo, hi = cam.working_range
    return Projection(u, v, lo <= p_camera.z <= hi)
