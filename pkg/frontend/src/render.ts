import {
  Pose, Quat, Vec3, add, quatFromAxisAngle, quatMul, quatRotate, scale, sub,
} from "./geometry.js";
import { CameraModel, projectWorld } from "./projection.js";
import { Snapshot, ArmSnapshot } from "./protocol.js";

export interface Segment2D {
  kind: "segment";
  from: [number, number];
  to: [number, number];
  color: string;
  dimmed: boolean;
  label?: string;
}

export interface Marker2D {
  kind: "marker";
  at: [number, number];
  color: string;
  dimmed: boolean;
  label?: string;
}

export type Primitive2D = Segment2D | Marker2D;

export interface ViewportModel {
  ecmId: string;
  primitives: Primitive2D[];
  warning: string | null;
}

const TRIAD_LEN = 0.01; // m
const TRIAD_COLORS = ["#e05050", "#50c050", "#5080e0"]; // x, y, z
const GRID_HALF = 0.1; // m, floor grid half-extent at z = 0
const GRID_STEP = 0.025;

/**
 * Shaft direction of an arm in world coordinates. The tip rotation is
 * shaft * wrist; undoing the wrist joints (rz, rx, ry for a PSM; rz for
 * an ECM) leaves the frame whose z axis runs along the instrument shaft.
 */
export function shaftDirection(arm: ArmSnapshot): Vec3 {
  let q: Quat = arm.pose.quat_wxyz;
  if (arm.kind === "PSM") {
    q = quatMul(q, quatFromAxisAngle([0, 1, 0], -arm.joints[5]));
    q = quatMul(q, quatFromAxisAngle([1, 0, 0], -arm.joints[4]));
  }
  q = quatMul(q, quatFromAxisAngle([0, 0, 1], -arm.joints[3]));
  return quatRotate(q, [0, 0, 1]);
}

/** Remote-center point: the shaft passes through it q3 behind the tip. */
export function rcmPoint(arm: ArmSnapshot): Vec3 {
  return sub(arm.pose.translation, scale(shaftDirection(arm), arm.joints[2]));
}

function segment(
  cam: CameraModel, pose: Pose, a: Vec3, b: Vec3, color: string, label?: string,
): Segment2D | null {
  const pa = projectWorld(cam, pose, a);
  const pb = projectWorld(cam, pose, b);
  if (!pa || !pb) return null;
  return {
    kind: "segment", from: [pa.u, pa.v], to: [pb.u, pb.v], color,
    dimmed: !(pa.inWorkingRange && pb.inWorkingRange), label,
  };
}

export function renderViewport(snapshot: Snapshot, ecmId: string, cam: CameraModel): ViewportModel {
  const ecm = snapshot.arms[ecmId];
  if (!ecm || ecm.kind !== "ECM") {
    return { ecmId, primitives: [], warning: `no such camera arm: ${ecmId}` };
  }
  const pose = ecm.pose;
  const prims: Primitive2D[] = [];

  for (let i = -GRID_HALF; i <= GRID_HALF + 1e-9; i += GRID_STEP) {
    const gx = segment(cam, pose, [i, -GRID_HALF, 0], [i, GRID_HALF, 0], "#2a2a33");
    const gy = segment(cam, pose, [-GRID_HALF, i, 0], [GRID_HALF, i, 0], "#2a2a33");
    if (gx) prims.push(gx);
    if (gy) prims.push(gy);
  }

  for (const [armId, arm] of Object.entries(snapshot.arms)) {
    if (arm.kind !== "PSM") continue;
    const tip = arm.pose.translation;
    const rcm = rcmPoint(arm);
    const shaft = segment(cam, pose, rcm, tip, "#c0c0c8", armId);
    if (shaft) prims.push(shaft);
    const rcmMark = projectWorld(cam, pose, rcm);
    if (rcmMark) {
      prims.push({
        kind: "marker", at: [rcmMark.u, rcmMark.v], color: "#e0a040",
        dimmed: !rcmMark.inWorkingRange, label: `${armId} rcm`,
      });
    }
    const axes: Vec3[] = [[TRIAD_LEN, 0, 0], [0, TRIAD_LEN, 0], [0, 0, TRIAD_LEN]];
    axes.forEach((axis, i) => {
      const end = add(tip, quatRotate(arm.pose.quat_wxyz, axis));
      const seg = segment(cam, pose, tip, end, TRIAD_COLORS[i], i === 0 ? armId : undefined);
      if (seg) prims.push(seg);
    });
  }
  return { ecmId, primitives: prims, warning: null };
}
