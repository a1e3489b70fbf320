// Minimal 3D math mirroring the server's conventions: quaternions are
// [w, x, y, z], poses rotate-then-translate.

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface Pose {
  quat_wxyz: Quat;
  translation: Vec3;
}

export function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatConj(q: Quat): Quat {
  return [q[0], -q[1], -q[2], -q[3]];
}

export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [, x, y, z] = quatMul(quatMul(q, [0, v[0], v[1], v[2]]), quatConj(q));
  return [x, y, z];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const s = Math.sin(angle / 2) / (n || 1);
  return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

/** World point into the camera frame defined by the camera's world pose. */
export function worldToCamera(cameraPose: Pose, p: Vec3): Vec3 {
  const inv = quatConj(cameraPose.quat_wxyz);
  return quatRotate(inv, sub(p, cameraPose.translation));
}

export function applyPose(pose: Pose, p: Vec3): Vec3 {
  return add(quatRotate(pose.quat_wxyz, p), pose.translation);
}
