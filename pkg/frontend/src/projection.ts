import { Vec3, worldToCamera, Pose } from "./geometry.js";

// Same pinhole model as the server's kinematics: u = fx*x/z + cx. The
// snapshot carries camera poses but no intrinsics, so the viewport uses
// this fixed model (matching the server-side defaults).
export interface CameraModel {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  workingRange: [number, number];
}

export const DEFAULT_CAMERA: CameraModel = {
  fx: 1000, fy: 1000, cx: 320, cy: 240, width: 640, height: 480,
  workingRange: [0.05, 0.15],
};

export interface Projected {
  u: number;
  v: number;
  inWorkingRange: boolean;
}

/** Projects a camera-frame point; returns null when at or behind the camera. */
export function project(cam: CameraModel, p: Vec3): Projected | null {
  const [x, y, z] = p;
  if (z <= 0) return null;
  return {
    u: (cam.fx * x) / z + cam.cx,
    v: (cam.fy * y) / z + cam.cy,
    inWorkingRange: cam.workingRange[0] <= z && z <= cam.workingRange[1],
  };
}

export function projectWorld(cam: CameraModel, cameraPose: Pose, p: Vec3): Projected | null {
  return project(cam, worldToCamera(cameraPose, p));
}
