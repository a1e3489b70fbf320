import { quatFromAxisAngle } from "./geometry.js";
import { InputMessage } from "./protocol.js";

// Pointer/keyboard bindings stand in for master manipulators: drags move in
// the display plane, the wheel moves along the display normal, a modifier
// drag rotates the wrist, and space holds the clutch.
export interface InputBinding {
  sensitivity: number;       // metres per pixel
  wheelSensitivity: number;  // metres per wheel line
  rotSensitivity: number;    // radians per pixel
}

export const DEFAULT_BINDING: InputBinding = {
  sensitivity: 1e-4,
  wheelSensitivity: 5e-4,
  rotSensitivity: 5e-3,
};

export interface InputContext {
  live: boolean;
  clutched: boolean;
  masterSide: "left" | "right";
}

/**
 * Drag in pixels -> master translation delta: +x right, +y up (screen dy
 * grows downward, hence the sign flip), z from the wheel. Returns null
 * when nothing should be emitted: zero motion, clutched, or not live.
 */
export function pointerToMasterDelta(
  dxPx: number, dyPx: number, binding: InputBinding, ctx: InputContext,
): InputMessage | null {
  if (!ctx.live || ctx.clutched) return null;
  if (dxPx === 0 && dyPx === 0) return null;
  return {
    type: "input",
    master_side: ctx.masterSide,
    pose_delta: { translation: [dxPx * binding.sensitivity, -dyPx * binding.sensitivity + 0, 0] },
    clutch: false,
  };
}

export function wheelToMasterDelta(
  lines: number, binding: InputBinding, ctx: InputContext,
): InputMessage | null {
  if (!ctx.live || ctx.clutched || lines === 0) return null;
  return {
    type: "input",
    master_side: ctx.masterSide,
    pose_delta: { translation: [0, 0, lines * binding.wheelSensitivity] },
    clutch: false,
  };
}

/** Modifier-drag -> wrist rotation about the display axes. */
export function dragToWristDelta(
  dxPx: number, dyPx: number, binding: InputBinding, ctx: InputContext,
): InputMessage | null {
  if (!ctx.live || ctx.clutched) return null;
  if (dxPx === 0 && dyPx === 0) return null;
  const yaw = quatFromAxisAngle([0, 1, 0], dxPx * binding.rotSensitivity);
  const pitch = quatFromAxisAngle([1, 0, 0], -dyPx * binding.rotSensitivity);
  return {
    type: "input",
    master_side: ctx.masterSide,
    pose_delta: {
      translation: [0, 0, 0],
      rotation_wxyz: dxPx !== 0 ? yaw : pitch,
    },
    clutch: false,
  };
}

/**
 * Clutch edges are the only messages allowed while the clutch is held:
 * pressing emits clutch=true (the server freezes the pair), releasing
 * emits clutch=false with zero delta so the pair re-anchors without a jump.
 */
export function clutchEdgeMessage(
  nowClutched: boolean, ctx: InputContext,
): InputMessage | null {
  if (!ctx.live) return null;
  return {
    type: "input",
    master_side: ctx.masterSide,
    pose_delta: { translation: [0, 0, 0] },
    clutch: nowClutched,
  };
}
