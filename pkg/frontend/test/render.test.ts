import { describe, expect, it } from "vitest";
import { DEFAULT_CAMERA } from "../src/projection.js";
import { renderViewport, rcmPoint, shaftDirection, Marker2D, Segment2D } from "../src/render.js";
import { Snapshot, ArmSnapshot } from "../src/protocol.js";
import { quatFromAxisAngle, quatMul } from "../src/geometry.js";

function arm(kind: "PSM" | "ECM", translation: [number, number, number], joints: number[],
             quat: [number, number, number, number] = [1, 0, 0, 0]): ArmSnapshot {
  return { kind, pose: { quat_wxyz: quat, translation }, joints };
}

function snapshot(arms: Record<string, ArmSnapshot>): Snapshot {
  return {
    type: "snapshot", protocol_version: 1, tick: 0, true_time_ns: 0, arms,
    routing: { psm_to_ecm: {}, console_view: {}, ownership: {} },
    engagement: {}, cameras: {},
  };
}

// ECM looking straight down the world z axis from the origin; PSM tip in
// front of it inside the working range.
const SNAP = snapshot({
  "ECM-A": arm("ECM", [0, 0, 0], [0, 0, 0.1, 0]),
  "PSM1": arm("PSM", [0.01, 0, 0.1], [0, 0, 0.1, 0, 0, 0, 0]),
});

describe("renderViewport", () => {
  it("projects the PSM tip right of center for +x in the camera frame", () => {
    const model = renderViewport(SNAP, "ECM-A", DEFAULT_CAMERA);
    expect(model.warning).toBeNull();
    const tipAxis = model.primitives.find(
      (p): p is Segment2D => p.kind === "segment" && p.label === "PSM1" && p.color === "#e05050",
    );
    expect(tipAxis).toBeDefined();
    expect(tipAxis!.from[0]).toBeGreaterThan(DEFAULT_CAMERA.cx);
  });

  it("moving the tip +x moves its marker +u", () => {
    const moved = snapshot({
      ...SNAP.arms,
      "PSM1": arm("PSM", [0.02, 0, 0.1], [0, 0, 0.1, 0, 0, 0, 0]),
    });
    const pick = (s: Snapshot) => renderViewport(s, "ECM-A", DEFAULT_CAMERA).primitives.find(
      (p): p is Segment2D => p.kind === "segment" && p.color === "#e05050",
    )!;
    expect(pick(moved).from[0]).toBeGreaterThan(pick(SNAP).from[0]);
  });

  it("renders an unknown ECM as an empty viewport with a warning", () => {
    const model = renderViewport(SNAP, "ECM-B", DEFAULT_CAMERA);
    expect(model.primitives).toHaveLength(0);
    expect(model.warning).toContain("ECM-B");
    // the other viewport is unaffected
    expect(renderViewport(SNAP, "ECM-A", DEFAULT_CAMERA).warning).toBeNull();
  });

  it("asking for a PSM as a viewport is a warning, not a crash", () => {
    expect(renderViewport(SNAP, "PSM1", DEFAULT_CAMERA).warning).toContain("PSM1");
  });

  it("dims primitives outside the camera working range", () => {
    const far = snapshot({
      "ECM-A": arm("ECM", [0, 0, 0], [0, 0, 0.1, 0]),
      "PSM1": arm("PSM", [0, 0, 0.4], [0, 0, 0.1, 0, 0, 0, 0]),
    });
    const model = renderViewport(far, "ECM-A", DEFAULT_CAMERA);
    const marker = model.primitives.find((p): p is Marker2D => p.kind === "marker");
    expect(marker).toBeDefined();
    expect(marker!.dimmed).toBe(true);
  });
});

describe("shaft geometry from snapshot joints", () => {
  it("recovers the RCM q3 behind the tip for a straight wrist", () => {
    const a = arm("PSM", [0.01, 0, 0.1], [0, 0, 0.07, 0, 0, 0, 0]);
    expect(rcmPoint(a)).toEqual([0.01, 0, 0.1 - 0.07]);
  });

  it("undoes wrist joints so bent wrists keep the same shaft line", () => {
    // tip rotation = shaft (identity) * Rz(q4) Rx(q5) Ry(q6)
    const q4 = 0.4, q5 = -0.3, q6 = 0.2;
    const wrist = quatMul(
      quatMul(quatFromAxisAngle([0, 0, 1], q4), quatFromAxisAngle([1, 0, 0], q5)),
      quatFromAxisAngle([0, 1, 0], q6),
    );
    const a = arm("PSM", [0, 0, 0.1], [0, 0, 0.1, q4, q5, q6, 0], wrist);
    const dir = shaftDirection(a);
    expect(dir[0]).toBeCloseTo(0, 12);
    expect(dir[1]).toBeCloseTo(0, 12);
    expect(dir[2]).toBeCloseTo(1, 12);
  });
});
