import { Pose } from "./geometry.js";

export const PROTOCOL_VERSION = 1;

export interface ArmSnapshot {
  kind: "PSM" | "ECM";
  pose: Pose;
  joints: number[];
}

export interface Snapshot {
  type: "snapshot";
  protocol_version: number;
  tick: number;
  true_time_ns: number;
  arms: Record<string, ArmSnapshot>;
  routing: {
    psm_to_ecm: Record<string, string>;
    console_view: Record<string, string>;
    ownership: Record<string, string>;
  };
  engagement: Record<string, unknown>;
  cameras: Record<string, string>;
}

export interface Telemetry {
  type: "telemetry";
  residuals_ns: Record<string, number | null>;
  photon_to_glass_ns: number;
  within_budget: boolean;
  fps: number;
  recording_status: string;
}

export interface Welcome {
  type: "welcome";
  protocol_version: number;
  [extra: string]: unknown;
}

export interface ErrorMsg {
  type: "error";
  code?: string;
  message?: string;
  fatal?: boolean;
}

export interface Ack {
  type: "ack";
  of: string;
}

export type ServerMessage = Snapshot | Telemetry | Welcome | ErrorMsg | Ack;

export interface InputMessage {
  type: "input";
  console_id?: string;
  master_side: "left" | "right";
  pose_delta: { translation: Vec3Like; rotation_wxyz?: QuatLike };
  clutch?: boolean;
  grip?: number;
}

type Vec3Like = [number, number, number];
type QuatLike = [number, number, number, number];

export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null || typeof (obj as { type?: unknown }).type !== "string") {
    return null;
  }
  return obj as ServerMessage;
}
