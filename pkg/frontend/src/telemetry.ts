import { Telemetry } from "./protocol.js";

export interface TelemetryRow {
  label: string;
  value: string;
}

/**
 * Telemetry rows shown verbatim from the server payload — the client
 * formats units but never recomputes residuals or budgets.
 */
export function telemetryRows(t: Telemetry): TelemetryRow[] {
  const rows: TelemetryRow[] = [];
  for (const [id, ns] of Object.entries(t.residuals_ns)) {
    rows.push({ label: `${id} residual`, value: ns === null ? "unsynchronized" : `${ns} ns` });
  }
  rows.push({ label: "photon to glass", value: `${t.photon_to_glass_ns} ns` });
  rows.push({ label: "within budget", value: String(t.within_budget) });
  rows.push({ label: "fps", value: String(t.fps) });
  rows.push({ label: "recording", value: t.recording_status });
  return rows;
}
