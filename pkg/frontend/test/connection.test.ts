import { describe, expect, it } from "vitest";
import {
  ConsoleClient, FsmState, SocketLike, backoffDelayMs, connectionFsm, initialState,
} from "../src/connection.js";
import { telemetryRows } from "../src/telemetry.js";
import { Telemetry } from "../src/protocol.js";

describe("connectionFsm", () => {
  it("goes live on a matching welcome", () => {
    let s = connectionFsm(initialState, { kind: "connect" });
    expect(s.status).toBe("handshaking");
    s = connectionFsm(s, { kind: "welcome", protocolVersion: 1 });
    expect(s.status).toBe("live");
  });

  it("shows a reason on version mismatch", () => {
    let s = connectionFsm(initialState, { kind: "connect" });
    s = connectionFsm(s, { kind: "welcome", protocolVersion: 2 });
    expect(s.status).toBe("error");
    expect(s.reason).toContain("server 2");
    expect(s.reason).toContain("client 1");
  });

  it("fatal server errors enter the error state", () => {
    let s: FsmState = { status: "live", reason: "", attempts: 0 };
    s = connectionFsm(s, { kind: "server_error", fatal: true, message: "boom" });
    expect(s.status).toBe("error");
    expect(s.reason).toBe("boom");
  });

  it("non-fatal errors leave the state alone", () => {
    const s: FsmState = { status: "live", reason: "", attempts: 0 };
    expect(connectionFsm(s, { kind: "server_error", fatal: false, message: "x" })).toBe(s);
  });
});

describe("backoffDelayMs", () => {
  it("doubles: 1 s, 2 s, 4 s for three consecutive drops", () => {
    expect([1, 2, 3].map(backoffDelayMs)).toEqual([1000, 2000, 4000]);
  });

  it("caps at 30 s", () => {
    expect(backoffDelayMs(20)).toBe(30_000);
  });
});

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  send(data: string): void { this.sent.push(data); }
  close(): void { this.closed = true; }
}

function makeClient() {
  const sockets: FakeSocket[] = [];
  const timers: Array<{ fn: () => void; ms: number }> = [];
  const states: FsmState[] = [];
  const client = new ConsoleClient({
    url: "ws://test",
    consoleId: "console1",
    makeSocket: () => { const s = new FakeSocket(); sockets.push(s); return s; },
    setTimer: (fn, ms) => { timers.push({ fn, ms }); return 0; },
    onState: (s) => states.push(s),
  });
  return { client, sockets, timers, states };
}

describe("ConsoleClient", () => {
  it("sends hello on open and goes live on welcome", () => {
    const { client, sockets } = makeClient();
    client.connect();
    sockets[0].onopen!();
    const hello = JSON.parse(sockets[0].sent[0]);
    expect(hello.type).toBe("hello");
    expect(hello.protocol_version).toBe(1);
    expect(hello.console_id).toBe("console1");
    sockets[0].onmessage!({ data: JSON.stringify({ type: "welcome", protocol_version: 1 }) });
    expect(client.state.status).toBe("live");
  });

  it("refuses to send unless live", () => {
    const { client, sockets } = makeClient();
    client.connect();
    expect(client.send({ type: "input" })).toBe(false);
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: JSON.stringify({ type: "welcome", protocol_version: 1 }) });
    expect(client.send({ type: "snapshot_request" })).toBe(true);
  });

  it("schedules 1 s, 2 s, 4 s retries for three dropped connections", () => {
    const { client, sockets, timers } = makeClient();
    client.connect();
    for (let i = 0; i < 3; i++) {
      sockets[i].onclose!();    // drop before welcome
      timers[i].fn();           // fire the retry
    }
    expect(timers.map((t) => t.ms)).toEqual([1000, 2000, 4000]);
  });

  it("a successful welcome resets the backoff", () => {
    const { client, sockets, timers } = makeClient();
    client.connect();
    sockets[0].onclose!();
    timers[0].fn();
    sockets[1].onopen!();
    sockets[1].onmessage!({ data: JSON.stringify({ type: "welcome", protocol_version: 1 }) });
    sockets[1].onclose!();
    expect(timers[1].ms).toBe(1000);
  });

  it("version mismatch surfaces as a visible error state", () => {
    const { client, sockets, states } = makeClient();
    client.connect();
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: JSON.stringify({ type: "welcome", protocol_version: 99 }) });
    expect(client.state.status).toBe("error");
    expect(states.at(-1)!.reason).toContain("mismatch");
  });

  it("garbage from the server is ignored", () => {
    const { client, sockets } = makeClient();
    client.connect();
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: "{not json" });
    sockets[0].onmessage!({ data: JSON.stringify([1, 2, 3]) });
    expect(client.state.status).toBe("handshaking");
  });
});

describe("telemetryRows", () => {
  it("shows server values verbatim without recomputation", () => {
    const t: Telemetry = {
      type: "telemetry",
      residuals_ns: { cam0: -13716, robot: null },
      photon_to_glass_ns: 7_500_000,
      within_budget: true,
      fps: 15.0,
      recording_status: "idle",
    };
    const rows = telemetryRows(t);
    expect(rows).toContainEqual({ label: "cam0 residual", value: "-13716 ns" });
    expect(rows).toContainEqual({ label: "robot residual", value: "unsynchronized" });
    expect(rows).toContainEqual({ label: "photon to glass", value: "7500000 ns" });
    expect(rows).toContainEqual({ label: "within budget", value: "true" });
    expect(rows).toContainEqual({ label: "recording", value: "idle" });
  });
});
