import { parseServerMessage, ServerMessage, PROTOCOL_VERSION } from "./protocol.js";

export type ConnectionStatus = "disconnected" | "handshaking" | "live" | "error";

export interface FsmState {
  status: ConnectionStatus;
  reason: string;
  attempts: number; // consecutive failures, drives the backoff
}

export const initialState: FsmState = { status: "disconnected", reason: "", attempts: 0 };

export type FsmEvent =
  | { kind: "connect" }
  | { kind: "welcome"; protocolVersion: number }
  | { kind: "server_error"; fatal: boolean; message: string }
  | { kind: "closed" };

/** Pure connection state machine; the transport feeds it events. */
export function connectionFsm(state: FsmState, ev: FsmEvent): FsmState {
  switch (ev.kind) {
    case "connect":
      return { ...state, status: "handshaking" };
    case "welcome":
      if (ev.protocolVersion !== PROTOCOL_VERSION) {
        return {
          status: "error",
          reason: `protocol version mismatch: server ${ev.protocolVersion}, client ${PROTOCOL_VERSION}`,
          attempts: state.attempts + 1,
        };
      }
      return { status: "live", reason: "", attempts: 0 };
    case "server_error":
      if (ev.fatal) {
        return { status: "error", reason: ev.message, attempts: state.attempts + 1 };
      }
      return state;
    case "closed":
      if (state.status === "error") {
        return state; // keep the reason visible; retry still scheduled
      }
      return { status: "disconnected", reason: state.reason, attempts: state.attempts + 1 };
  }
}

/** Doubling backoff: 1 s, 2 s, 4 s, ... capped at 30 s. */
export function backoffDelayMs(attempts: number): number {
  return Math.min(1000 * 2 ** Math.max(0, attempts - 1), 30_000);
}

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export interface ClientOptions {
  url: string;
  consoleId: string;
  makeSocket?: (url: string) => SocketLike;
  setTimer?: (fn: () => void, ms: number) => unknown;
  onState?: (state: FsmState) => void;
  onMessage?: (msg: ServerMessage) => void;
}

/** WebSocket client: hello on open, FSM + auto-reconnect with backoff. */
export class ConsoleClient {
  state: FsmState = initialState;
  private socket: SocketLike | null = null;
  private readonly opts: ClientOptions;

  constructor(opts: ClientOptions) {
    this.opts = opts;
  }

  connect(): void {
    const make = this.opts.makeSocket ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.transition({ kind: "connect" });
    const sock = make(this.opts.url);
    this.socket = sock;
    sock.onopen = () => {
      sock.send(JSON.stringify({
        type: "hello", protocol_version: PROTOCOL_VERSION, console_id: this.opts.consoleId,
      }));
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      const msg = parseServerMessage(ev.data);
      if (!msg) return;
      if (msg.type === "welcome") {
        this.transition({ kind: "welcome", protocolVersion: msg.protocol_version });
      } else if (msg.type === "error" && msg.fatal) {
        this.transition({ kind: "server_error", fatal: true, message: msg.message ?? msg.code ?? "fatal error" });
      }
      this.opts.onMessage?.(msg);
    };
    sock.onerror = () => { /* close follows; handled there */ };
    sock.onclose = () => {
      this.socket = null;
      this.transition({ kind: "closed" });
      const delay = backoffDelayMs(this.state.attempts);
      const timer = this.opts.setTimer ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
      timer(() => this.connect(), delay);
    };
  }

  /** Sends only in the live state; returns whether the message went out. */
  send(msg: object): boolean {
    if (this.state.status !== "live" || !this.socket) return false;
    this.socket.send(JSON.stringify(msg));
    return true;
  }

  private transition(ev: FsmEvent): void {
    this.state = connectionFsm(this.state, ev);
    this.opts.onState?.(this.state);
  }
}
