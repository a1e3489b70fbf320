import { ConsoleClient } from "./connection.js";
import {
  DEFAULT_BINDING, clutchEdgeMessage, dragToWristDelta, pointerToMasterDelta,
  wheelToMasterDelta, InputContext,
} from "./input.js";
import { DEFAULT_CAMERA } from "./projection.js";
import { renderViewport, ViewportModel } from "./render.js";
import { Snapshot, Telemetry } from "./protocol.js";
import { telemetryRows } from "./telemetry.js";

const params = new URLSearchParams(location.search);
const consoleId = params.get("console") ?? "console1";
const url = params.get("url") ?? `ws://${location.hostname || "localhost"}:8765`;

let latestSnapshot: Snapshot | null = null;
let clutched = false;
let engagedPsm: string | null = null;

const statusEl = document.getElementById("status") as HTMLElement;
const telemetryEl = document.getElementById("telemetry") as HTMLElement;
const routingEl = document.getElementById("routing") as HTMLElement;
const canvases = [
  document.getElementById("viewport-a") as HTMLCanvasElement,
  document.getElementById("viewport-b") as HTMLCanvasElement,
];

const client = new ConsoleClient({
  url,
  consoleId,
  onState: (s) => {
    statusEl.textContent = s.status + (s.reason ? ` — ${s.reason}` : "");
    statusEl.className = s.status;
  },
  onMessage: (msg) => {
    if (msg.type === "snapshot") {
      latestSnapshot = msg as Snapshot;
      renderRouting(latestSnapshot);
    } else if (msg.type === "telemetry") {
      renderTelemetry(msg as Telemetry);
    }
  },
});
client.connect();

function ctx(): InputContext {
  return { live: client.state.status === "live", clutched, masterSide: "left" };
}

function renderTelemetry(t: Telemetry): void {
  telemetryEl.innerHTML = "";
  for (const row of telemetryRows(t)) {
    const div = document.createElement("div");
    div.textContent = `${row.label}: ${row.value}`;
    telemetryEl.appendChild(div);
  }
}

function renderRouting(snap: Snapshot): void {
  routingEl.innerHTML = "";
  for (const [psm, ecm] of Object.entries(snap.routing.psm_to_ecm)) {
    const owner = snap.routing.ownership[psm] ?? "free";
    const row = document.createElement("div");
    const label = document.createElement("span");
    label.textContent = `${psm} @ ${ecm} (${owner}) `;
    row.appendChild(label);
    const btn = document.createElement("button");
    btn.textContent = engagedPsm === psm ? "engaged" : "engage";
    btn.onclick = () => {
      client.send({ type: "routing", cmd: { op: "acquire_psm", console: consoleId, psm } });
      client.send({ type: "engage", master_side: "left", psm });
      engagedPsm = psm;
    };
    row.appendChild(btn);
    routingEl.appendChild(row);
  }
}

function drawViewport(canvas: HTMLCanvasElement, model: ViewportModel): void {
  const g = canvas.getContext("2d");
  if (!g) return;
  g.fillStyle = "#14141a";
  g.fillRect(0, 0, canvas.width, canvas.height);
  if (model.warning) {
    g.fillStyle = "#e0a040";
    g.font = "14px sans-serif";
    g.fillText(model.warning, 12, 24);
    return;
  }
  const sx = canvas.width / DEFAULT_CAMERA.width;
  const sy = canvas.height / DEFAULT_CAMERA.height;
  for (const p of model.primitives) {
    g.globalAlpha = p.dimmed ? 0.3 : 1.0;
    g.strokeStyle = g.fillStyle = p.color;
    if (p.kind === "segment") {
      g.beginPath();
      g.moveTo(p.from[0] * sx, p.from[1] * sy);
      g.lineTo(p.to[0] * sx, p.to[1] * sy);
      g.stroke();
    } else {
      g.beginPath();
      g.arc(p.at[0] * sx, p.at[1] * sy, 4, 0, 2 * Math.PI);
      g.fill();
    }
    if (p.label) {
      g.font = "10px sans-serif";
      const at = p.kind === "segment" ? p.to : p.at;
      g.fillText(p.label, at[0] * sx + 6, at[1] * sy - 6);
    }
  }
  g.globalAlpha = 1.0;
  g.fillStyle = "#888";
  g.font = "12px sans-serif";
  g.fillText(model.ecmId + (clutched ? "  [CLUTCH]" : ""), 8, canvas.height - 8);
}

function frame(): void {
  if (latestSnapshot) {
    const ecms = Object.keys(latestSnapshot.arms)
      .filter((id) => latestSnapshot!.arms[id].kind === "ECM")
      .sort();
    canvases.forEach((canvas, i) => {
      const model = renderViewport(latestSnapshot!, ecms[i] ?? `ECM-${i}`, DEFAULT_CAMERA);
      drawViewport(canvas, model);
    });
  }
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

let dragging = false;
for (const canvas of canvases) {
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointerup", () => { dragging = false; });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const msg = ev.shiftKey
      ? dragToWristDelta(ev.movementX, ev.movementY, DEFAULT_BINDING, ctx())
      : pointerToMasterDelta(ev.movementX, ev.movementY, DEFAULT_BINDING, ctx());
    if (msg) client.send(msg);
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const msg = wheelToMasterDelta(Math.sign(ev.deltaY), DEFAULT_BINDING, ctx());
    if (msg) client.send(msg);
  });
}

window.addEventListener("keydown", (ev) => {
  if (ev.code === "Space" && !ev.repeat) {
    clutched = true;
    const msg = clutchEdgeMessage(true, { ...ctx(), clutched: false });
    if (msg) client.send(msg);
  }
});
window.addEventListener("keyup", (ev) => {
  if (ev.code === "Space") {
    clutched = false;
    const msg = clutchEdgeMessage(false, ctx());
    if (msg) client.send(msg);
  }
});
