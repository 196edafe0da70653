/** Wires the API client, the event-stream consumer, the reducer, and the
 * canvas views together. All UI state flows through `reduce`. */

import { ApiClient, ApiError } from "./api.js";
import { EventStreamClient } from "./sse.js";
import { initialViewModel, reduce, type Action, type ViewModel } from "./state.js";
import type { StreamEnvelope } from "./types.js";
import { ChamberView, TelemetryView } from "./view.js";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

let model: ViewModel = initialViewModel();
let stream: EventStreamClient | null = null;
let api: ApiClient | null = null;
let sessionId = "";

const chamber = new ChamberView(
  $("chamber") as HTMLCanvasElement,
  (deviceId, x, y) => {
    if (!api || !sessionId) return;
    dispatch({
      type: "command-issued",
      key: `placement:${deviceId}`,
      label: `place ${deviceId} at (${x.toFixed(1)}, ${y.toFixed(1)})`,
      nowMs: Date.now(),
    });
    api.putPlacement(sessionId, deviceId, [x, y, currentZ(deviceId)])
      .catch((err) => rejectCommand(`placement:${deviceId}`, err));
  },
);
const telemetry = new TelemetryView($("telemetry") as HTMLCanvasElement);

function currentZ(deviceId: string): number {
  // keep the device's current height; the top-down view only edits x/y
  const record = model.devices.get(deviceId);
  return record ? 1.5 : 1.5;
}

function dispatch(action: Action): void {
  model = reduce(model, action);
  render();
}

function rejectCommand(key: string, err: unknown): void {
  const reason = err instanceof ApiError ? `${err.kind}: ${err.detail}` : String(err);
  dispatch({ type: "command-rejected", key, reason });
}

function render(): void {
  $("conn").textContent = model.connection +
    (model.connectionDetail ? ` (${model.connectionDetail})` : "");
  $("conn").className = `badge ${model.connection}`;
  const s = model.session;
  $("session-info").textContent = s
    ? `${s.session_id}  ${s.scenario_ref}  ${s.policy}  ${s.state}`
    : "no session";
  $("events").textContent = model.eventLog.slice(-12).join("\n");
  $("failures").textContent = model.failures.slice(-4).join("\n");
  $("pending").textContent =
    [...model.pending.values()].map((p) => p.label).join(", ");
  chamber.render(model);
  telemetry.render(model);
}

async function connect(): Promise<void> {
  const token = ($("token") as HTMLInputElement).value.trim();
  sessionId = ($("session") as HTMLInputElement).value.trim();
  if (!token || !sessionId) return;
  stream?.stop();
  model = initialViewModel();
  api = new ApiClient("", token);
  dispatch({ type: "connection", state: "connecting" });
  try {
    const session = await api.getSession(sessionId);
    dispatch({ type: "session", session });
  } catch (err) {
    if (err instanceof ApiError) {
      const state = err.kind === "auth" ? "auth-error"
        : err.kind === "forbidden" ? "forbidden"
        : err.kind === "not-found" ? "not-found" : "closed";
      dispatch({ type: "connection", state, detail: err.detail });
      return;
    }
    throw err;
  }
  stream = new EventStreamClient("", sessionId, token, {
    onFrame: (frame) =>
      dispatch({ type: "stream", envelope: frame.data as unknown as StreamEnvelope }),
    onStatus: (status) => {
      if (status === "gap") dispatch({ type: "stream-gap" });
      else dispatch({ type: "connection", state: status });
    },
    onHttpError: (status) => {
      const state = status === 401 ? "auth-error"
        : status === 403 ? "forbidden"
        : status === 404 ? "not-found" : "closed";
      dispatch({ type: "connection", state, detail: `http ${status}` });
    },
  });
  void stream.run();
}

function issue(key: string, label: string, call: () => Promise<unknown>): void {
  if (!api || !sessionId) return;
  dispatch({ type: "command-issued", key, label, nowMs: Date.now() });
  call().catch((err) => rejectCommand(key, err));
}

$("connect").addEventListener("click", () => void connect());
$("start").addEventListener("click", () => {
  if (!api || !sessionId) return;
  void api.transition(sessionId, "SCHEDULED")
    .then(() => api!.transition(sessionId, "RUNNING"))
    .catch((err) => rejectCommand("transition", err));
});
$("inject").addEventListener("click", () => {
  issue("obstacle:ui-blocker", "inject blocker", () =>
    api!.injectObstacle(sessionId, {
      id: "ui-blocker",
      min: [4.75, 2.5, 0.0],
      max: [5.25, 3.0, 3.0],
      material_loss_db: 80.0,
    }, {
      interpolation: "LINEAR",
      waypoints: [
        { t: 0.0, position: [5.0, 5.5, 1.5] },
        { t: 4.0, position: [5.0, 0.5, 1.5] },
      ],
    }));
});
$("steer").addEventListener("click", () => {
  issue("ris:lis", "steer panel", () => api!.putRisSteerPreset(sessionId, "lis", 2));
});
$("switch").addEventListener("click", () => {
  issue("switch:VIA_LIS:lis", "switch to panel path", () =>
    api!.proactiveSwitch(sessionId, "VIA_LIS:lis"));
});

setInterval(() => dispatch({ type: "tick", nowMs: Date.now() }), 1000);
render();
