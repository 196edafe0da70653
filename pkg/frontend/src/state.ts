/** Single reducer holding the whole view model. Every number rendered comes
 * verbatim from a REST response or event-stream payload; the reducer only
 * selects, windows, and orders — it never simulates. */

import type {
  ConnectionState,
  DeviceMarker,
  ObjectMarker,
  PendingCommand,
  RadioPayload,
  SessionSummary,
  StreamEnvelope,
  TelemetryPoint,
  TraceRecord,
} from "./types.js";

export const TELEMETRY_WINDOW_S = 30;
export const PLACEMENT_GRID_M = 0.1;
export const PENDING_TIMEOUT_MS = 5000;

export interface ViewModel {
  connection: ConnectionState;
  connectionDetail: string;
  session: SessionSummary | null;
  devices: Map<string, DeviceMarker>;
  objects: Map<string, ObjectMarker>;
  telemetry: TelemetryPoint[];
  /** timestamps (session time) where the stream reconnected; rendered as gaps */
  gaps: number[];
  eventLog: string[];
  pending: Map<string, PendingCommand>;
  failures: string[];
  lastAckCount: number;
}

export function initialViewModel(): ViewModel {
  return {
    connection: "idle",
    connectionDetail: "",
    session: null,
    devices: new Map(),
    objects: new Map(),
    telemetry: [],
    gaps: [],
    eventLog: [],
    pending: new Map(),
    failures: [],
    lastAckCount: 0,
  };
}

export type Action =
  | { type: "connection"; state: ConnectionState; detail?: string }
  | { type: "session"; session: SessionSummary }
  | { type: "stream"; envelope: StreamEnvelope }
  | { type: "stream-gap" }
  | { type: "command-issued"; key: string; label: string; nowMs: number }
  | { type: "command-rejected"; key: string; reason: string }
  | { type: "tick"; nowMs: number };

/** Snap a coordinate to the placement grid (0.1 m cells). */
export function snapToGrid(value: number, step: number = PLACEMENT_GRID_M): number {
  return Math.round(value / step) * step;
}

/** Keep at most `maxPoints` points by uniform stride; first and last kept. */
export function decimate<T>(points: T[], maxPoints: number): T[] {
  if (maxPoints <= 0 || points.length <= maxPoints) return points;
  const stride = (points.length - 1) / (maxPoints - 1);
  const out: T[] = [];
  for (let i = 0; i < maxPoints; i++) {
    out.push(points[Math.round(i * stride)]);
  }
  return out;
}

function roleFor(kind: TraceRecord["kind"]): DeviceMarker["role"] {
  switch (kind) {
    case "RADIO": return "rx";
    case "EVENT": return "tx";
    case "RIS_PROFILE": return "lis";
    case "DETECTION": return "camera";
  }
}

function applyRecord(model: ViewModel, record: TraceRecord): void {
  model.devices.set(record.device_id, {
    id: record.device_id,
    role: roleFor(record.kind),
    x: record.position_m[0],
    y: record.position_m[1],
  });

  if (record.kind === "RADIO") {
    const p = record.payload as unknown as RadioPayload;
    model.telemetry.push({
      t: record.timestamp_s,
      snrDb: p.snr_db,
      throughputBps: p.throughput_bps,
      fsmMode: p.fsm_mode,
      servingPath: p.serving_path,
    });
    const cutoff = record.timestamp_s - TELEMETRY_WINDOW_S;
    while (model.telemetry.length > 0 && model.telemetry[0].t < cutoff) {
      model.telemetry.shift();
    }
    model.gaps = model.gaps.filter((t) => t >= cutoff);
  } else if (record.kind === "DETECTION") {
    const pos = record.payload.world_position_m as number[];
    const objectId = String(record.payload.object_id);
    model.objects.set(objectId, {
      id: objectId,
      x: pos[0],
      y: pos[1],
      lastSeenT: record.timestamp_s,
    });
  } else if (record.kind === "EVENT") {
    const events = (record.payload.events as Record<string, unknown>[]) ?? [];
    for (const event of events) {
      model.eventLog.push(
        `t=${record.timestamp_s.toFixed(3)} ${JSON.stringify(event)}`);
      if (model.eventLog.length > 200) model.eventLog.shift();
      confirmPending(model, event);
    }
  }
}

function confirmPending(model: ViewModel, event: Record<string, unknown>): void {
  const name = event.event;
  if (name === "command_applied" && typeof event.target === "string") {
    model.pending.delete(`placement:${event.target}`);
    model.pending.delete(`ris:${event.target}`);
    model.pending.delete(`obstacle:${event.target}`);
  } else if (name === "proactive_switch" || name === "switch_complete") {
    for (const key of [...model.pending.keys()]) {
      if (key.startsWith("switch:")) model.pending.delete(key);
    }
  }
}

export function reduce(model: ViewModel, action: Action): ViewModel {
  switch (action.type) {
    case "connection":
      model.connection = action.state;
      model.connectionDetail = action.detail ?? "";
      if (action.state === "auth-error") {
        // never show stale data behind an auth failure
        model.telemetry = [];
        model.devices = new Map();
        model.objects = new Map();
        model.session = null;
      }
      return model;
    case "session":
      model.session = action.session;
      return model;
    case "stream-gap":
      if (model.telemetry.length > 0) {
        model.gaps.push(model.telemetry[model.telemetry.length - 1].t);
      }
      return model;
    case "stream": {
      const envelope = action.envelope;
      if (envelope.type === "SESSION") {
        if (model.session) {
          model.session.state = envelope.state;
          model.session.summary = envelope.summary;
        }
        model.eventLog.push(`session -> ${envelope.state}`);
      } else if (envelope.type === "ERROR") {
        model.failures.push(envelope.error);
      } else {
        model.lastAckCount = envelope.ack_count;
        applyRecord(model, envelope.record);
      }
      return model;
    }
    case "command-issued":
      model.pending.set(action.key, {
        key: action.key,
        label: action.label,
        issuedAtMs: action.nowMs,
      });
      return model;
    case "command-rejected":
      model.pending.delete(action.key);
      model.failures.push(action.reason);
      if (model.failures.length > 20) model.failures.shift();
      return model;
    case "tick":
      for (const [key, cmd] of [...model.pending.entries()]) {
        if (action.nowMs - cmd.issuedAtMs > PENDING_TIMEOUT_MS) {
          model.pending.delete(key);
          model.failures.push(`${cmd.label}: no applied-event within ${
            PENDING_TIMEOUT_MS / 1000} s`);
        }
      }
      return model;
  }
}
