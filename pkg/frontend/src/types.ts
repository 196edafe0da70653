/** Shapes of the REST and event-stream payloads the dashboard consumes.
 * Everything rendered derives from these; the client performs no physics. */

export interface SessionSummary {
  session_id: string;
  owner: string;
  scenario_ref: string;
  policy: string;
  state: string;
  result_dataset_id: string | null;
  summary: Record<string, unknown> | null;
}

export interface TraceRecord {
  session_id: string;
  timestamp_s: number;
  kind: "RADIO" | "DETECTION" | "EVENT" | "RIS_PROFILE";
  device_id: string;
  position_m: [number, number, number];
  payload: Record<string, unknown>;
}

export interface RadioPayload {
  rx_power_dbm: number;
  snr_db: number;
  mcs: number | null;
  throughput_bps: number;
  serving_path: string;
  beam_index: number;
  fsm_mode: string;
}

/** One server-sent event frame as parsed off the wire. */
export interface SseFrame {
  id: number;
  event: string;
  data: Record<string, unknown>;
}

export type StreamEnvelope =
  | { type: "RADIO" | "DETECTION" | "EVENT" | "RIS_PROFILE"; record: TraceRecord; ack_count: number }
  | { type: "SESSION"; state: string; summary: Record<string, unknown> | null }
  | { type: "ERROR"; error: string };

export interface TelemetryPoint {
  t: number;
  snrDb: number;
  throughputBps: number;
  fsmMode: string;
  servingPath: string;
}

export interface DeviceMarker {
  id: string;
  role: "tx" | "rx" | "lis" | "camera";
  x: number;
  y: number;
}

export interface ObjectMarker {
  id: string;
  x: number;
  y: number;
  lastSeenT: number;
}

export interface PendingCommand {
  key: string;
  label: string;
  issuedAtMs: number;
}

export type ConnectionState =
  | "idle"
  | "connecting"
  | "live"
  | "reconnecting"
  | "auth-error"
  | "forbidden"
  | "not-found"
  | "closed";
