/** Thin typed client for the session service. Maps HTTP failures onto the
 * distinct user-visible states the UI shows (auth, forbidden, not-found,
 * conflict, validation). */

import type { SessionSummary } from "./types.js";

export type ApiErrorKind =
  | "auth"        // 401: token unknown or missing
  | "forbidden"   // 403: operation not granted or quota
  | "not-found"   // 404
  | "conflict"    // 409: illegal transition / not running
  | "invalid"     // 422
  | "server";     // anything else

export class ApiError extends Error {
  constructor(
    public readonly kind: ApiErrorKind,
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${kind} (${status}): ${detail}`);
  }
}

export function errorKindFor(status: number): ApiErrorKind {
  switch (status) {
    case 401: return "auth";
    case 403: return "forbidden";
    case 404: return "not-found";
    case 409: return "conflict";
    case 422: return "invalid";
    default: return "server";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const doc = await response.json();
        detail = doc.detail ?? doc.error ?? detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(errorKindFor(response.status), response.status, detail);
    }
    return (await response.json()) as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("GET", "/v1/healthz");
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.request("GET", `/v1/sessions/${sessionId}`);
  }

  createSession(scenarioRef: string, policy: string, realtime: boolean): Promise<SessionSummary> {
    return this.request("POST", "/v1/sessions", {
      scenario_ref: scenarioRef,
      policy,
      realtime,
    });
  }

  transition(sessionId: string, target: string): Promise<SessionSummary> {
    return this.request("POST", `/v1/sessions/${sessionId}/transition`, { target });
  }

  /** Placement command; coordinates must already be snapped by the caller. */
  putPlacement(sessionId: string, deviceId: string, position: [number, number, number]):
      Promise<{ queued: boolean; device_id: string; position: number[] }> {
    return this.request("PUT", `/v1/sessions/${sessionId}/placement/${deviceId}`, {
      position,
    });
  }

  putRisSteerPreset(sessionId: string, lisId: string, quantizationBits?: number):
      Promise<{ queued: boolean }> {
    return this.request("PUT", `/v1/sessions/${sessionId}/ris/${lisId}/profile`, {
      preset: "steer",
      ...(quantizationBits ? { quantization_bits: quantizationBits } : {}),
    });
  }

  injectObstacle(sessionId: string, obstacle: {
    id: string; min: number[]; max: number[]; material_loss_db?: number;
  }, trajectory?: { interpolation: string; waypoints: { t: number; position: number[] }[] }):
      Promise<{ queued: boolean; obstacle_id: string }> {
    return this.request("POST", `/v1/sessions/${sessionId}/commands`, {
      type: "inject_obstacle",
      obstacle,
      ...(trajectory ? { trajectory } : {}),
    });
  }

  proactiveSwitch(sessionId: string, targetKey: string): Promise<{ queued: boolean }> {
    return this.request("POST", `/v1/sessions/${sessionId}/commands`, {
      type: "proactive_switch",
      target_key: targetKey,
      object_id: "operator",
    });
  }
}
