/** Canvas rendering: top-down chamber projection (z collapsed) and the
 * telemetry strip. Pure drawing — no physics, no derived numbers. */

import { decimate, snapToGrid, type ViewModel } from "./state.js";
import type { DeviceMarker } from "./types.js";

const CHAMBER_FALLBACK = { w: 10, h: 6 }; // metres, until geometry arrives
const ROLE_COLORS: Record<DeviceMarker["role"], string> = {
  tx: "#2f81f7",
  rx: "#3fb950",
  lis: "#d29922",
  camera: "#8957e5",
};

export interface DragState {
  deviceId: string;
  x: number;
  y: number;
}

export class ChamberView {
  drag: DragState | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly onDrop: (deviceId: string, x: number, y: number) => void,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
  }

  private model: ViewModel | null = null;

  private scale(): { sx: number; sy: number } {
    return {
      sx: this.canvas.width / CHAMBER_FALLBACK.w,
      sy: this.canvas.height / CHAMBER_FALLBACK.h,
    };
  }

  private toWorld(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    const { sx, sy } = this.scale();
    return {
      x: (e.clientX - rect.left) * (this.canvas.width / rect.width) / sx,
      y: CHAMBER_FALLBACK.h
        - (e.clientY - rect.top) * (this.canvas.height / rect.height) / sy,
    };
  }

  private pointerDown(e: PointerEvent): void {
    if (!this.model) return;
    const p = this.toWorld(e);
    for (const device of this.model.devices.values()) {
      if (device.role !== "rx" && device.role !== "tx") continue; // placeable
      if (Math.hypot(device.x - p.x, device.y - p.y) < 0.4) {
        this.drag = { deviceId: device.id, x: device.x, y: device.y };
        this.canvas.setPointerCapture(e.pointerId);
        return;
      }
    }
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.drag) return;
    const p = this.toWorld(e);
    this.drag.x = p.x;
    this.drag.y = p.y;
    if (this.model) this.render(this.model);
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.drag) return;
    const p = this.toWorld(e);
    this.onDrop(this.drag.deviceId, snapToGrid(p.x), snapToGrid(p.y));
    this.drag = null;
    this.canvas.releasePointerCapture(e.pointerId);
  }

  render(model: ViewModel): void {
    this.model = model;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { sx, sy } = this.scale();
    const X = (x: number) => x * sx;
    const Y = (y: number) => this.canvas.height - y * sy;

    ctx.fillStyle = "#0d1117";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.strokeStyle = "#30363d";
    ctx.strokeRect(0.5, 0.5, this.canvas.width - 1, this.canvas.height - 1);

    // serving path ray between tx and rx (via the panel when serving)
    const tx = [...model.devices.values()].find((d) => d.role === "tx");
    const rx = [...model.devices.values()].find((d) => d.role === "rx");
    const lis = [...model.devices.values()].find((d) => d.role === "lis");
    const latest = model.telemetry[model.telemetry.length - 1];
    const serving = latest ? latest.servingPath : "DIRECT";
    if (tx && rx) {
      ctx.strokeStyle = "#58a6ff";
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.moveTo(X(tx.x), Y(tx.y));
      if (serving.startsWith("VIA_LIS") && lis) {
        ctx.lineTo(X(lis.x), Y(lis.y));
      }
      ctx.lineTo(X(rx.x), Y(rx.y));
      ctx.stroke();
      ctx.lineWidth = 1;
    }

    for (const object of model.objects.values()) {
      ctx.fillStyle = "#f8514966";
      ctx.beginPath();
      ctx.arc(X(object.x), Y(object.y), 10, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillStyle = "#f85149";
      ctx.fillText(object.id, X(object.x) + 12, Y(object.y));
    }

    for (const device of model.devices.values()) {
      const dragging = this.drag?.deviceId === device.id;
      const x = dragging ? this.drag!.x : device.x;
      const y = dragging ? this.drag!.y : device.y;
      ctx.fillStyle = ROLE_COLORS[device.role];
      ctx.beginPath();
      ctx.arc(X(x), Y(y), dragging ? 9 : 7, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillText(device.id, X(x) + 10, Y(y) - 6);
      if (model.pending.has(`placement:${device.id}`)) {
        ctx.strokeStyle = "#d29922";
        ctx.beginPath();
        ctx.arc(X(x), Y(y), 12, 0, 2 * Math.PI);
        ctx.stroke();
      }
    }
  }
}

export class TelemetryView {
  constructor(private readonly canvas: HTMLCanvasElement) {}

  render(model: ViewModel): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.fillStyle = "#0d1117";
    ctx.fillRect(0, 0, w, h);
    const points = decimate(model.telemetry, Math.max(1, w * 10));
    if (points.length < 2) return;
    const t0 = points[0].t;
    const t1 = points[points.length - 1].t;
    const span = Math.max(t1 - t0, 1e-9);
    const snrs = points.map((p) => p.snrDb);
    const lo = Math.min(...snrs, 0);
    const hi = Math.max(...snrs, 1);
    const X = (t: number) => ((t - t0) / span) * w;
    const Y = (snr: number) => h - ((snr - lo) / (hi - lo)) * (h - 20) - 10;

    // FSM mode band along the bottom
    for (let i = 1; i < points.length; i++) {
      ctx.fillStyle = points[i].fsmMode === "TRACKING" ? "#3fb95033"
        : points[i].fsmMode === "SWITCHING" ? "#d2992266" : "#f8514966";
      ctx.fillRect(X(points[i - 1].t), h - 8, X(points[i].t) - X(points[i - 1].t), 8);
    }

    // reconnect gaps
    ctx.strokeStyle = "#f85149";
    for (const gap of model.gaps) {
      if (gap < t0 || gap > t1) continue;
      ctx.beginPath();
      ctx.setLineDash([3, 3]);
      ctx.moveTo(X(gap), 0);
      ctx.lineTo(X(gap), h);
      ctx.stroke();
      ctx.setLineDash([]);
    }

    ctx.strokeStyle = "#58a6ff";
    ctx.beginPath();
    points.forEach((p, i) => {
      if (i === 0) ctx.moveTo(X(p.t), Y(p.snrDb));
      else ctx.lineTo(X(p.t), Y(p.snrDb));
    });
    ctx.stroke();

    const last = points[points.length - 1];
    ctx.fillStyle = "#c9d1d9";
    ctx.fillText(
      `snr ${last.snrDb} dB   ${(last.throughputBps / 1e6).toFixed(1)} Mbit/s   ` +
      `${last.fsmMode}   ${last.servingPath}`,
      8, 14);
  }
}
