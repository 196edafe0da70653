/** Server-sent-events consumption over fetch (EventSource cannot carry an
 * Authorization header). The parser is incremental and tolerates frames
 * split across network chunks; the client reconnects with exponential
 * backoff, resuming from the last seen event id so no point is duplicated. */

import type { SseFrame } from "./types.js";

/** Incremental parser: feed raw text chunks, collect complete frames. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let sep: number;
    while ((sep = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      const frame = parseBlock(block);
      if (frame) frames.push(frame);
    }
    return frames;
  }
}

function parseBlock(block: string): SseFrame | null {
  let id = 0;
  let event = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("id:")) id = Number(line.slice(3).trim());
    else if (line.startsWith("event:")) event = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
  }
  if (dataLines.length === 0) return null;
  try {
    return { id, event, data: JSON.parse(dataLines.join("\n")) };
  } catch {
    return null;
  }
}

/** Backoff schedule: 0.5 s doubling to a 10 s ceiling. */
export function backoffDelayMs(attempt: number): number {
  return Math.min(500 * 2 ** Math.max(0, attempt), 10_000);
}

export interface StreamCallbacks {
  onFrame(frame: SseFrame): void;
  onStatus(status: "connecting" | "live" | "reconnecting" | "closed" | "gap",
           detail?: string): void;
  onHttpError(status: number): void;
}

export class EventStreamClient {
  private lastEventId = 0;
  private stopped = false;
  private attempt = 0;

  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    private readonly token: string,
    private readonly callbacks: StreamCallbacks,
    private readonly fetchImpl: typeof fetch = fetch,
    private readonly sleep: (ms: number) => Promise<void> =
      (ms) => new Promise((resolve) => setTimeout(resolve, ms)),
  ) {}

  stop(): void {
    this.stopped = true;
  }

  get cursor(): number {
    return this.lastEventId;
  }

  async run(): Promise<void> {
    while (!this.stopped) {
      this.callbacks.onStatus(this.attempt === 0 ? "connecting" : "reconnecting");
      try {
        const response = await this.fetchImpl(
          `${this.baseUrl}/v1/sessions/${this.sessionId}/events`,
          {
            headers: {
              Authorization: `Bearer ${this.token}`,
              "Last-Event-ID": String(this.lastEventId),
              Accept: "text/event-stream",
            },
          },
        );
        if (!response.ok) {
          this.callbacks.onHttpError(response.status);
          return; // auth/404 problems are terminal, not retryable
        }
        if (this.attempt > 0) this.callbacks.onStatus("gap");
        this.callbacks.onStatus("live");
        this.attempt = 0;
        await this.consume(response);
        if (!this.stopped) {
          // clean end of stream: session reached a terminal state
          this.callbacks.onStatus("closed");
          return;
        }
      } catch {
        // network drop: fall through to backoff and resume from the cursor
      }
      if (this.stopped) return;
      await this.sleep(backoffDelayMs(this.attempt));
      this.attempt += 1;
    }
  }

  private async consume(response: Response): Promise<void> {
    const reader = response.body?.getReader();
    if (!reader) return;
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
        if (frame.id <= this.lastEventId) continue; // de-duplicate on resume
        this.lastEventId = frame.id;
        this.callbacks.onFrame(frame);
      }
      if (this.stopped) {
        await reader.cancel();
        return;
      }
    }
  }
}
