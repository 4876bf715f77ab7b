/**
 * Server-sent events over fetch with automatic reconnect.
 *
 * The engine pushes job progress as text/event-stream. A dropped
 * connection schedules a reconnect with exponential backoff (capped),
 * so a queue screen left open recovers by itself after worker or
 * network hiccups.
 */

import type { FetchLike } from "./api.js";

export interface SseHandlers {
  onEvent: (event: string, data: string) => void;
  onConnect?: () => void;
  onDisconnect?: (willReconnect: boolean) => void;
}

export interface SseOptions {
  fetchImpl?: FetchLike;
  initialBackoffMs?: number;
  maxBackoffMs?: number;
  maxReconnects?: number;
}

export class EventStream {
  private closed = false;
  private attempts = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private readonly fetchImpl: FetchLike;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly maxReconnects: number;

  constructor(
    private readonly url: string,
    private readonly handlers: SseHandlers,
    options: SseOptions = {},
  ) {
    this.fetchImpl = options.fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
    this.initialBackoffMs = options.initialBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 10_000;
    this.maxReconnects = options.maxReconnects ?? Infinity;
    void this.connect();
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async connect(): Promise<void> {
    if (this.closed) return;
    let sawEnd = false;
    try {
      const response = await this.fetchImpl(this.url, {
        headers: { Accept: "text/event-stream" },
      });
      if (!response.ok || response.body === null) {
        throw new Error(`event stream failed with status ${response.status}`);
      }
      this.attempts = 0;
      this.handlers.onConnect?.();
      sawEnd = await this.pump(response.body);
    } catch {
      // fall through to the reconnect schedule
    }
    if (this.closed || sawEnd) {
      this.handlers.onDisconnect?.(false);
      return;
    }
    this.scheduleReconnect();
  }

  /** Reads the stream until it ends; returns true when the server sent
   * a terminal `end` event (no reconnect needed). */
  private async pump(body: ReadableStream<Uint8Array>): Promise<boolean> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    let ended = false;
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let boundary = buffer.indexOf("\n\n");
      while (boundary >= 0) {
        const block = buffer.slice(0, boundary);
        buffer = buffer.slice(boundary + 2);
        boundary = buffer.indexOf("\n\n");
        let event = "message";
        const dataLines: string[] = [];
        for (const line of block.split("\n")) {
          if (line.startsWith("event:")) event = line.slice(6).trim();
          else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
        }
        if (dataLines.length > 0 || event !== "message") {
          if (this.closed) return true;
          this.handlers.onEvent(event, dataLines.join("\n"));
          if (event === "end") ended = true;
        }
      }
      if (this.closed) return true;
    }
    return ended;
  }

  private scheduleReconnect(): void {
    if (this.attempts >= this.maxReconnects) {
      this.handlers.onDisconnect?.(false);
      return;
    }
    const backoff = Math.min(
      this.initialBackoffMs * 2 ** this.attempts,
      this.maxBackoffMs,
    );
    this.attempts += 1;
    this.handlers.onDisconnect?.(true);
    this.timer = setTimeout(() => void this.connect(), backoff);
  }
}
