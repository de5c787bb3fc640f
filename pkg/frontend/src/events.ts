/** Incremental parser for the newline-delimited JSON event stream.
 *
 * The server writes one JSON object per line; fetch chunks can split a
 * line anywhere, so the parser buffers until each newline.
 */

import type { ApiEvent } from "./types.js";

export class NdjsonParser {
  private buffer = "";

  /** Feed one chunk; returns every complete event it closed. */
  push(chunk: string): ApiEvent[] {
    this.buffer += chunk;
    const events: ApiEvent[] = [];
    let index: number;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, index).trim();
      this.buffer = this.buffer.slice(index + 1);
      if (!line) continue;
      try {
        events.push(JSON.parse(line) as ApiEvent);
      } catch {
        events.push({ type: "error", error: `malformed event: ${line.slice(0, 80)}` });
      }
    }
    return events;
  }

  /** Flush a trailing line that arrived without a final newline. */
  end(): ApiEvent[] {
    const rest = this.buffer.trim();
    this.buffer = "";
    if (!rest) return [];
    try {
      return [JSON.parse(rest) as ApiEvent];
    } catch {
      return [{ type: "error", error: `malformed event: ${rest.slice(0, 80)}` }];
    }
  }
}

/** Read a streaming response body, invoking onEvent per parsed event. */
export async function consumeStream(
  body: ReadableStream<Uint8Array>,
  onEvent: (event: ApiEvent) => void,
): Promise<void> {
  const parser = new NdjsonParser();
  const reader = body.getReader();
  const decoder = new TextDecoder();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    for (const event of parser.push(decoder.decode(value, { stream: true }))) {
      onEvent(event);
    }
  }
  for (const event of parser.end()) onEvent(event);
}
