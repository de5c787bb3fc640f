/** Thin client for the workbench REST API. */

import { consumeStream } from "./events.js";
import type { ApiEvent, ArtifactRef, SessionConfig } from "./types.js";

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  async createSession(config: Partial<SessionConfig> = {}): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config),
    });
    if (!resp.ok) throw new Error(`session create failed: ${resp.status}`);
    const data = (await resp.json()) as { session_id: string };
    return data.session_id;
  }

  async sendMessage(
    sessionId: string,
    text: string,
    onEvent: (event: ApiEvent) => void,
    attachments: string[] = [],
    inputs: Record<string, string> = {},
  ): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, attachments, inputs }),
    });
    if (!resp.ok) throw new Error(`message failed: ${resp.status}`);
    if (!resp.body) throw new Error("response body missing");
    await consumeStream(resp.body, onEvent);
  }

  async uploadFile(sessionId: string, file: File): Promise<{ artifact_id: string; kind: string }> {
    const form = new FormData();
    form.append("file", file);
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${sessionId}/files`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) throw new Error(`upload failed: ${resp.status}`);
    return (await resp.json()) as { artifact_id: string; kind: string };
  }

  /** Exact stored bytes of an artifact. */
  async fetchArtifact(artifactId: string): Promise<Uint8Array> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/artifacts/${artifactId}`);
    if (!resp.ok) throw new Error(`artifact fetch failed: ${resp.status}`);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async getConfig(sessionId: string): Promise<SessionConfig> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${sessionId}/config`);
    if (!resp.ok) throw new Error(`config fetch failed: ${resp.status}`);
    return (await resp.json()) as SessionConfig;
  }

  async putConfig(sessionId: string, updates: Partial<SessionConfig>): Promise<SessionConfig> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${sessionId}/config`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(updates),
    });
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`config update rejected (${resp.status}): ${detail}`);
    }
    return (await resp.json()) as SessionConfig;
  }

  async sendFeedback(
    sessionId: string,
    text: string,
    onEvent: (event: ApiEvent) => void,
  ): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${sessionId}/feedback`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (!resp.ok) throw new Error(`feedback failed: ${resp.status}`);
    if (!resp.body) throw new Error("response body missing");
    await consumeStream(resp.body, onEvent);
  }

  async sessionExists(sessionId: string): Promise<boolean> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${sessionId}/config`);
    return resp.ok;
  }
}
