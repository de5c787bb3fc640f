/** Settings panel model. Client-side validation mirrors the server rules
 * so obviously invalid edits never leave the browser; the server remains
 * the authority and its 400s surface inline. */

import type { ApiClient } from "./api.js";
import type { SessionConfig } from "./types.js";

export interface ValidationResult {
  ok: boolean;
  errors: Partial<Record<keyof SessionConfig, string>>;
}

export function validateConfig(updates: Partial<SessionConfig>): ValidationResult {
  const errors: ValidationResult["errors"] = {};
  if (updates.retrieval_k !== undefined &&
      (!Number.isInteger(updates.retrieval_k) || updates.retrieval_k < 1)) {
    errors.retrieval_k = "retrieval_k must be an integer >= 1";
  }
  if (updates.confidence_threshold !== undefined &&
      (updates.confidence_threshold < 0 || updates.confidence_threshold > 1)) {
    errors.confidence_threshold = "confidence threshold must be within [0, 1]";
  }
  if (updates.context_window_limit !== undefined &&
      (!Number.isInteger(updates.context_window_limit) || updates.context_window_limit < 1)) {
    errors.context_window_limit = "context window must be an integer >= 1";
  }
  if (updates.backend_id !== undefined && !updates.backend_id.trim()) {
    errors.backend_id = "backend id must be non-empty";
  }
  return { ok: Object.keys(errors).length === 0, errors };
}

export class SettingsPanel {
  constructor(private api: ApiClient, private sessionId: string) {}

  async load(): Promise<SessionConfig> {
    return this.api.getConfig(this.sessionId);
  }

  /** Validate locally, then PUT; returns the server-echoed config. */
  async save(updates: Partial<SessionConfig>): Promise<SessionConfig> {
    const validation = validateConfig(updates);
    if (!validation.ok) {
      throw new Error(Object.values(validation.errors).join("; "));
    }
    return this.api.putConfig(this.sessionId, updates);
  }
}

export function renderSettings(config: SessionConfig): string {
  return `
<form class="settings" data-form="settings">
  <label>Model backend
    <input name="backend_id" type="text" value="${config.backend_id}">
  </label>
  <label>Retrieved chunks (k)
    <input name="retrieval_k" type="number" min="1" step="1" value="${config.retrieval_k}">
  </label>
  <label>Context window (tokens)
    <input name="context_window_limit" type="number" min="1" step="1"
           value="${config.context_window_limit}">
  </label>
  <label>Confidence threshold
    <input name="confidence_threshold" type="range" min="0" max="1" step="0.05"
           value="${config.confidence_threshold}">
  </label>
  <button type="submit">Apply</button>
  <span class="settings-error" hidden></span>
</form>`;
}
