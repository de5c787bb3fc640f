/** Guided-input forms for needs_input events.
 *
 * Field names mirror the requirement names exactly: the values post back
 * as the `inputs` map keyed by those names, which is what resumes the
 * suspended plan on the server.
 */

import { escapeHtml } from "./markdown.js";
import type { Requirement } from "./types.js";

export interface FormField {
  name: string;
  label: string;
  kind: "text" | "file";
}

export function formModel(requirements: Requirement[]): FormField[] {
  return requirements.map((req) => ({
    name: req.name,
    label: req.description,
    kind: req.kind.startsWith("artifact:") ? "file" : "text",
  }));
}

export function renderForm(requirements: Requirement[]): string {
  const fields = formModel(requirements)
    .map((field) => {
      const input =
        field.kind === "file"
          ? `<input type="file" name="${escapeHtml(field.name)}" data-kind="file">`
          : `<textarea name="${escapeHtml(field.name)}" data-kind="text" rows="2"></textarea>`;
      return (
        `<label class="form-field"><span>${escapeHtml(field.label)}</span>${input}</label>`
      );
    })
    .join("");
  return (
    `<form class="needs-input" data-form="needs_input">${fields}` +
    `<button type="submit">Continue</button></form>`
  );
}

/** Collect submitted values keyed by requirement name. File fields carry
 * the artifact id produced by the upload endpoint. */
export function collectForm(form: HTMLFormElement): Record<string, string> {
  const values: Record<string, string> = {};
  for (const element of Array.from(form.elements)) {
    const input = element as HTMLInputElement | HTMLTextAreaElement;
    if (!input.name) continue;
    if (input.dataset.artifactId) {
      values[input.name] = input.dataset.artifactId;
    } else if (input.value) {
      values[input.name] = input.value;
    }
  }
  return values;
}
