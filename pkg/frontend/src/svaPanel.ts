/** SVA display panel: one card per assertion block with syntax-aware
 * highlighting and a download action that fetches the exact artifact
 * bytes from the server. */

import type { ApiClient } from "./api.js";
import { escapeHtml } from "./markdown.js";
import type { ArtifactRef } from "./types.js";

export interface SvaBlock {
  comments: string[];
  assertion: string;
}

/** Split an .sva file into blocks: leading // comments plus one
 * assert-property statement each. */
export function splitSvaBlocks(fileText: string): SvaBlock[] {
  const blocks: SvaBlock[] = [];
  let comments: string[] = [];
  let current: string[] = [];
  let inAssert = false;
  for (const line of fileText.split("\n")) {
    const trimmed = line.trim();
    if (!inAssert && trimmed.startsWith("//")) {
      comments.push(trimmed.replace(/^\/\/\s?/, ""));
      continue;
    }
    if (!trimmed) {
      if (!inAssert && comments.length && !current.length) continue;
      continue;
    }
    current.push(line);
    inAssert = true;
    if (trimmed.endsWith(";") || trimmed === "endproperty") {
      blocks.push({ comments, assertion: current.join("\n") });
      comments = [];
      current = [];
      inAssert = false;
    }
  }
  if (current.length) blocks.push({ comments, assertion: current.join("\n") });
  return blocks;
}

const SVA_KEYWORDS =
  /\b(assert|property|endproperty|posedge|negedge|disable|iff)\b/g;

export function highlightSva(text: string): string {
  return escapeHtml(text)
    .replace(SVA_KEYWORDS, '<span class="kw">$1</span>')
    .replace(/(\d+'[bodh][0-9a-fA-FxXzZ_]+)/g, '<span class="lit">$1</span>')
    .replace(/(\|-&gt;|\|=&gt;)/g, '<span class="op">$1</span>');
}

export function renderSvaPanel(ref: ArtifactRef, fileText: string): string {
  const blocks = splitSvaBlocks(fileText);
  if (!blocks.length) {
    return `<div class="sva-panel empty">The assertion file is empty.</div>`;
  }
  const cards = blocks
    .map((block, i) => {
      const header = block.comments.length
        ? `<div class="sva-header">${block.comments.map(escapeHtml).join("<br>")}</div>`
        : "";
      return (
        `<div class="sva-card" data-index="${i}">${header}` +
        `<pre class="code lang-sva"><code>${highlightSva(block.assertion)}</code></pre></div>`
      );
    })
    .join("");
  return (
    `<div class="sva-panel" data-artifact="${escapeHtml(ref.artifact_id)}">` +
    `<div class="sva-toolbar"><span>${escapeHtml(ref.filename)}</span>` +
    `<button type="button" data-action="download-sva">Download</button></div>` +
    `${cards}</div>`
  );
}

/** Fetch the artifact and hand back the exact bytes plus the object URL a
 * click handler can assign to an <a download>. */
export async function downloadArtifact(
  api: ApiClient,
  ref: ArtifactRef,
): Promise<{ bytes: Uint8Array; objectUrl: string }> {
  const bytes = await api.fetchArtifact(ref.artifact_id);
  const blob = new Blob([bytes.buffer.slice(0) as ArrayBuffer], { type: "text/plain" });
  return { bytes, objectUrl: URL.createObjectURL(blob) };
}
