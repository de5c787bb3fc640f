/** Minimal markdown renderer for answers: fenced code blocks (with a
 * language class for highlighting hooks), inline code, bold, headings,
 * bullet lists, paragraphs. Everything is HTML-escaped first; rendering
 * never executes content. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function renderInline(text: string): string {
  return text
    .replace(/`([^`]+)`/g, "<code>$1</code>")
    .replace(/\*\*([^*]+)\*\*/g, "<strong>$1</strong>");
}

export function renderMarkdown(source: string): string {
  const out: string[] = [];
  const lines = escapeHtml(source).split("\n");
  let index = 0;
  while (index < lines.length) {
    const line = lines[index];
    const fence = line.match(/^```(\w*)\s*$/);
    if (fence) {
      const lang = fence[1] || "plain";
      const code: string[] = [];
      index += 1;
      while (index < lines.length && !lines[index].startsWith("```")) {
        code.push(lines[index]);
        index += 1;
      }
      index += 1; // closing fence
      out.push(`<pre class="code lang-${lang}"><code>${code.join("\n")}</code></pre>`);
      continue;
    }
    const heading = line.match(/^(#{1,4})\s+(.*)$/);
    if (heading) {
      const level = heading[1].length + 1; // h2..h5 inside chat bubbles
      out.push(`<h${level}>${renderInline(heading[2])}</h${level}>`);
      index += 1;
      continue;
    }
    if (/^\s*[-*]\s+/.test(line)) {
      const items: string[] = [];
      while (index < lines.length && /^\s*[-*]\s+/.test(lines[index])) {
        items.push(`<li>${renderInline(lines[index].replace(/^\s*[-*]\s+/, ""))}</li>`);
        index += 1;
      }
      out.push(`<ul>${items.join("")}</ul>`);
      continue;
    }
    if (!line.trim()) {
      index += 1;
      continue;
    }
    const paragraph: string[] = [line];
    index += 1;
    while (index < lines.length && lines[index].trim() &&
           !lines[index].startsWith("```") && !/^(#{1,4})\s/.test(lines[index]) &&
           !/^\s*[-*]\s+/.test(lines[index])) {
      paragraph.push(lines[index]);
      index += 1;
    }
    out.push(`<p>${renderInline(paragraph.join(" "))}</p>`);
  }
  return out.join("\n");
}

/** Citations render as an expandable reference list under the answer. */
export function renderCitations(citations: { ref: string; span: string }[]): string {
  if (!citations.length) return "";
  const items = citations
    .map(
      (c) =>
        `<details class="citation"><summary>${escapeHtml(c.ref)}</summary>` +
        `<blockquote>${escapeHtml(c.span)}</blockquote></details>`,
    )
    .join("");
  return `<div class="citations">${items}</div>`;
}
