/** Chat application wiring: streams events into the transcript, renders
 * guided-input forms, SVA panels, settings, history, and theme. */

import { ApiClient } from "./api.js";
import { collectForm, renderForm } from "./forms.js";
import { HistoryStore } from "./history.js";
import { escapeHtml, renderCitations, renderMarkdown } from "./markdown.js";
import { SettingsPanel, renderSettings } from "./settings.js";
import { downloadArtifact, renderSvaPanel } from "./svaPanel.js";
import { applyTheme, loadTheme, toggleTheme } from "./theme.js";
import type { ApiEvent, ArtifactRef, StoredConversation } from "./types.js";

export class ChatApp {
  private api: ApiClient;
  private history: HistoryStore;
  private sessionId: string | null = null;
  private conversation: StoredConversation | null = null;
  private pendingUploads: string[] = [];

  constructor(
    private root: HTMLElement,
    api?: ApiClient,
    storage: Storage = window.localStorage,
  ) {
    this.api = api ?? new ApiClient();
    this.history = new HistoryStore(storage);
    applyTheme(document.documentElement, loadTheme(storage));
    this.render();
    this.renderHistory();
  }

  private render(): void {
    this.root.innerHTML = `
      <header class="topbar">
        <span class="brand">security verification workbench</span>
        <button type="button" data-action="toggle-theme">theme</button>
        <button type="button" data-action="open-settings">settings</button>
        <button type="button" data-action="new-chat">new chat</button>
      </header>
      <aside class="history" data-region="history"></aside>
      <main class="transcript" data-region="transcript"></main>
      <div class="settings-host" data-region="settings" hidden></div>
      <footer class="composer">
        <input type="file" data-region="file" multiple>
        <textarea data-region="input" rows="2"
          placeholder="Ask a security question or start a verification task..."></textarea>
        <button type="button" data-action="send">send</button>
      </footer>`;
    this.root.addEventListener("click", (e) => this.onClick(e));
    this.root.addEventListener("submit", (e) => this.onSubmit(e));
    const input = this.region("input") as HTMLTextAreaElement;
    input.addEventListener("keydown", (e) => {
      if (e.key === "Enter" && !e.shiftKey) {
        e.preventDefault();
        void this.send();
      }
    });
  }

  private region(name: string): HTMLElement {
    return this.root.querySelector(`[data-region="${name}"]`) as HTMLElement;
  }

  private bubble(author: "user" | "agent" | "system", html: string, raw = ""): void {
    const div = document.createElement("div");
    div.className = `bubble ${author}`;
    div.innerHTML = html;
    this.region("transcript").appendChild(div);
    div.scrollIntoView({ block: "end" });
    if (this.conversation) {
      this.conversation.messages.push({ author, html, raw });
      this.conversation.updatedAt = Date.now();
      this.history.save(this.conversation);
    }
  }

  private async ensureSession(): Promise<string> {
    if (this.sessionId) return this.sessionId;
    this.sessionId = await this.api.createSession();
    this.conversation = {
      sessionId: this.sessionId,
      title: "new conversation",
      updatedAt: Date.now(),
      messages: [],
    };
    return this.sessionId;
  }

  async send(text?: string, inputs: Record<string, string> = {}): Promise<void> {
    const inputEl = this.region("input") as HTMLTextAreaElement;
    const message = text ?? inputEl.value.trim();
    if (!message && !Object.keys(inputs).length) return;
    inputEl.value = "";
    const sessionId = await this.ensureSession();
    if (this.conversation && this.conversation.title === "new conversation" && message) {
      this.conversation.title = message.slice(0, 48);
    }
    const attachments = this.pendingUploads.splice(0);
    this.bubble("user", `<p>${escapeHtml(message)}</p>`, message);
    const ticker = document.createElement("div");
    ticker.className = "ticker";
    this.region("transcript").appendChild(ticker);
    try {
      await this.api.sendMessage(sessionId, message, (event) => {
        this.onEvent(event, ticker);
      }, attachments, inputs);
    } catch (error) {
      this.bubble("system", `<p class="error">${escapeHtml(String(error))}</p>`);
    } finally {
      ticker.remove();
    }
  }

  private onEvent(event: ApiEvent, ticker: HTMLElement): void {
    switch (event.type) {
      case "step_progress":
        ticker.textContent = `${event.step}: ${event.status}`;
        break;
      case "needs_input":
        this.bubble("system",
          `<p>The task needs more input:</p>${renderForm(event.requirements ?? [])}`);
        break;
      case "artifact_ready":
        void this.onArtifact(event.artifact!);
        break;
      case "answer": {
        const body = renderMarkdown(event.text ?? event.answer ?? "");
        const citations = renderCitations(event.citations ?? []);
        const feedback =
          `<div class="feedback"><button type="button" data-action="feedback-up">useful</button>` +
          `<button type="button" data-action="feedback-down">off target</button></div>`;
        this.bubble("agent", body + citations + feedback, event.text ?? "");
        break;
      }
      case "error":
        this.bubble("system", `<p class="error">${escapeHtml(event.error ?? "failed")}</p>`);
        break;
      default:
        break; // user_message ack needs no rendering
    }
  }

  private async onArtifact(ref: ArtifactRef): Promise<void> {
    if (ref.kind === "sva_file" && ref.filename.endsWith(".sva")) {
      const bytes = await this.api.fetchArtifact(ref.artifact_id);
      const text = new TextDecoder().decode(bytes);
      this.bubble("agent", renderSvaPanel(ref, text));
      return;
    }
    this.bubble(
      "agent",
      `<p>artifact ready: <a href="/api/artifacts/${escapeHtml(ref.artifact_id)}" ` +
        `download="${escapeHtml(ref.filename)}">${escapeHtml(ref.filename)}</a></p>`,
    );
  }

  private async onClick(e: Event): Promise<void> {
    const target = e.target as HTMLElement;
    const action = target.dataset.action;
    if (!action) return;
    if (action === "send") void this.send();
    if (action === "toggle-theme") toggleTheme(window.localStorage, document.documentElement);
    if (action === "new-chat") this.reset();
    if (action === "open-settings") await this.openSettings();
    if (action === "download-sva") {
      const panel = target.closest(".sva-panel") as HTMLElement;
      const ref: ArtifactRef = {
        artifact_id: panel.dataset.artifact!,
        kind: "sva_file",
        filename: "properties.sva",
        byte_length: 0,
      };
      const { objectUrl } = await downloadArtifact(this.api, ref);
      const a = document.createElement("a");
      a.href = objectUrl;
      a.download = ref.filename;
      a.click();
      URL.revokeObjectURL(objectUrl);
    }
    if (action === "feedback-down" && this.sessionId) {
      const ticker = document.createElement("div");
      this.region("transcript").appendChild(ticker);
      await this.api.sendFeedback(this.sessionId, "The previous answer missed the mark.",
        (event) => this.onEvent(event, ticker));
      ticker.remove();
    }
    if (action === "restore") {
      this.restore(target.dataset.session!);
    }
  }

  private async onSubmit(e: Event): Promise<void> {
    const form = e.target as HTMLFormElement;
    e.preventDefault();
    if (form.dataset.form === "needs_input") {
      for (const element of Array.from(form.elements)) {
        const input = element as HTMLInputElement;
        if (input.type === "file" && input.files?.length && this.sessionId) {
          const uploaded = await this.api.uploadFile(this.sessionId, input.files[0]);
          input.dataset.artifactId = uploaded.artifact_id;
        }
      }
      const values = collectForm(form);
      form.remove();
      await this.send("(requested inputs supplied)", values);
    }
    if (form.dataset.form === "settings" && this.sessionId) {
      const panel = new SettingsPanel(this.api, this.sessionId);
      const errorEl = form.querySelector(".settings-error") as HTMLElement;
      try {
        await panel.save({
          backend_id: (form.elements.namedItem("backend_id") as HTMLInputElement).value,
          retrieval_k: Number((form.elements.namedItem("retrieval_k") as HTMLInputElement).value),
          context_window_limit: Number(
            (form.elements.namedItem("context_window_limit") as HTMLInputElement).value),
          confidence_threshold: Number(
            (form.elements.namedItem("confidence_threshold") as HTMLInputElement).value),
        });
        errorEl.hidden = true;
        this.region("settings").hidden = true;
      } catch (error) {
        errorEl.textContent = String(error);
        errorEl.hidden = false;
      }
    }
  }

  private async openSettings(): Promise<void> {
    const sessionId = await this.ensureSession();
    const config = await new SettingsPanel(this.api, sessionId).load();
    const host = this.region("settings");
    host.innerHTML = renderSettings(config);
    host.hidden = false;
  }

  private renderHistory(): void {
    const host = this.region("history");
    const items = this.history.list()
      .map((c) => `<button type="button" data-action="restore" ` +
                  `data-session="${escapeHtml(c.sessionId)}">${escapeHtml(c.title)}</button>`)
      .join("");
    host.innerHTML = items || `<span class="empty">no saved conversations</span>`;
  }

  private reset(): void {
    this.sessionId = null;
    this.conversation = null;
    this.pendingUploads = [];
    this.region("transcript").innerHTML = "";
    this.renderHistory();
  }

  /** Re-attach to a stored conversation; stale sessions fall back to a new chat. */
  restore(sessionId: string): void {
    const stored = this.history.get(sessionId);
    this.region("transcript").innerHTML = "";
    if (!stored) {
      this.reset();
      return;
    }
    void this.api.sessionExists(sessionId).then((alive) => {
      if (!alive) {
        this.bubble("system",
          "<p>The server no longer has this session; starting a new one.</p>");
        this.sessionId = null;
        this.conversation = null;
        return;
      }
      this.sessionId = sessionId;
      this.conversation = stored;
      for (const message of stored.messages) {
        const div = document.createElement("div");
        div.className = `bubble ${message.author}`;
        div.innerHTML = message.html;
        this.region("transcript").appendChild(div);
      }
    });
  }
}

export function mount(selector = "#app"): ChatApp {
  const root = document.querySelector(selector) as HTMLElement;
  return new ChatApp(root);
}
