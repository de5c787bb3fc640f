/** Conversation history in browser local storage, and nothing else: no
 * credentials, no backend keys, rendered transcripts only. */

import type { StoredConversation } from "./types.js";

const HISTORY_KEY = "svw.history.v1";
const MAX_CONVERSATIONS = 50;

type StorageLike = Pick<Storage, "getItem" | "setItem" | "removeItem">;

export class HistoryStore {
  constructor(private storage: StorageLike) {}

  list(): StoredConversation[] {
    try {
      const raw = this.storage.getItem(HISTORY_KEY);
      if (!raw) return [];
      const parsed = JSON.parse(raw);
      if (!Array.isArray(parsed)) return [];
      return parsed as StoredConversation[];
    } catch {
      return [];
    }
  }

  save(conversation: StoredConversation): void {
    const rest = this.list().filter((c) => c.sessionId !== conversation.sessionId);
    const next = [conversation, ...rest]
      .sort((a, b) => b.updatedAt - a.updatedAt)
      .slice(0, MAX_CONVERSATIONS);
    this.storage.setItem(HISTORY_KEY, JSON.stringify(next));
  }

  get(sessionId: string): StoredConversation | null {
    return this.list().find((c) => c.sessionId === sessionId) ?? null;
  }

  remove(sessionId: string): void {
    const rest = this.list().filter((c) => c.sessionId !== sessionId);
    this.storage.setItem(HISTORY_KEY, JSON.stringify(rest));
  }

  clear(): void {
    this.storage.removeItem(HISTORY_KEY);
  }
}
