/** Wire types for the workbench REST API. */

export type EventType =
  | "user_message"
  | "answer"
  | "needs_input"
  | "step_progress"
  | "artifact_ready"
  | "error";

export interface Requirement {
  name: string;
  kind: string;
  description: string;
}

export interface ArtifactRef {
  artifact_id: string;
  kind: string;
  filename: string;
  byte_length: number;
}

export interface Citation {
  ref: string;
  span: string;
}

export interface ApiEvent {
  type: EventType;
  text?: string;
  answer?: string;
  citations?: Citation[];
  used_web?: boolean;
  requirements?: Requirement[];
  artifact?: ArtifactRef;
  step?: string;
  status?: string;
  plan_id?: string;
  error?: string;
  rejected?: boolean;
  session_id?: string;
  turn?: number;
}

export interface SessionConfig {
  backend_id: string;
  context_window_limit: number;
  retrieval_k: number;
  confidence_threshold: number;
}

export type Theme = "light" | "dark";

export interface StoredMessage {
  author: "user" | "agent" | "system";
  html: string;
  raw: string;
}

export interface StoredConversation {
  sessionId: string;
  title: string;
  updatedAt: number;
  messages: StoredMessage[];
}
