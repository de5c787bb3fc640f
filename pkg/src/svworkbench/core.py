"""Sessions, transcripts, and the on-disk session store.

A session owns an append-only transcript plus a short-term task context.
Transcripts persist as one JSON record per turn in an ndjson file so the
append path is crash-safe and diffs stay readable.
"""

from __future__ import annotations

import json
import re
import secrets
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, SequenceError

AGENT_NAMES = (
    "security_qa",
    "asset_identification",
    "threat_modeling",
    "vulnerability_detection",
    "bug_validation",
    "property_generation",
)

ARTIFACT_KINDS = (
    "rtl_design",
    "spec_document",
    "bug_report",
    "sva_file",
    "asset_json",
    "test_plan",
    "testbench",
    "trace_log",
)

VALID_AUTHORS = {"user", "system", *AGENT_NAMES}


def new_id() -> str:
    """128-bit random identifier rendered as lowercase hex."""
    return secrets.token_hex(16)


@dataclass
class ArtifactRef:
    artifact_id: str
    kind: str
    filename: str
    byte_length: int

    def __post_init__(self):
        if self.kind not in ARTIFACT_KINDS:
            raise ConfigError(f"unknown artifact kind {self.kind!r}")
        if self.byte_length < 0:
            raise ConfigError("byte_length must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArtifactRef":
        return cls(d["artifact_id"], d["kind"], d["filename"], d["byte_length"])


@dataclass
class Turn:
    index: int
    author: str
    content: str
    attachments: list[ArtifactRef] = field(default_factory=list)
    timestamp: float = 0.0

    def __post_init__(self):
        if self.author not in VALID_AUTHORS:
            raise ConfigError(f"unknown turn author {self.author!r}")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "author": self.author,
            "content": self.content,
            "attachments": [a.to_dict() for a in self.attachments],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(
            index=d["index"],
            author=d["author"],
            content=d["content"],
            attachments=[ArtifactRef.from_dict(a) for a in d.get("attachments", [])],
            timestamp=d.get("timestamp", 0.0),
        )


@dataclass
class SessionConfig:
    backend_id: str = "mock"
    context_window_limit: int = 8192
    retrieval_k: int = 5
    confidence_threshold: float = 0.5

    def validate(self) -> None:
        if self.retrieval_k < 1:
            raise ConfigError("retrieval_k must be >= 1")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError("confidence_threshold must be in [0, 1]")
        if self.context_window_limit < 1:
            raise ConfigError("context_window_limit must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        cfg = cls(
            backend_id=d.get("backend_id", "mock"),
            context_window_limit=d.get("context_window_limit", 8192),
            retrieval_k=d.get("retrieval_k", 5),
            confidence_threshold=d.get("confidence_threshold", 0.5),
        )
        cfg.validate()
        return cfg


@dataclass
class TaskContext:
    """State of the one task a session may have in flight."""

    task_id: str
    intent: dict | None = None
    gathered_inputs: dict[str, Any] = field(default_factory=dict)
    pending_requirements: list[str] = field(default_factory=list)
    active_plan_id: str | None = None

    def __post_init__(self):
        overlap = set(self.gathered_inputs) & set(self.pending_requirements)
        if overlap:
            raise ConfigError(f"gathered and pending requirement names overlap: {sorted(overlap)}")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "intent": self.intent,
            "gathered_inputs": self.gathered_inputs,
            "pending_requirements": list(self.pending_requirements),
            "active_plan_id": self.active_plan_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskContext":
        return cls(
            task_id=d["task_id"],
            intent=d.get("intent"),
            gathered_inputs=dict(d.get("gathered_inputs", {})),
            pending_requirements=list(d.get("pending_requirements", [])),
            active_plan_id=d.get("active_plan_id"),
        )


@dataclass
class Session:
    session_id: str
    config: SessionConfig
    transcript: list[Turn] = field(default_factory=list)
    short_term: TaskContext | None = None

    def last_turn_by(self, author: str) -> Turn | None:
        for turn in reversed(self.transcript):
            if turn.author == author:
                return turn
        return None

    def last_agent_turn(self) -> Turn | None:
        for turn in reversed(self.transcript):
            if turn.author in AGENT_NAMES:
                return turn
        return None


def create_session(config: SessionConfig | None = None) -> Session:
    """Fresh session with an empty transcript and no active task."""
    config = config or SessionConfig()
    config.validate()
    return Session(session_id=new_id(), config=config)


def append_turn(session: Session, turn: Turn) -> Session:
    """Append one turn; the index must equal the current transcript length."""
    if turn.index != len(session.transcript):
        raise SequenceError(
            f"turn index {turn.index} does not match transcript length {len(session.transcript)}"
        )
    session.transcript.append(turn)
    return session


@dataclass
class FollowUpResolution:
    kind: str  # "fresh" | "follow_up"
    anchor_turn_index: int | None = None

    @property
    def is_follow_up(self) -> bool:
        return self.kind == "follow_up"


_FOLLOW_UP_RE = re.compile(r"follow[-_ ]?up(?:\s+of)?(?:\s+turn)?\s*[:#]?\s*(\d+)", re.IGNORECASE)


def resolve_follow_up(session: Session, query: str, gateway, backend_id: str | None = None) -> FollowUpResolution:
    """Ask the dialogue-state tracker whether the query continues a prior turn.

    An empty transcript is always fresh; otherwise the backend links the
    query to a prior turn or declares it standalone.
    """
    if not session.transcript:
        return FollowUpResolution("fresh")
    from .gateway import ChatRequest  # local import to avoid a cycle

    recent = session.transcript[-8:]
    lines = [f"turn {t.index} ({t.author}): {t.content}" for t in recent]
    request = ChatRequest(
        template_id="dialogue_state",
        variables={"query": query, "transcript": "\n".join(lines)},
    )
    response = gateway.complete(backend_id or session.config.backend_id, request)
    m = _FOLLOW_UP_RE.search(response.text)
    if m:
        anchor = int(m.group(1))
        if 0 <= anchor < len(session.transcript):
            return FollowUpResolution("follow_up", anchor)
    return FollowUpResolution("fresh")


class SessionStore:
    """Filesystem persistence for sessions and uploaded/generated artifacts.

    Layout: ``<data_dir>/sessions/<session_id>/transcript.ndjson`` plus a
    ``session.json`` sidecar for config and task context, and artifact bytes
    at ``<data_dir>/artifacts/<artifact_id>``.
    """

    def __init__(self, data_dir: str | Path, clock: Callable[[], float] = time.time):
        self.data_dir = Path(data_dir)
        self.clock = clock
        (self.data_dir / "sessions").mkdir(parents=True, exist_ok=True)
        (self.data_dir / "artifacts").mkdir(parents=True, exist_ok=True)

    # -- sessions ------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.data_dir / "sessions" / session_id

    def transcript_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "transcript.ndjson"

    def create(self, config: SessionConfig | None = None) -> Session:
        session = create_session(config)
        sdir = self.session_dir(session.session_id)
        sdir.mkdir(parents=True, exist_ok=True)
        self.transcript_path(session.session_id).touch()
        self._write_meta(session)
        return session

    def exists(self, session_id: str) -> bool:
        return self.session_dir(session_id).is_dir()

    def load(self, session_id: str) -> Session:
        sdir = self.session_dir(session_id)
        if not sdir.is_dir():
            raise KeyError(f"no session {session_id}")
        meta = json.loads((sdir / "session.json").read_text(encoding="utf-8"))
        session = Session(
            session_id=session_id,
            config=SessionConfig.from_dict(meta["config"]),
            short_term=TaskContext.from_dict(meta["short_term"]) if meta.get("short_term") else None,
        )
        tpath = self.transcript_path(session_id)
        if tpath.exists():
            for line in tpath.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    session.transcript.append(Turn.from_dict(json.loads(line)))
        return session

    def make_turn(self, session: Session, author: str, content: str,
                  attachments: list[ArtifactRef] | None = None) -> Turn:
        return Turn(
            index=len(session.transcript),
            author=author,
            content=content,
            attachments=attachments or [],
            timestamp=self.clock(),
        )

    def append_turn(self, session: Session, turn: Turn) -> Session:
        append_turn(session, turn)
        with self.transcript_path(session.session_id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(turn.to_dict(), sort_keys=True) + "\n")
        return session

    def save_meta(self, session: Session) -> None:
        self._write_meta(session)

    def _write_meta(self, session: Session) -> None:
        meta = {
            "config": session.config.to_dict(),
            "short_term": session.short_term.to_dict() if session.short_term else None,
        }
        path = self.session_dir(session.session_id) / "session.json"
        path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")

    # -- plan checkpoints ----------------------------------------------

    def plan_path(self, session_id: str, plan_id: str) -> Path:
        pdir = self.session_dir(session_id) / "plans"
        pdir.mkdir(parents=True, exist_ok=True)
        return pdir / f"{plan_id}.json"

    def save_plan_state(self, session_id: str, plan_id: str, payload: dict) -> None:
        self.plan_path(session_id, plan_id).write_text(
            json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
        )

    def load_plan_state(self, session_id: str, plan_id: str) -> dict:
        return json.loads(self.plan_path(session_id, plan_id).read_text(encoding="utf-8"))

    # -- artifacts -----------------------------------------------------

    def artifact_path(self, artifact_id: str) -> Path:
        return self.data_dir / "artifacts" / artifact_id

    def put_artifact(self, data: bytes, kind: str, filename: str) -> ArtifactRef:
        ref = ArtifactRef(artifact_id=new_id(), kind=kind, filename=filename, byte_length=len(data))
        self.artifact_path(ref.artifact_id).write_bytes(data)
        meta = self.data_dir / "artifacts" / f"{ref.artifact_id}.meta.json"
        meta.write_text(json.dumps(ref.to_dict(), sort_keys=True), encoding="utf-8")
        return ref

    def get_artifact(self, artifact_id: str) -> tuple[bytes, ArtifactRef]:
        path = self.artifact_path(artifact_id)
        if not path.is_file():
            raise KeyError(f"no artifact {artifact_id}")
        meta_path = self.data_dir / "artifacts" / f"{artifact_id}.meta.json"
        ref = ArtifactRef.from_dict(json.loads(meta_path.read_text(encoding="utf-8")))
        return path.read_bytes(), ref

    def artifact_text(self, ref_or_id) -> str:
        artifact_id = ref_or_id.artifact_id if isinstance(ref_or_id, ArtifactRef) else ref_or_id
        data, _ = self.get_artifact(artifact_id)
        return data.decode("utf-8")
