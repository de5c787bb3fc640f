"""Shared execution context handed to agent step handlers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

from .core import SessionConfig, SessionStore
from .gateway import ChatRequest, ChatResponse, Gateway
from .knowledge import VectorStore

DATA_DIR = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def load_table(name: str):
    """Bundled JSON data table by stem name."""
    return json.loads((DATA_DIR / f"{name}.json").read_text(encoding="utf-8"))


@dataclass
class AgentRuntime:
    """Everything an agent step needs: backends, stores, scratch space."""

    gateway: Gateway
    session_store: SessionStore
    config: SessionConfig = field(default_factory=SessionConfig)
    stores: dict[str, VectorStore] = field(default_factory=dict)
    web_adapter: Any = None
    sim_adapters: dict[str, Any] = field(default_factory=dict)
    work_dir: Path | None = None

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    def complete(self, template_id: str, variables: dict[str, str], **kwargs) -> ChatResponse:
        request = ChatRequest(template_id=template_id, variables=variables, **kwargs)
        return self.gateway.complete(self.backend_id, request)

    def scratch_dir(self, *parts: str) -> Path:
        base = self.work_dir or (self.session_store.data_dir / "work")
        path = base.joinpath(*parts)
        path.mkdir(parents=True, exist_ok=True)
        return path
