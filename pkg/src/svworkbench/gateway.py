"""Uniform interface to language-model backends.

Two backends ship here: a deterministic scripted mock keyed by
(template id, prompt hash) for offline tests, and a generic remote
chat-completion adapter configured entirely through environment variables.
Prompt templates live as plain text files in the package ``prompts/``
directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BackendError, BackendTimeout, MockFixtureMissing, TemplateError

logger = logging.getLogger(__name__)

PROMPTS_DIR = Path(__file__).parent / "prompts"

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_]\w*)\}")


def placeholders(body: str) -> list[str]:
    """Placeholder names in order of first appearance; `{{` escapes a brace."""
    protected = body.replace("{{", "\x00").replace("}}", "\x01")
    seen: list[str] = []
    for m in _PLACEHOLDER_RE.finditer(protected):
        if m.group(1) not in seen:
            seen.append(m.group(1))
    return seen


@dataclass
class PromptTemplate:
    template_id: str
    body: str
    required_variables: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.required_variables:
            self.required_variables = placeholders(self.body)


def render_template(template: PromptTemplate, variables: dict[str, str]) -> str:
    """Pure substitution; unused extra variables are ignored."""
    protected = template.body.replace("{{", "\x00").replace("}}", "\x01")

    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in variables:
            raise TemplateError(
                f"template {template.template_id!r} missing variable {name!r}"
            )
        return str(variables[name])

    rendered = _PLACEHOLDER_RE.sub(sub, protected)
    return rendered.replace("\x00", "{").replace("\x01", "}")


@dataclass
class ChatRequest:
    template_id: str
    variables: dict[str, str]
    history: list[tuple[str, str]] | None = None
    max_tokens: int = 1024
    temperature: float = 0.0


@dataclass
class ChatResponse:
    text: str
    confidence: float | None = None
    token_usage: tuple[int, int] = (0, 0)


_CONFIDENCE_RE = re.compile(r"confidence\s*[:=]\s*([0-9]*\.?[0-9]+)", re.IGNORECASE)


def estimate_confidence(response_text: str) -> float:
    """Parse an explicit ``confidence: X`` marker; default 0.5, clamped to [0,1]."""
    m = _CONFIDENCE_RE.search(response_text)
    if not m:
        return 0.5
    try:
        value = float(m.group(1))
    except ValueError:
        return 0.5
    return min(1.0, max(0.0, value))


def stable_hash64(text: str) -> str:
    """Stable 64-bit content hash rendered as 16 hex chars."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def load_templates(directory: Path | str = PROMPTS_DIR) -> dict[str, PromptTemplate]:
    templates = {}
    for path in sorted(Path(directory).glob("*.txt")):
        body = path.read_text(encoding="utf-8")
        templates[path.stem] = PromptTemplate(template_id=path.stem, body=body)
    return templates


# ---------------------------------------------------------------------------
# backends


class MockBackend:
    """Deterministic scripted backend.

    Fixture entry files: first line ``# template: <id>``, second line
    ``# prompt-hash: <hex>`` (``*`` matches any prompt for the template),
    optional third line ``# error: timeout|backend``, remainder is the
    response body. Several files may share a key; they are served FIFO by
    filename, and the final entry keeps repeating so single-entry keys stay
    deterministic under replay.
    """

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)
        self._entries: dict[tuple[str, str], list[dict]] = {}
        self._cursor: dict[tuple[str, str], int] = {}
        self._seen_files: set[str] = set()
        self._load()

    def _load(self) -> None:
        """Load fixture files not seen yet; cursors on existing keys persist."""
        if not self.fixtures_dir.is_dir():
            return
        for path in sorted(self.fixtures_dir.glob("*.txt")):
            if path.name in self._seen_files:
                continue
            self._seen_files.add(path.name)
            text = path.read_text(encoding="utf-8")
            lines = text.split("\n")
            header = {}
            body_start = 0
            for i, line in enumerate(lines):
                m = re.match(r"#\s*(template|prompt-hash|error)\s*:\s*(\S+)", line)
                if m:
                    header[m.group(1)] = m.group(2)
                    body_start = i + 1
                else:
                    break
            if "template" not in header or "prompt-hash" not in header:
                logger.warning("skipping malformed fixture %s", path.name)
                continue
            key = (header["template"], header["prompt-hash"])
            self._entries.setdefault(key, []).append(
                {"body": "\n".join(lines[body_start:]).strip("\n"), "error": header.get("error")}
            )

    def complete(self, template_id: str, rendered_prompt: str, request: ChatRequest) -> ChatResponse:
        self._load()
        prompt_hash = stable_hash64(rendered_prompt)
        key = (template_id, prompt_hash)
        if key not in self._entries:
            key = (template_id, "*")
        if key not in self._entries:
            raise MockFixtureMissing(template_id, prompt_hash, rendered_prompt[:120])
        queue = self._entries[key]
        cursor = self._cursor.get(key, 0)
        entry = queue[min(cursor, len(queue) - 1)]
        if cursor < len(queue) - 1:
            self._cursor[key] = cursor + 1
        if entry["error"] == "timeout":
            raise BackendTimeout(f"scripted timeout for {template_id}")
        if entry["error"]:
            raise BackendError(f"scripted {entry['error']} failure for {template_id}")
        text = entry["body"]
        confidence = None
        if _CONFIDENCE_RE.search(text):
            confidence = estimate_confidence(text)
        return ChatResponse(
            text=text,
            confidence=confidence,
            token_usage=(len(rendered_prompt.split()), len(text.split())),
        )


class MockFixtureWriter:
    """Authoring helper that computes fixture keys from templates."""

    def __init__(self, fixtures_dir: str | Path, templates: dict[str, PromptTemplate] | None = None):
        self.fixtures_dir = Path(fixtures_dir)
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        self.templates = templates or load_templates()
        self._counter = 0

    def add(
        self,
        template_id: str,
        response_text: str,
        variables: dict[str, str] | None = None,
        prompt: str | None = None,
        error: str | None = None,
    ) -> Path:
        if prompt is None and variables is not None:
            template = self.templates[template_id]
            prompt = render_template(template, variables)
        prompt_hash = stable_hash64(prompt) if prompt is not None else "*"
        self._counter += 1
        path = self.fixtures_dir / f"{self._counter:04d}_{template_id}.txt"
        header = [f"# template: {template_id}", f"# prompt-hash: {prompt_hash}"]
        if error:
            header.append(f"# error: {error}")
        path.write_text("\n".join(header) + "\n" + response_text + "\n", encoding="utf-8")
        return path


class RemoteBackend:
    """JSON chat-completion adapter; endpoint and key come from the environment."""

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 2,
    ):
        self.url = url or os.environ.get("SVW_BACKEND_URL", "")
        self.api_key = api_key or os.environ.get("SVW_BACKEND_KEY", "")
        self.model = model or os.environ.get("SVW_BACKEND_MODEL", "default")
        self.timeout = timeout
        self.max_retries = max_retries
        if not self.url:
            raise BackendError("SVW_BACKEND_URL not configured")

    def complete(self, template_id: str, rendered_prompt: str, request: ChatRequest) -> ChatResponse:
        import httpx

        messages = [{"role": role, "content": text} for role, text in (request.history or [])]
        messages.append({"role": "user", "content": rendered_prompt})
        body = {
            "model": self.model,
            "messages": messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        payload = json.dumps(body)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = httpx.post(self.url, content=payload, headers=headers, timeout=self.timeout)
            except httpx.TimeoutException as exc:
                last_exc = exc
                logger.warning("backend timeout (attempt %d): %s", attempt + 1, exc)
                continue
            if 400 <= resp.status_code < 500:
                raise BackendError(f"backend rejected request: {resp.status_code} {resp.text[:200]}")
            if resp.status_code >= 500:
                raise BackendError(f"backend failure: {resp.status_code}")
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
            confidence = None
            if _CONFIDENCE_RE.search(text):
                confidence = estimate_confidence(text)
            return ChatResponse(
                text=text,
                confidence=confidence,
                token_usage=(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
            )
        raise BackendTimeout(f"backend timed out after {self.max_retries + 1} attempts: {last_exc}")


class Gateway:
    """Backend registry plus template rendering and an optional prompt log."""

    def __init__(self, templates: dict[str, PromptTemplate] | None = None):
        self.templates = templates if templates is not None else load_templates()
        self.backends: dict[str, object] = {}
        self.prompt_log: list[tuple[str, str, str]] | None = None

    def register_backend(self, backend_id: str, backend) -> None:
        self.backends[backend_id] = backend

    def register_template(self, template: PromptTemplate) -> None:
        self.templates[template.template_id] = template

    def complete(self, backend_id: str, request: ChatRequest) -> ChatResponse:
        if backend_id not in self.backends:
            raise BackendError(f"unknown backend {backend_id!r}")
        if request.template_id not in self.templates:
            raise TemplateError(f"unknown template {request.template_id!r}")
        template = self.templates[request.template_id]
        rendered = render_template(template, request.variables)
        if self.prompt_log is not None:
            self.prompt_log.append((backend_id, request.template_id, rendered))
        return self.backends[backend_id].complete(request.template_id, rendered, request)


def default_gateway(
    mock_fixtures: str | Path | None = None, register_remote: bool = True
) -> Gateway:
    """Gateway with the mock backend (from SVW_MOCK_FIXTURES or an explicit
    directory) and, when configured, the remote backend."""
    gw = Gateway()
    fixtures = mock_fixtures or os.environ.get("SVW_MOCK_FIXTURES")
    if fixtures:
        gw.register_backend("mock", MockBackend(fixtures))
    if register_remote and os.environ.get("SVW_BACKEND_URL"):
        gw.register_backend("remote", RemoteBackend())
    return gw
