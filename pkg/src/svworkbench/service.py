"""REST service exposing sessions, chat, uploads, artifacts, and config.

Events stream as newline-delimited JSON over a chunked response so both a
browser event reader and the CLI can consume them without a push-protocol
dependency. Handlers are stateless: everything persists in the session
store, so the service can restart between any two requests.
"""

from __future__ import annotations

import json
import os
import queue
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.responses import Response, StreamingResponse
from pydantic import BaseModel

from .errors import ConfigError
from .pipeline import Workbench

DEFAULT_MAX_UPLOAD = 16 * 1024 * 1024

CONTENT_TYPES = {
    ".json": "application/json",
    ".sva": "text/plain",
    ".v": "text/plain",
    ".sv": "text/plain",
    ".md": "text/markdown",
    ".txt": "text/plain",
    ".log": "text/plain",
}


class MessageBody(BaseModel):
    text: str = ""
    attachments: list[str] = []
    inputs: dict = {}


class FeedbackBody(BaseModel):
    text: str


def _stream_events(run) -> StreamingResponse:
    """Run `run(emit)` in a worker thread, yielding each event as one
    NDJSON line as soon as it is emitted."""
    events: queue.Queue = queue.Queue()
    sentinel = object()

    def emit(event: dict):
        events.put(event)

    def worker():
        try:
            run(emit)
        except Exception as exc:  # surfaced as a terminal error event
            events.put({"type": "error", "error": f"{type(exc).__name__}: {exc}"})
        finally:
            events.put(sentinel)

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()

    def generate():
        while True:
            event = events.get()
            if event is sentinel:
                break
            yield json.dumps(event) + "\n"

    return StreamingResponse(generate(), media_type="application/x-ndjson")


def create_app(data_dir: str | Path | None = None, workbench: Workbench | None = None,
               max_upload: int | None = None) -> FastAPI:
    bench = workbench or Workbench(data_dir or os.environ.get("SVW_DATA_DIR", "./svw_data"))
    limit = max_upload or int(os.environ.get("SVW_MAX_UPLOAD", DEFAULT_MAX_UPLOAD))
    app = FastAPI(title="svworkbench", version="0.1.0")
    app.state.workbench = bench

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict | None = None):
        try:
            session = bench.create_session(body or {})
        except ConfigError as exc:
            raise HTTPException(400, str(exc))
        return {"session_id": session.session_id}

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        if not bench.store.exists(session_id):
            raise HTTPException(404, "unknown session")
        return _stream_events(
            lambda emit: bench.handle_message(
                session_id, body.text, body.attachments, body.inputs, on_event=emit
            )
        )

    @app.post("/api/sessions/{session_id}/files")
    async def upload_file(session_id: str, file: UploadFile):
        if not bench.store.exists(session_id):
            raise HTTPException(404, "unknown session")
        data = await file.read()
        if len(data) == 0:
            raise HTTPException(400, "empty file")
        if len(data) > limit:
            raise HTTPException(413, f"file exceeds {limit} byte limit")
        ref = bench.upload(file.filename or "upload.bin", data)
        return {"artifact_id": ref.artifact_id, "kind": ref.kind}

    @app.get("/api/artifacts/{artifact_id}")
    def get_artifact(artifact_id: str):
        try:
            data, ref = bench.store.get_artifact(artifact_id)
        except KeyError:
            raise HTTPException(404, "unknown artifact")
        suffix = Path(ref.filename).suffix.lower()
        media = CONTENT_TYPES.get(suffix, "application/octet-stream")
        return Response(content=data, media_type=media, headers={
            "Content-Disposition": f'attachment; filename="{ref.filename}"'
        })

    @app.get("/api/sessions/{session_id}/config")
    def get_config(session_id: str):
        if not bench.store.exists(session_id):
            raise HTTPException(404, "unknown session")
        return bench.get_config(session_id)

    @app.put("/api/sessions/{session_id}/config")
    def put_config(session_id: str, body: dict):
        if not bench.store.exists(session_id):
            raise HTTPException(404, "unknown session")
        try:
            return bench.set_config(session_id, body)
        except (ConfigError, TypeError, ValueError) as exc:
            raise HTTPException(400, str(exc))

    @app.post("/api/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: FeedbackBody):
        if not bench.store.exists(session_id):
            raise HTTPException(404, "unknown session")
        return _stream_events(lambda emit: bench.feedback(session_id, body.text, on_event=emit))

    # optionally host the built web UI from the same origin
    ui_dir = os.environ.get("SVW_UI_DIR")
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
