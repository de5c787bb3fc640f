"""Message-to-plan pipeline shared by the REST service and the CLI.

All session state lives in the session store, so a Workbench can be torn
down and rebuilt between requests without changing any transcript.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from pathlib import Path
from typing import Callable

from .agents import bugvalidate
from .agents.assets import validate_asset_json
from .core import ArtifactRef, Session, SessionConfig, SessionStore, TaskContext, new_id
from .errors import ClassificationError, WorkbenchError
from .gateway import Gateway, default_gateway
from .knowledge import MockWebSearch, load_all_stores
from .orchestrator import ExecutionState, Orchestrator
from .runtime import AgentRuntime
from .supervisor import (
    TaskPlan,
    build_plan,
    detect_intent,
    reject_off_domain,
    validate_context,
)

logger = logging.getLogger(__name__)

EventCallback = Callable[[dict], None]


def infer_artifact_kind(filename: str, data: bytes) -> str:
    suffix = Path(filename).suffix.lower()
    if suffix in (".v", ".sv"):
        return "rtl_design"
    if suffix == ".sva":
        return "sva_file"
    if suffix == ".log":
        return "trace_log"
    if suffix == ".json":
        try:
            parsed = json.loads(data.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return "spec_document"
        if validate_asset_json(parsed):
            return "asset_json"
        if isinstance(parsed, dict) and ("bug_description" in parsed or "findings" in parsed):
            return "bug_report"
        if isinstance(parsed, dict) and "test_cases" in parsed:
            return "test_plan"
        return "spec_document"
    return "spec_document"


class Workbench:
    """Binds the session store, gateway, knowledge stores, and orchestrator."""

    def __init__(
        self,
        data_dir: str | Path,
        gateway: Gateway | None = None,
        web_adapter=None,
        sim_adapters: dict | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.data_dir = Path(data_dir)
        self.store = SessionStore(self.data_dir, clock=clock)
        self.gateway = gateway or default_gateway()
        self.web_adapter = web_adapter
        if web_adapter is None:
            import os

            fixtures = os.environ.get("SVW_SEARCH_FIXTURES")
            if fixtures:
                self.web_adapter = MockWebSearch(fixtures)
        self.sim_adapters = {"mock": bugvalidate.MockSimulator()}
        if sim_adapters:
            self.sim_adapters.update(sim_adapters)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- wiring ----------------------------------------------------------

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def runtime_for(self, session: Session) -> AgentRuntime:
        return AgentRuntime(
            gateway=self.gateway,
            session_store=self.store,
            config=session.config,
            stores=load_all_stores(self.data_dir / "stores"),
            web_adapter=self.web_adapter,
            sim_adapters=self.sim_adapters,
            work_dir=self.data_dir / "work",
        )

    def orchestrator_for(self, session: Session) -> Orchestrator:
        def checkpoint(state: ExecutionState):
            self.store.save_plan_state(session.session_id, state.plan_id, state.to_dict())

        return Orchestrator(checkpoint=checkpoint)

    # -- session management -----------------------------------------------

    def create_session(self, config: dict | None = None) -> Session:
        cfg = SessionConfig.from_dict(config or {})
        return self.store.create(cfg)

    def upload(self, filename: str, data: bytes) -> ArtifactRef:
        kind = infer_artifact_kind(filename, data)
        return self.store.put_artifact(data, kind, filename)

    # -- the message pipeline ----------------------------------------------

    def handle_message(
        self,
        session_id: str,
        text: str,
        attachment_ids: list[str] | None = None,
        inputs: dict | None = None,
        on_event: EventCallback | None = None,
    ) -> dict:
        """Run one engineer message through supervisor and orchestrator.

        Emits user_message, step_progress, needs_input, artifact_ready,
        answer, and error events through on_event; returns the terminal
        event.
        """
        emit = on_event or (lambda event: None)
        with self.lock_for(session_id):
            session = self.store.load(session_id)
            runtime = self.runtime_for(session)
            attachments = []
            for artifact_id in attachment_ids or []:
                _, ref = self.store.get_artifact(artifact_id)
                attachments.append(ref)

            turn = self.store.make_turn(session, "user", text, attachments)
            self.store.append_turn(session, turn)
            emit({"type": "user_message", "session_id": session_id, "turn": turn.index})

            try:
                terminal = self._dispatch(session, runtime, text, attachments,
                                          inputs or {}, emit)
            except WorkbenchError as exc:
                terminal = {"type": "error", "error": f"{type(exc).__name__}: {exc}"}
                emit(terminal)
            self.store.save_meta(session)
            return terminal

    def _dispatch(self, session, runtime, text, attachments, inputs, emit) -> dict:
        # resume paths first: a suspended plan or a supervisor-level pause
        ctx = session.short_term
        if ctx is not None and ctx.active_plan_id and inputs:
            return self._resume(session, runtime, inputs, emit)
        if ctx is not None and ctx.pending_requirements and (inputs or attachments):
            return self._complete_context(session, runtime, text, attachments, inputs, emit)
        return self._fresh(session, runtime, text, attachments, emit)

    def _fresh(self, session, runtime, text, attachments, emit) -> dict:
        try:
            intent = detect_intent(session, text, attachments, self.gateway)
        except ClassificationError as exc:
            event = {"type": "error", "error": str(exc), "retryable": True}
            emit(event)
            return event
        if not intent.in_domain:
            refusal = reject_off_domain(text)
            turn = self.store.make_turn(session, "system", refusal)
            self.store.append_turn(session, turn)
            event = {"type": "answer", "text": refusal, "rejected": True}
            emit(event)
            return event

        validation = validate_context(intent, session, attachments)
        if not validation.complete:
            session.short_term = TaskContext(
                task_id=new_id(),
                intent=intent.to_dict(),
                gathered_inputs=validation.inputs,
                pending_requirements=[r.name for r in validation.missing],
            )
            # stash the query so resumes keep the original request
            session.short_term.gathered_inputs["query"] = text
            event = validation.needs_input_event()
            emit(event)
            return event

        plan = build_plan(intent, validation.inputs, query=text)
        session.short_term = TaskContext(
            task_id=new_id(), intent=intent.to_dict(), active_plan_id=plan.plan_id
        )
        return self._execute(session, runtime, plan, None, emit)

    def _complete_context(self, session, runtime, text, attachments, inputs, emit) -> dict:
        from .supervisor import IntentResolution

        ctx = session.short_term
        gathered = dict(ctx.gathered_inputs)
        for ref in attachments:
            for name in list(ctx.pending_requirements):
                from .supervisor import REQUIREMENTS

                intent = IntentResolution.from_dict(ctx.intent)
                spec = REQUIREMENTS[intent.primary_agent()]
                req = next((r for r in spec.required if r.name == name), None)
                if req is not None and req.artifact_kind == ref.kind and name not in gathered:
                    gathered[name] = ref.to_dict()
        for name, value in inputs.items():
            gathered[name] = self._resolve_input_value(value)

        intent = IntentResolution.from_dict(ctx.intent)
        query = gathered.get("query", text)
        session.short_term = TaskContext(
            task_id=ctx.task_id,
            intent=ctx.intent,
            gathered_inputs=gathered,
        )
        validation = validate_context(intent, session)
        if not validation.complete:
            session.short_term.pending_requirements = [r.name for r in validation.missing]
            session.short_term.gathered_inputs = {
                k: v for k, v in gathered.items()
                if k not in session.short_term.pending_requirements
            }
            event = validation.needs_input_event()
            emit(event)
            return event
        plan = build_plan(intent, validation.inputs, query=query)
        session.short_term = TaskContext(
            task_id=ctx.task_id, intent=ctx.intent, active_plan_id=plan.plan_id
        )
        return self._execute(session, runtime, plan, None, emit)

    @staticmethod
    def _progress(emit):
        """Orchestrator `step` events become `step_progress` API messages."""

        def wrapped(event: dict):
            if event.get("type") == "step":
                event = {**event, "type": "step_progress"}
            emit(event)

        return wrapped

    def _resume(self, session, runtime, inputs, emit) -> dict:
        ctx = session.short_term
        plan_dict = self.store.load_plan_state(session.session_id, f"{ctx.active_plan_id}.plan")
        plan = TaskPlan.from_dict(plan_dict)
        state = ExecutionState.from_dict(
            self.store.load_plan_state(session.session_id, ctx.active_plan_id)
        )
        orchestrator = self.orchestrator_for(session)
        resolved = {name: self._resolve_input_value(v) for name, v in inputs.items()}
        state = orchestrator.resume_plan(state, resolved, plan, session, runtime,
                                         on_event=self._progress(emit))
        self.store.save_plan_state(session.session_id, f"{plan.plan_id}.plan", plan.to_dict())
        return self._finish(session, plan, state, emit)

    def _resolve_input_value(self, value):
        if isinstance(value, str) and re.fullmatch(r"[0-9a-f]{32}", value):
            try:
                _, ref = self.store.get_artifact(value)
                return ref.to_dict()
            except KeyError:
                return value
        return value

    def _execute(self, session, runtime, plan: TaskPlan, state, emit) -> dict:
        self.store.save_plan_state(session.session_id, f"{plan.plan_id}.plan", plan.to_dict())
        orchestrator = self.orchestrator_for(session)
        final = orchestrator.execute_plan(plan, session, runtime, state=state,
                                          on_event=self._progress(emit))
        return self._finish(session, plan, final, emit)

    def _finish(self, session, plan: TaskPlan, state: ExecutionState, emit) -> dict:
        if state.status == "suspended":
            event = {"type": "needs_input", "plan_id": plan.plan_id,
                     "requirements": state.pending_requirements}
            emit(event)
            return event
        if state.status == "failed":
            failing = next((s for s in state.step_states if s.status == "failed"), None)
            event = {"type": "error", "plan_id": plan.plan_id,
                     "step": failing.name if failing else "",
                     "error": failing.error if failing else "unknown"}
            emit(event)
            session.short_term = None
            return event

        for output in state.outputs.values():
            if isinstance(output, dict):
                refs = []
                if "artifact" in output:
                    refs.append(output["artifact"])
                refs.extend(output.get("artifacts", []))
                for ref in (output.get("artifact_sva"), output.get("artifact_json")):
                    if ref:
                        refs.append(ref)
                for ref in refs:
                    emit({"type": "artifact_ready", "artifact": ref})

        summary = self._summarize(plan, state)
        turn = self.store.make_turn(session, plan.agent, summary["text"])
        self.store.append_turn(session, turn)
        session.short_term = None
        event = {"type": "answer", **summary, "plan_id": plan.plan_id}
        emit(event)
        return event

    @staticmethod
    def _summarize(plan: TaskPlan, state: ExecutionState) -> dict:
        outputs = state.outputs
        if plan.agent == "security_qa":
            answer = outputs.get("answer", {})
            return {"text": answer.get("answer", ""), "citations": answer.get("citations", []),
                    "used_web": answer.get("used_web", False)}
        if plan.agent == "asset_identification":
            records = outputs.get("assets", {}).get("records", [])
            return {"text": f"Identified {len(records)} security asset(s); "
                            f"asset JSON artifact is ready for download.",
                    "count": len(records)}
        if plan.agent == "threat_modeling":
            cases = outputs.get("test_plan", {}).get("test_cases", [])
            threats = outputs.get("threats", {}).get("threats", [])
            confirmed = sum(1 for t in threats if t.get("relevance") == "confirmed")
            return {"text": f"Threat model complete: {confirmed} confirmed threat(s), "
                            f"{len(cases)} test case(s) in the plan."}
        if plan.agent == "vulnerability_detection":
            findings = outputs.get("vuln_report", {}).get("findings", [])
            vulnerable = [f for f in findings if f.get("verdict") == "vulnerable"]
            return {"text": f"Analyzed the design against the pattern catalog: "
                            f"{len(vulnerable)} vulnerable finding(s) of {len(findings)} total."}
        if plan.agent == "bug_validation":
            verdict = outputs.get("verdict", {}).get("verdict", {})
            return {"text": f"Bug validation verdict: {verdict.get('outcome', 'unknown')} "
                            f"at {verdict.get('time_ns', '?')} ns.",
                    "verdict": verdict}
        if plan.agent == "property_generation":
            validated = outputs.get("properties", {}).get("validated", [])
            return {"text": f"Generated {len(validated)} validated security propert"
                            f"{'y' if len(validated) == 1 else 'ies'}; .sva artifact ready."}
        return {"text": "task complete"}

    # -- config and feedback -----------------------------------------------

    def get_config(self, session_id: str) -> dict:
        return self.store.load(session_id).config.to_dict()

    def set_config(self, session_id: str, updates: dict) -> dict:
        with self.lock_for(session_id):
            session = self.store.load(session_id)
            merged = {**session.config.to_dict(), **updates}
            session.config = SessionConfig.from_dict(merged)
            self.store.save_meta(session)
            return session.config.to_dict()

    def feedback(self, session_id: str, text: str, on_event: EventCallback | None = None) -> dict:
        """Feedback turn routed straight to the chat agent's feedback path."""
        emit = on_event or (lambda event: None)
        with self.lock_for(session_id):
            session = self.store.load(session_id)
            runtime = self.runtime_for(session)
            turn = self.store.make_turn(session, "user", text)
            self.store.append_turn(session, turn)
            emit({"type": "user_message", "session_id": session_id, "turn": turn.index})
            from .agents import chat

            answer = chat.answer_feedback(text, session, runtime)
            reply = self.store.make_turn(session, "security_qa", answer.answer)
            self.store.append_turn(session, reply)
            event = {"type": "answer", **answer.to_dict()}
            emit(event)
            return event
