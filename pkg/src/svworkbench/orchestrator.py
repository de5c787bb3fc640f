"""Runtime executor of task plans.

Steps run sequentially in plan order (every agent pipeline is a chain);
state checkpoints after each step so a suspended or interrupted plan can
resume exactly where it stopped. Transient failures retry with identical
inputs; generation steps that fail a syntax-type check retry with the error
text fed back to the generator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from .core import Session
from .errors import AlreadyComplete, BackendTimeout, PlanError
from .supervisor import TaskPlan, validate_plan_dataflow

logger = logging.getLogger(__name__)

DEFAULT_RETRY_LIMIT = 2
DEFAULT_FEEDBACK_LIMIT = 3

OK = "ok"
RETRYABLE = "retryable_error"
FATAL = "fatal_error"
NEEDS_INPUT = "needs_user_input"


@dataclass
class StepOutcome:
    step_name: str
    status: str  # ok | retryable_error | fatal_error | needs_user_input
    payload: Any = None
    error: str = ""
    requirements: list[dict] = field(default_factory=list)
    feedback: str = ""  # error text fed back to a generating step on retry


@dataclass
class StepState:
    name: str
    status: str = "pending"  # pending | running | succeeded | failed
    attempts: int = 0
    error: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "attempts": self.attempts,
                "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "StepState":
        return cls(d["name"], d["status"], d["attempts"], d.get("error", ""))


@dataclass
class ExecutionState:
    plan_id: str
    agent: str
    step_states: list[StepState]
    outputs: dict[str, Any] = field(default_factory=dict)
    status: str = "running"  # running | suspended | succeeded | failed
    current_step: int = 0
    pending_requirements: list[dict] = field(default_factory=list)
    supplied_inputs: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "agent": self.agent,
            "step_states": [s.to_dict() for s in self.step_states],
            "outputs": self.outputs,
            "status": self.status,
            "current_step": self.current_step,
            "pending_requirements": self.pending_requirements,
            "supplied_inputs": self.supplied_inputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionState":
        return cls(
            plan_id=d["plan_id"],
            agent=d["agent"],
            step_states=[StepState.from_dict(s) for s in d["step_states"]],
            outputs=dict(d.get("outputs", {})),
            status=d.get("status", "running"),
            current_step=d.get("current_step", 0),
            pending_requirements=list(d.get("pending_requirements", [])),
            supplied_inputs=dict(d.get("supplied_inputs", {})),
        )


StepHandler = Callable[..., StepOutcome]
EventCallback = Callable[[dict], None]


class Orchestrator:
    def __init__(
        self,
        handlers: dict[tuple[str, str], StepHandler] | None = None,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        feedback_limit: int = DEFAULT_FEEDBACK_LIMIT,
        checkpoint: Callable[[ExecutionState], None] | None = None,
    ):
        if handlers is None:
            from .agents.registry import HANDLERS

            handlers = HANDLERS
        self.handlers = handlers
        self.retry_limit = retry_limit
        self.feedback_limit = feedback_limit
        self.checkpoint = checkpoint or (lambda state: None)

    # -- public api ------------------------------------------------------

    def execute_plan(
        self,
        plan: TaskPlan,
        session: Session,
        runtime,
        state: ExecutionState | None = None,
        on_event: EventCallback | None = None,
    ) -> ExecutionState:
        validate_plan_dataflow(plan)
        if state is None:
            state = ExecutionState(
                plan_id=plan.plan_id,
                agent=plan.agent,
                step_states=[StepState(s.name) for s in plan.steps],
            )
        emit = on_event or (lambda event: None)

        while state.current_step < len(plan.steps):
            step = plan.steps[state.current_step]
            step_state = state.step_states[state.current_step]
            handler = self.handlers.get((plan.agent, step.name))
            if handler is None:
                raise PlanError(f"no handler for ({plan.agent}, {step.name})")

            inputs = self._collect_inputs(plan, state, step.consumes)
            step_state.status = "running"
            emit(self._event(state, step.name, "running"))

            outcome = self._run_with_recovery(handler, runtime, session, plan, state, step, inputs)

            if outcome.status == NEEDS_INPUT:
                step_state.status = "pending"
                state.status = "suspended"
                state.pending_requirements = outcome.requirements
                emit(self._event(state, step.name, "suspended"))
                self.checkpoint(state)
                return state
            if outcome.status == OK:
                step_state.status = "succeeded"
                state.outputs[step.produces] = outcome.payload
                emit(self._event(state, step.name, "succeeded"))
                state.current_step += 1
                self.checkpoint(state)
                continue
            step_state.status = "failed"
            step_state.error = outcome.error
            state.status = "failed"
            emit(self._event(state, step.name, "failed"))
            self.checkpoint(state)
            return state

        state.status = "succeeded"
        self.checkpoint(state)
        return state

    def resume_plan(
        self,
        state: ExecutionState,
        supplied_inputs: dict[str, Any],
        plan: TaskPlan,
        session: Session,
        runtime,
        on_event: EventCallback | None = None,
    ) -> ExecutionState:
        """Re-invoke the suspended step with the user-supplied inputs."""
        if state.status in ("succeeded", "failed"):
            raise AlreadyComplete(f"plan {state.plan_id} already {state.status}")
        if state.status != "suspended":
            raise PlanError(f"plan {state.plan_id} is not suspended")
        pending_names = [r["name"] for r in state.pending_requirements]
        missing = [n for n in pending_names if n not in supplied_inputs]
        if missing:
            # requirements not covered: stay suspended, caller re-emits needs_input
            return state
        state.supplied_inputs.update(supplied_inputs)
        plan.inputs.update(supplied_inputs)
        state.status = "running"
        state.pending_requirements = []
        return self.execute_plan(plan, session, runtime, state=state, on_event=on_event)

    # -- internals ---------------------------------------------------------

    def _collect_inputs(self, plan: TaskPlan, state: ExecutionState, consumes: list[str]) -> dict:
        inputs = {}
        for name in consumes:
            if name in state.outputs:
                inputs[name] = state.outputs[name]
            elif name in plan.inputs:
                inputs[name] = plan.inputs[name]
        return inputs

    def _run_with_recovery(self, handler, runtime, session, plan, state, step, inputs) -> StepOutcome:
        step_state = state.step_states[state.current_step]
        feedback = ""
        feedback_rounds = 0
        while True:
            step_state.attempts += 1
            try:
                outcome = handler(runtime, session, plan, dict(inputs), feedback=feedback)
            except BackendTimeout as exc:
                outcome = StepOutcome(step.name, RETRYABLE, error=str(exc))
            except Exception as exc:  # handler bugs and fatal agent errors
                outcome = StepOutcome(step.name, FATAL, error=f"{type(exc).__name__}: {exc}")

            if outcome.status in (OK, NEEDS_INPUT):
                return outcome
            action = self.handle_failure(state, step.name, outcome, feedback_rounds)
            if action == "retry":
                logger.info("retrying step %s (attempt %d)", step.name, step_state.attempts + 1)
                continue
            if action == "feedback_retry":
                feedback = outcome.feedback
                feedback_rounds += 1
                logger.info("regenerating step %s with feedback (round %d)", step.name,
                            feedback_rounds)
                continue
            return outcome

    def handle_failure(self, state: ExecutionState, step_name: str, outcome: StepOutcome,
                       feedback_rounds: int = 0) -> str:
        """Corrective action for a failed step: retry, feedback_retry, or escalate.

        Retryable errors re-run with identical inputs up to the retry limit.
        Syntax-type generation failures re-run with the error text appended
        as feedback, up to the feedback limit.
        """
        step_state = next(s for s in state.step_states if s.name == step_name)
        if outcome.status == RETRYABLE and outcome.feedback:
            if feedback_rounds < self.feedback_limit:
                return "feedback_retry"
            return "escalate"
        if outcome.status == RETRYABLE:
            if step_state.attempts <= self.retry_limit:
                return "retry"
            return "escalate"
        return "escalate"

    @staticmethod
    def _event(state: ExecutionState, step: str, status: str) -> dict:
        return {"type": "step", "plan_id": state.plan_id, "step": step, "status": status}
