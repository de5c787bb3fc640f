"""Plan execution: ordering, retries, feedback loops, suspend/resume."""

import json

import pytest

from svworkbench.core import create_session
from svworkbench.errors import AlreadyComplete
from svworkbench.gateway import ChatRequest, PromptTemplate
from svworkbench.orchestrator import (
    NEEDS_INPUT,
    OK,
    RETRYABLE,
    ExecutionState,
    Orchestrator,
    StepOutcome,
)
from svworkbench.supervisor import StepSpec, TaskPlan

ECHO = PromptTemplate("echo", "step {step} with {payload}")


def gateway_step(step_name, produces_value=None):
    """Handler that routes through the gateway so fixtures script failures."""

    def handler(runtime, session, plan, inputs, feedback=""):
        response = runtime.gateway.complete(runtime.backend_id, ChatRequest(
            template_id="echo",
            variables={"step": step_name, "payload": json.dumps(inputs, sort_keys=True)},
        ))
        return StepOutcome(step_name, OK, produces_value or response.text)

    return handler


def plan_of(agent, steps, inputs):
    return TaskPlan(plan_id="plan-1", agent=agent, steps=steps, inputs=inputs)


@pytest.fixture
def echo_bench(bench):
    bench.gateway.register_template(ECHO)
    bench.writer.templates["echo"] = ECHO
    return bench


def four_step_plan():
    return plan_of("testagent", [
        StepSpec("scenario_generation", ["rtl_design", "bug_report"], "scenario"),
        StepSpec("testbench_generation", ["rtl_design", "scenario"], "testbench"),
        StepSpec("simulate", ["rtl_design", "testbench"], "trace"),
        StepSpec("validate", ["trace", "scenario"], "verdict"),
    ], {"rtl_design": "dut.v", "bug_report": "bug.json"})


def scripted_handlers():
    return {
        ("testagent", "scenario_generation"): gateway_step("scenario_generation"),
        ("testagent", "testbench_generation"): gateway_step("testbench_generation"),
        ("testagent", "simulate"): gateway_step("simulate"),
        ("testagent", "validate"): gateway_step("validate"),
    }


def script_step(bench, step, inputs, text="done", error=None):
    bench.writer.add("echo", text, variables={
        "step": step, "payload": json.dumps(inputs, sort_keys=True)}, error=error)


class TestExecutePlan:
    def test_four_steps_all_succeed(self, echo_bench):
        plan = four_step_plan()
        script_step(echo_bench, "scenario_generation",
                    {"rtl_design": "dut.v", "bug_report": "bug.json"}, "scenario out")
        script_step(echo_bench, "testbench_generation",
                    {"rtl_design": "dut.v", "scenario": "scenario out"}, "tb out")
        script_step(echo_bench, "simulate",
                    {"rtl_design": "dut.v", "testbench": "tb out"}, "trace out")
        script_step(echo_bench, "validate",
                    {"trace": "trace out", "scenario": "scenario out"}, "match")
        orch = Orchestrator(handlers=scripted_handlers())
        state = orch.execute_plan(plan, create_session(), echo_bench.runtime())
        assert state.status == "succeeded"
        assert all(s.status == "succeeded" for s in state.step_states)
        assert "verdict" in state.outputs
        assert state.outputs["verdict"] == "match"

    def test_transient_failure_consumes_exact_retries(self, echo_bench):
        plan = four_step_plan()
        inputs1 = {"rtl_design": "dut.v", "bug_report": "bug.json"}
        script_step(echo_bench, "scenario_generation", inputs1, "scenario out")
        inputs2 = {"rtl_design": "dut.v", "scenario": "scenario out"}
        script_step(echo_bench, "testbench_generation", inputs2, "", error="timeout")
        script_step(echo_bench, "testbench_generation", inputs2, "", error="timeout")
        script_step(echo_bench, "testbench_generation", inputs2, "tb out")
        script_step(echo_bench, "simulate",
                    {"rtl_design": "dut.v", "testbench": "tb out"}, "trace out")
        script_step(echo_bench, "validate",
                    {"trace": "trace out", "scenario": "scenario out"}, "match")
        orch = Orchestrator(handlers=scripted_handlers(), retry_limit=2)
        state = orch.execute_plan(plan, create_session(), echo_bench.runtime())
        assert state.status == "succeeded"
        assert state.step_states[1].attempts == 3

    def test_fatal_short_circuits(self, echo_bench):
        plan = four_step_plan()
        script_step(echo_bench, "scenario_generation",
                    {"rtl_design": "dut.v", "bug_report": "bug.json"}, "", error="fatal")
        orch = Orchestrator(handlers=scripted_handlers())
        state = orch.execute_plan(plan, create_session(), echo_bench.runtime())
        assert state.status == "failed"
        assert state.step_states[0].status == "failed"
        assert all(s.status == "pending" for s in state.step_states[1:])

    def test_retry_bound_never_exceeded(self, echo_bench):
        plan = four_step_plan()
        inputs1 = {"rtl_design": "dut.v", "bug_report": "bug.json"}
        for _ in range(6):
            script_step(echo_bench, "scenario_generation", inputs1, "", error="timeout")
        orch = Orchestrator(handlers=scripted_handlers(), retry_limit=2)
        state = orch.execute_plan(plan, create_session(), echo_bench.runtime())
        assert state.status == "failed"
        assert state.step_states[0].attempts == 3  # limit + 1

    def test_dependency_order_events(self, echo_bench):
        plan = four_step_plan()
        script_step(echo_bench, "scenario_generation",
                    {"rtl_design": "dut.v", "bug_report": "bug.json"}, "scenario out")
        script_step(echo_bench, "testbench_generation",
                    {"rtl_design": "dut.v", "scenario": "scenario out"}, "tb out")
        script_step(echo_bench, "simulate",
                    {"rtl_design": "dut.v", "testbench": "tb out"}, "trace out")
        script_step(echo_bench, "validate",
                    {"trace": "trace out", "scenario": "scenario out"}, "match")
        events = []
        orch = Orchestrator(handlers=scripted_handlers())
        orch.execute_plan(plan, create_session(), echo_bench.runtime(),
                          on_event=events.append)
        step_names = [s.name for s in plan.steps]
        for step in step_names:
            start = next(i for i, e in enumerate(events)
                         if e["step"] == step and e["status"] == "running")
            consumed = plan.steps[step_names.index(step)].consumes
            for dep_step in plan.steps:
                if dep_step.produces in consumed and dep_step.name in step_names:
                    done = next(i for i, e in enumerate(events)
                                if e["step"] == dep_step.name and e["status"] == "succeeded")
                    assert done < start

    def test_event_schema(self, echo_bench):
        plan = plan_of("testagent",
                       [StepSpec("scenario_generation", ["rtl_design", "bug_report"], "x")],
                       {"rtl_design": "d", "bug_report": "b"})
        script_step(echo_bench, "scenario_generation",
                    {"rtl_design": "d", "bug_report": "b"}, "ok")
        events = []
        orch = Orchestrator(handlers=scripted_handlers())
        orch.execute_plan(plan, create_session(), echo_bench.runtime(), on_event=events.append)
        assert events[0] == {"type": "step", "plan_id": "plan-1",
                             "step": "scenario_generation", "status": "running"}


class TestFeedbackRetry:
    def test_generation_feedback_included_in_retry(self, echo_bench):
        """Syntax-type failure re-invokes the generator with the error text."""
        calls = []

        def flaky_generator(runtime, session, plan, inputs, feedback=""):
            calls.append(feedback)
            if not feedback:
                return StepOutcome("gen", RETRYABLE, error="syntax error",
                                   feedback="tb.v:3:1: error: missing endmodule")
            return StepOutcome("gen", OK, f"fixed with: {feedback}")

        plan = plan_of("testagent", [StepSpec("gen", [], "out")], {})
        orch = Orchestrator(handlers={("testagent", "gen"): flaky_generator})
        state = orch.execute_plan(plan, create_session(), echo_bench.runtime())
        assert state.status == "succeeded"
        assert calls == ["", "tb.v:3:1: error: missing endmodule"]
        assert "missing endmodule" in state.outputs["out"]

    def test_feedback_rounds_bounded(self, echo_bench):
        def hopeless(runtime, session, plan, inputs, feedback=""):
            return StepOutcome("gen", RETRYABLE, error="bad", feedback="still bad")

        plan = plan_of("testagent", [StepSpec("gen", [], "out")], {})
        orch = Orchestrator(handlers={("testagent", "gen"): hopeless}, feedback_limit=3)
        state = orch.execute_plan(plan, create_session(), echo_bench.runtime())
        assert state.status == "failed"
        assert state.step_states[0].attempts == 4  # initial + 3 feedback rounds


def needs_answer_handler(runtime, session, plan, inputs, feedback=""):
    if "infrastructure" not in plan.inputs:
        return StepOutcome("ask", NEEDS_INPUT, requirements=[
            {"name": "infrastructure", "kind": "text", "description": "what tools exist?"}
        ])
    return StepOutcome("ask", OK, f"tools: {plan.inputs['infrastructure']}")


class TestSuspendResume:
    def make(self, echo_bench):
        plan = plan_of("testagent", [
            StepSpec("ask", [], "tools"),
            StepSpec("finish", ["tools"], "done"),
        ], {})

        def finish(runtime, session, plan, inputs, feedback=""):
            return StepOutcome("finish", OK, f"finish after {inputs['tools']}")

        handlers = {("testagent", "ask"): needs_answer_handler,
                    ("testagent", "finish"): finish}
        return plan, Orchestrator(handlers=handlers)

    def test_suspend_then_resume(self, echo_bench):
        plan, orch = self.make(echo_bench)
        session = create_session()
        runtime = echo_bench.runtime()
        state = orch.execute_plan(plan, session, runtime)
        assert state.status == "suspended"
        assert state.pending_requirements[0]["name"] == "infrastructure"
        state = orch.resume_plan(state, {"infrastructure": "a simulator"}, plan, session, runtime)
        assert state.status == "succeeded"
        assert state.outputs["done"] == "finish after tools: a simulator"

    def test_resume_with_empty_map_stays_suspended(self, echo_bench):
        plan, orch = self.make(echo_bench)
        session = create_session()
        runtime = echo_bench.runtime()
        state = orch.execute_plan(plan, session, runtime)
        resumed = orch.resume_plan(state, {}, plan, session, runtime)
        assert resumed.status == "suspended"
        assert resumed.pending_requirements

    def test_resume_after_completion(self, echo_bench):
        plan, orch = self.make(echo_bench)
        session = create_session()
        runtime = echo_bench.runtime()
        state = orch.execute_plan(plan, session, runtime)
        orch.resume_plan(state, {"infrastructure": "sim"}, plan, session, runtime)
        with pytest.raises(AlreadyComplete):
            orch.resume_plan(state, {"infrastructure": "sim"}, plan, session, runtime)

    def test_suspension_makes_no_backend_calls(self, echo_bench):
        plan, orch = self.make(echo_bench)
        session = create_session()
        runtime = echo_bench.runtime()
        echo_bench.gateway.prompt_log = []
        state = orch.execute_plan(plan, session, runtime)
        assert state.status == "suspended"
        assert echo_bench.gateway.prompt_log == []

    def test_crash_resume_equivalence(self, echo_bench):
        """Persist mid-plan, reload from JSON, resume: byte-identical outputs."""
        checkpoints = []

        def run(crash: bool):
            plan = four_step_plan()
            script_step(echo_bench, "scenario_generation",
                        {"rtl_design": "dut.v", "bug_report": "bug.json"}, "scenario out")
            script_step(echo_bench, "testbench_generation",
                        {"rtl_design": "dut.v", "scenario": "scenario out"}, "tb out")
            script_step(echo_bench, "simulate",
                        {"rtl_design": "dut.v", "testbench": "tb out"}, "trace out")
            script_step(echo_bench, "validate",
                        {"trace": "trace out", "scenario": "scenario out"}, "match")
            echo_bench.reload_gateway()
            echo_bench.gateway.register_template(ECHO)
            runtime = echo_bench.runtime()
            if not crash:
                orch = Orchestrator(handlers=scripted_handlers())
                final = orch.execute_plan(plan, create_session(), runtime)
            else:
                orch = Orchestrator(handlers=scripted_handlers(),
                                    checkpoint=lambda s: checkpoints.append(
                                        json.dumps(s.to_dict(), sort_keys=True)))

                class Stop(Exception):
                    pass

                count = {"n": 0}
                real_checkpoint = orch.checkpoint

                def crashing_checkpoint(state):
                    real_checkpoint(state)
                    count["n"] += 1
                    if count["n"] == 2:
                        raise Stop()

                orch.checkpoint = crashing_checkpoint
                try:
                    orch.execute_plan(plan, create_session(), runtime)
                except Stop:
                    pass
                reloaded = ExecutionState.from_dict(json.loads(checkpoints[-1]))
                orch2 = Orchestrator(handlers=scripted_handlers())
                final = orch2.execute_plan(plan, create_session(), runtime, state=reloaded)
            return json.dumps(final.outputs, sort_keys=True).encode()

        assert run(crash=False) == run(crash=True)
