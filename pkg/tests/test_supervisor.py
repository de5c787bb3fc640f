"""Intent detection, context validation, plan building, rejection."""

import pytest

from routing_table import ROUTING_TABLE, reply
from svworkbench.core import ArtifactRef, create_session, new_id
from svworkbench.errors import ClassificationError, EmptyQuery, PlanError
from svworkbench.supervisor import (
    IntentResolution,
    REQUIREMENTS,
    TaskPlan,
    StepSpec,
    build_plan,
    detect_intent,
    reject_off_domain,
    validate_context,
    validate_plan_dataflow,
)


def artifact(kind: str) -> ArtifactRef:
    return ArtifactRef(artifact_id=new_id(), kind=kind, filename=f"f.{kind}", byte_length=10)


def script_intent(bench, query, kinds, text):
    bench.writer.add(
        "intent_detect",
        text,
        variables={"query": query.strip(), "attachment_kinds": ", ".join(kinds) or "none"},
    )


class TestDetectIntent:
    def test_fuzzing_question_informational(self, bench):
        query = ("List all frameworks that use fuzzing techniques for verification "
                 "of hardware design")
        script_intent(bench, query, [],
                      reply("security_qa", mode="informational"))
        session = create_session()
        intent = detect_intent(session, query, [], bench.gateway)
        assert intent.categories == ["security_qa"]
        assert intent.mode == "informational"
        assert intent.in_domain

    def test_empty_query(self, bench):
        with pytest.raises(EmptyQuery):
            detect_intent(create_session(), "   ", [], bench.gateway)

    def test_task_intent_with_attachment(self, bench):
        query = "Generate assertions for this design"
        script_intent(bench, query, ["rtl_design"],
                      reply("property_generation", artifacts="rtl_design"))
        intent = detect_intent(create_session(), query, [artifact("rtl_design")], bench.gateway)
        assert intent.categories == ["property_generation"]
        assert intent.mode == "task"
        assert intent.detected_artifacts == ["rtl_design"]

    def test_multi_category_priority(self, bench):
        query = "scan and write assertions"
        script_intent(bench, query, [],
                      reply("vulnerability_detection, property_generation"))
        intent = detect_intent(create_session(), query, [], bench.gateway)
        assert intent.primary_agent() == "property_generation"

    def test_off_domain_forced_shape(self, bench):
        query = "best pasta recipe"
        script_intent(bench, query, [], reply("security_qa", in_domain="no"))
        intent = detect_intent(create_session(), query, [], bench.gateway)
        assert not intent.in_domain
        assert intent.categories == ["security_qa"]
        assert intent.mode == "informational"

    def test_unparseable_reply(self, bench):
        query = "odd reply"
        script_intent(bench, query, [], "I think this is about hardware maybe?")
        with pytest.raises(ClassificationError):
            detect_intent(create_session(), query, [], bench.gateway)


class TestValidateContext:
    def test_property_generation_missing_threat_vectors(self):
        intent = IntentResolution(["property_generation"], "task")
        validation = validate_context(intent, create_session(), [artifact("rtl_design")])
        assert not validation.complete
        assert [r.name for r in validation.missing] == ["threat_vectors"]
        event = validation.needs_input_event()
        assert event["type"] == "needs_input"
        assert event["requirements"][0]["name"] == "threat_vectors"

    def test_bug_validation_complete(self):
        intent = IntentResolution(["bug_validation"], "task")
        validation = validate_context(
            intent, create_session(), [artifact("rtl_design"), artifact("bug_report")]
        )
        assert validation.complete
        assert set(validation.inputs) == {"rtl_design", "bug_report"}

    def test_asset_identification_nothing_attached(self):
        intent = IntentResolution(["asset_identification"], "task")
        validation = validate_context(intent, create_session(), [])
        assert not validation.complete
        assert [r.name for r in validation.missing] == ["spec_document"]

    def test_missing_set_stable_order(self):
        intent = IntentResolution(["threat_modeling"], "task")
        validation = validate_context(intent, create_session(), [])
        assert [r.name for r in validation.missing] == ["spec_document", "asset_json"]

    def test_refinement_convergence(self):
        """Supplying exactly the named missing items completes validation."""
        for agent, spec in REQUIREMENTS.items():
            intent = IntentResolution([agent], "task")
            session = create_session()
            validation = validate_context(intent, session, [])
            attachments = []
            from svworkbench.core import TaskContext

            gathered = {}
            for req in validation.missing:
                if req.artifact_kind:
                    attachments.append(artifact(req.artifact_kind))
                else:
                    gathered[req.name] = "supplied text"
            session.short_term = TaskContext(task_id="t", gathered_inputs=gathered)
            second = validate_context(intent, session, attachments)
            assert second.complete, agent


class TestBuildPlan:
    def test_bug_validation_steps(self):
        intent = IntentResolution(["bug_validation"], "task")
        plan = build_plan(intent, {"rtl_design": "r", "bug_report": "b"}, query="validate")
        assert [s.name for s in plan.steps] == [
            "scenario_generation", "testbench_generation", "simulate", "validate",
        ]
        assert plan.steps[-1].produces == "verdict"

    def test_asset_identification_steps(self):
        intent = IntentResolution(["asset_identification"], "task")
        plan = build_plan(intent, {"spec_document": "s"}, query="assets")
        assert [s.name for s in plan.steps] == [
            "extract_hierarchy", "summarize_modules", "generate_assets", "critique_assets",
        ]

    def test_security_qa_single_step(self):
        intent = IntentResolution(["security_qa"], "informational")
        plan = build_plan(intent, {}, query="what is fuzzing")
        assert [s.name for s in plan.steps] == ["answer"]

    def test_unknown_agent_plan_error(self):
        intent = IntentResolution(["made_up_agent"], "task")
        with pytest.raises(PlanError):
            build_plan(intent, {}, query="x")

    def test_all_pipelines_dataflow_sound(self):
        from svworkbench.agents.registry import PIPELINES

        for agent, steps in PIPELINES.items():
            spec = REQUIREMENTS[agent]
            inputs = {r.name: "value" for r in spec.required}
            intent = IntentResolution([agent], "task")
            plan = build_plan(intent, inputs, query="q")
            validate_plan_dataflow(plan)  # raises on violation

    def test_dataflow_violation_detected(self):
        plan = TaskPlan(
            plan_id="p", agent="security_qa",
            steps=[StepSpec("s1", ["ghost"], "out")], inputs={},
        )
        with pytest.raises(PlanError):
            validate_plan_dataflow(plan)


class TestRejectOffDomain:
    def test_refusal_names_scope(self):
        text = reject_off_domain("best pasta recipe")
        assert "hardware security verification" in text
        assert "pasta" in text

    def test_long_query_truncated(self):
        text = reject_off_domain("x" * 500)
        assert len(text) < 600


class TestRoutingSuite:
    def test_all_thirty_queries_route_as_expected(self, bench):
        """100% agreement with the fixture table, never a silent drop."""
        for query, kinds, scripted, expected in ROUTING_TABLE:
            script_intent(bench, query, kinds, scripted)
        for query, kinds, scripted, expected in ROUTING_TABLE:
            session = create_session()
            attachments = [artifact(k) for k in kinds]
            intent = detect_intent(session, query, attachments, bench.gateway)
            if expected == "reject":
                assert not intent.in_domain, query
                refusal = reject_off_domain(query)
                assert refusal
                continue
            assert intent.in_domain, query
            agent = intent.primary_agent()
            assert agent == expected, (query, agent, expected)
            validation = validate_context(intent, session, attachments)
            if validation.complete:
                plan = build_plan(intent, validation.inputs, query=query)
                validate_plan_dataflow(plan)
            else:
                assert validation.missing, query
