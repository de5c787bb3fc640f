"""First-stage controller: intent, contextual validation, task plans.

Intent classification uses a constrained labeled-line reply format parsed
leniently (case-insensitive, first match wins) so verbose backends still
route correctly. Requirement tables are static per agent: determinism over
cleverness.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import AGENT_NAMES, ARTIFACT_KINDS, ArtifactRef, Session, new_id
from .errors import ClassificationError, EmptyQuery, PlanError
from .gateway import ChatRequest, Gateway

# when a backend reports several categories, the first in this order runs;
# the rest are suggested to the user as follow-ups
AGENT_PRIORITY = (
    "bug_validation",
    "property_generation",
    "vulnerability_detection",
    "threat_modeling",
    "asset_identification",
    "security_qa",
)

MODES = ("informational", "task")


@dataclass
class IntentResolution:
    categories: list[str]
    mode: str
    detected_artifacts: list[str] = field(default_factory=list)
    mentioned_vulnerabilities: list[str] = field(default_factory=list)
    in_domain: bool = True

    def primary_agent(self) -> str:
        for agent in AGENT_PRIORITY:
            if agent in self.categories:
                return agent
        return self.categories[0] if self.categories else "security_qa"

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "mode": self.mode,
            "detected_artifacts": list(self.detected_artifacts),
            "mentioned_vulnerabilities": list(self.mentioned_vulnerabilities),
            "in_domain": self.in_domain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntentResolution":
        return cls(
            categories=list(d["categories"]),
            mode=d["mode"],
            detected_artifacts=list(d.get("detected_artifacts", [])),
            mentioned_vulnerabilities=list(d.get("mentioned_vulnerabilities", [])),
            in_domain=d.get("in_domain", True),
        )


@dataclass
class Requirement:
    name: str
    kind: str  # "artifact:<artifact-kind>" or "text"
    description: str

    @property
    def artifact_kind(self) -> str | None:
        return self.kind.removeprefix("artifact:") if self.kind.startswith("artifact:") else None


@dataclass
class RequirementSpec:
    agent: str
    required: list[Requirement]


REQUIREMENTS: dict[str, RequirementSpec] = {
    "security_qa": RequirementSpec("security_qa", []),
    "asset_identification": RequirementSpec(
        "asset_identification",
        [Requirement("spec_document", "artifact:spec_document",
                     "the SoC hardware specification document to analyze")],
    ),
    "threat_modeling": RequirementSpec(
        "threat_modeling",
        [
            Requirement("spec_document", "artifact:spec_document",
                        "the design specification document"),
            Requirement("asset_json", "artifact:asset_json",
                        "the identified security asset list (JSON)"),
        ],
    ),
    "vulnerability_detection": RequirementSpec(
        "vulnerability_detection",
        [Requirement("rtl_design", "artifact:rtl_design", "the RTL design file to analyze")],
    ),
    "bug_validation": RequirementSpec(
        "bug_validation",
        [
            Requirement("rtl_design", "artifact:rtl_design", "the RTL design under test"),
            Requirement("bug_report", "artifact:bug_report",
                        "the bug identification report describing the suspected flaw"),
        ],
    ),
    "property_generation": RequirementSpec(
        "property_generation",
        [
            Requirement("rtl_design", "artifact:rtl_design", "the RTL design file"),
            Requirement("threat_vectors", "text",
                        "threat vectors of concern, e.g. 'Improper Access Control'"),
        ],
    ),
}


@dataclass
class StepSpec:
    name: str
    consumes: list[str]
    produces: str

    def to_dict(self) -> dict:
        return {"name": self.name, "consumes": list(self.consumes), "produces": self.produces}

    @classmethod
    def from_dict(cls, d: dict) -> "StepSpec":
        return cls(d["name"], list(d["consumes"]), d["produces"])


@dataclass
class TaskPlan:
    plan_id: str
    agent: str
    steps: list[StepSpec]
    inputs: dict

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "agent": self.agent,
            "steps": [s.to_dict() for s in self.steps],
            "inputs": self.inputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskPlan":
        return cls(d["plan_id"], d["agent"], [StepSpec.from_dict(s) for s in d["steps"]],
                   dict(d["inputs"]))


def validate_plan_dataflow(plan: TaskPlan) -> None:
    """Every consumed name must come from an earlier step or plan inputs."""
    available = set(plan.inputs)
    produced = set()
    for step in plan.steps:
        for name in step.consumes:
            if name not in available:
                raise PlanError(
                    f"step {step.name!r} consumes {name!r} which nothing produced"
                )
        if step.produces in produced:
            raise PlanError(f"duplicate produces name {step.produces!r}")
        produced.add(step.produces)
        available.add(step.produces)


_LINE_KEYS = ("category", "categories", "mode", "in_domain", "artifacts", "vulnerabilities")


def _parse_labeled(text: str) -> dict[str, str]:
    """First value for each labeled line, case-insensitive on the key."""
    found: dict[str, str] = {}
    for line in text.splitlines():
        m = re.match(r"\s*([A-Za-z_ ]+?)\s*:\s*(.*)", line)
        if not m:
            continue
        key = m.group(1).strip().lower().replace(" ", "_")
        if key not in found:
            found[key] = m.group(2).strip()
    return found


def _split_list(value: str) -> list[str]:
    items = [item.strip() for item in re.split(r"[,;]", value) if item.strip()]
    return [i for i in items if i.lower() not in ("none", "n/a", "-")]


def detect_intent(
    session: Session,
    query: str,
    attachments: list[ArtifactRef] | None = None,
    gateway: Gateway | None = None,
) -> IntentResolution:
    """Classify the request into agent categories via the backend."""
    if not query or not query.strip():
        raise EmptyQuery("query is empty")
    attachments = attachments or []
    request = ChatRequest(
        template_id="intent_detect",
        variables={
            "query": query.strip(),
            "attachment_kinds": ", ".join(a.kind for a in attachments) or "none",
        },
    )
    response = gateway.complete(session.config.backend_id, request)
    fields = _parse_labeled(response.text)

    raw_categories = fields.get("category") or fields.get("categories")
    if raw_categories is None:
        raise ClassificationError(f"no category line in backend reply: {response.text[:120]!r}")
    categories = [c.lower().replace(" ", "_") for c in _split_list(raw_categories)]
    categories = [c for c in categories if c in AGENT_NAMES]
    if not categories:
        raise ClassificationError(f"no recognizable category in {raw_categories!r}")

    in_domain = fields.get("in_domain", "yes").lower() not in ("no", "false", "0")
    mode = fields.get("mode", "informational").lower()
    if mode not in MODES:
        mode = "informational"

    detected = [a.kind for a in attachments]
    for kind in _split_list(fields.get("artifacts", "")):
        normalized = kind.lower().replace(" ", "_")
        if normalized in ARTIFACT_KINDS and normalized not in detected:
            detected.append(normalized)

    vulnerabilities = _split_list(fields.get("vulnerabilities", ""))

    if not in_domain:
        return IntentResolution(
            categories=["security_qa"],
            mode="informational",
            detected_artifacts=detected,
            mentioned_vulnerabilities=vulnerabilities,
            in_domain=False,
        )
    return IntentResolution(categories, mode, detected, vulnerabilities, True)


@dataclass
class ContextValidation:
    complete: bool
    inputs: dict = field(default_factory=dict)
    missing: list[Requirement] = field(default_factory=list)

    def needs_input_event(self) -> dict:
        return {
            "type": "needs_input",
            "requirements": [
                {"name": r.name, "kind": r.kind, "description": r.description}
                for r in self.missing
            ],
        }


def validate_context(
    intent: IntentResolution,
    session: Session,
    attachments: list[ArtifactRef] | None = None,
) -> ContextValidation:
    """Compare gathered inputs and attachments against the agent's
    requirement table; the missing set keeps declaration order."""
    if not intent.in_domain:
        raise PlanError("off-domain requests are rejected before validation")
    agent = intent.primary_agent()
    spec = REQUIREMENTS[agent]
    attachments = attachments or []
    gathered: dict = {}
    if session.short_term is not None:
        gathered.update(session.short_term.gathered_inputs)

    inputs: dict = {}
    missing: list[Requirement] = []
    for req in spec.required:
        if req.name in gathered:
            inputs[req.name] = gathered[req.name]
            continue
        if req.artifact_kind is not None:
            match = next((a for a in attachments if a.kind == req.artifact_kind), None)
            if match is not None:
                inputs[req.name] = match.to_dict()
                continue
        missing.append(req)
    if missing:
        return ContextValidation(False, inputs, missing)
    return ContextValidation(True, inputs, [])


def build_plan(intent: IntentResolution, inputs: dict, query: str = "") -> TaskPlan:
    """Emit the canonical pipeline of the assigned agent as a TaskPlan."""
    from .agents.registry import PIPELINES  # late import; agents depend on supervisor types

    agent = intent.primary_agent()
    if agent not in PIPELINES:
        raise PlanError(f"no pipeline registered for agent {agent!r}")
    steps = [StepSpec(s.name, list(s.consumes), s.produces) for s in PIPELINES[agent]]
    plan_inputs = dict(inputs)
    plan_inputs.setdefault("query", query)
    plan = TaskPlan(plan_id=new_id(), agent=agent, steps=steps, inputs=plan_inputs)
    validate_plan_dataflow(plan)
    return plan


REJECTION_TEMPLATE = (
    "This workbench only handles hardware security verification: security "
    "questions and answers, security asset identification, threat modeling "
    "and test planning, RTL vulnerability detection, simulation-based bug "
    "validation, and security property/assertion generation. The request "
    "{summary!r} falls outside that scope, so no task was started. Please "
    "rephrase it in terms of an SoC design, RTL module, or hardware "
    "security concern."
)


def reject_off_domain(query: str) -> str:
    """Fixed-template refusal naming the supported scope; no agent invoked."""
    summary = query.strip()
    if len(summary) > 60:
        summary = summary[:57] + "..."
    return REJECTION_TEMPLATE.format(summary=summary)
