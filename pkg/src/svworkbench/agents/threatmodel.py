"""Threat modeling and test plan generation agent.

Flow 1 walks a curated threat knowledge base and refines relevance through
a bounded dialogue with the engineer; Flow 2 extracts security policies
from the specification and ISA stores per identified asset. Either flow
feeds the test plan generator, which asks once about available
infrastructure before emitting structured test cases.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from ..errors import FlowSelectionError, PreconditionError, ThreatKbMissing
from ..knowledge import KnowledgeChunk, VectorStore, build_store, embed, search
from ..runtime import AgentRuntime, load_table

logger = logging.getLogger(__name__)

THREAT_CLASSES = ("physical", "supply_chain", "software_exploitable")
RELEVANCES = ("candidate", "confirmed", "excluded")

DIALOGUE_ROUND_CAP = 5
QUESTIONS_PER_ROUND = 3

ROUND_ONE_QUESTIONS = (
    "What are the key design characteristics (process node, package, external interfaces)?",
    "What is the application context: where is the device deployed and who can touch it?",
    "What are the supply chain origins: which design, EDA, and fabrication steps are outsourced?",
)


@dataclass
class ThreatEntry:
    threat_id: str
    name: str
    threat_class: str
    description: str
    relevance: str = "candidate"
    rationale: str = ""

    def validate(self) -> bool:
        if self.relevance in ("confirmed", "excluded") and not self.rationale:
            return False
        return self.threat_class in THREAT_CLASSES and self.relevance in RELEVANCES

    def to_dict(self) -> dict:
        return {
            "threat_id": self.threat_id,
            "name": self.name,
            "class": self.threat_class,
            "description": self.description,
            "relevance": self.relevance,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThreatEntry":
        return cls(d["threat_id"], d["name"], d["class"], d["description"],
                   d.get("relevance", "candidate"), d.get("rationale", ""))


@dataclass
class SecurityPolicy:
    policy_id: str
    asset_ref: str
    statement: str
    source_spans: list[str]
    significance: str = ""
    potential_vulnerabilities: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "asset_ref": self.asset_ref,
            "statement": self.statement,
            "source_spans": list(self.source_spans),
            "significance": self.significance,
            "potential_vulnerabilities": list(self.potential_vulnerabilities),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SecurityPolicy":
        return cls(d["policy_id"], d["asset_ref"], d["statement"], list(d["source_spans"]),
                   d.get("significance", ""), list(d.get("potential_vulnerabilities", [])))


@dataclass
class TestCase:
    test_id: str
    target: str
    objective: str
    methodology: str
    expected_behavior: str
    evaluation_criteria: str
    tool_recommendations: list[str] = field(default_factory=list)

    def validate(self) -> bool:
        return all([self.target, self.objective, self.methodology, self.expected_behavior,
                    self.evaluation_criteria])

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "target": self.target,
            "objective": self.objective,
            "methodology": self.methodology,
            "expected_behavior": self.expected_behavior,
            "evaluation_criteria": self.evaluation_criteria,
            "tool_recommendations": list(self.tool_recommendations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestCase":
        return cls(d["test_id"], d["target"], d["objective"], d["methodology"],
                   d["expected_behavior"], d["evaluation_criteria"],
                   list(d.get("tool_recommendations", [])))


def build_threat_kb() -> VectorStore:
    """Vector store over the bundled threat knowledge base, one chunk per entry."""
    chunks = []
    for i, entry in enumerate(load_table("threat_kb")):
        chunks.append(
            KnowledgeChunk(
                chunk_id=entry["threat_id"],
                source_doc="threat_kb",
                ordinal=i,
                text=f"{entry['name']}. {entry['description']}",
                token_estimate=len(entry["description"].split()),
            )
        )
    return build_store("threat-kb", "hardware threat knowledge base", chunks)


def kb_entry(threat_id: str) -> dict:
    for entry in load_table("threat_kb"):
        if entry["threat_id"] == threat_id:
            return entry
    raise KeyError(threat_id)


def select_flow(design_context: str, assets: list[dict], runtime: AgentRuntime) -> str:
    """Constrained three-way choice: flow1, flow2, or both."""
    asset_lines = ", ".join(a.get("Asset_Name", a.get("asset_name", "?")) for a in assets) or "none"
    variables = {"context": design_context, "assets": asset_lines}
    for attempt in range(2):
        response = runtime.complete("threat_flow", variables)
        m = re.search(r"\b(flow1|flow2|both)\b", response.text, re.IGNORECASE)
        if m:
            return m.group(1).lower()
        variables = dict(variables, context=design_context + "\nReply with flow: flow1, flow2, or both only.")
    raise FlowSelectionError(f"unconstrained flow reply: {response.text[:120]!r}")


@dataclass
class ThreatIdentification:
    entries: list[ThreatEntry]
    pending_questions: list[str] = field(default_factory=list)
    rounds_used: int = 0

    @property
    def needs_dialogue(self) -> bool:
        return bool(self.pending_questions)


def identify_threats(
    design_context: str,
    threat_kb_store: VectorStore,
    dialogue: list[dict],
    runtime: AgentRuntime,
    round_cap: int = DIALOGUE_ROUND_CAP,
) -> ThreatIdentification:
    """Iteratively confirm/exclude retrieved threat candidates.

    ``dialogue`` is a list of completed rounds: {"questions": [...],
    "answers": [...]}. When another round is needed the result carries
    pending questions instead of a final list; candidates left unresolved
    at the round cap stay flagged as candidate.
    """
    if len(threat_kb_store) == 0:
        raise ThreatKbMissing("threat knowledge base store is empty")
    hits = search(threat_kb_store, embed(design_context), k=6)
    # 0.05 floor: below it the overlap is hash noise, not shared vocabulary
    seeds = [cid for cid, score in hits if score > 0.05]
    if not seeds:
        return ThreatIdentification(entries=[])
    entries = {cid: ThreatEntry(
        threat_id=cid,
        name=kb_entry(cid)["name"],
        threat_class=kb_entry(cid)["class"],
        description=kb_entry(cid)["description"],
    ) for cid in seeds}

    rounds_done = 0
    next_questions: list[str] = []
    for round_index, round_data in enumerate(dialogue[:round_cap]):
        if not any(e.relevance == "candidate" for e in entries.values()):
            break
        rounds_done += 1
        transcript = []
        for prior in dialogue[: round_index + 1]:
            for q, a in zip(prior.get("questions", []), prior.get("answers", [])):
                transcript.append(f"Q: {q}\nA: {a}")
        candidates_text = "\n".join(
            f"{e.threat_id}: {e.name} ({e.threat_class}) [{e.relevance}]"
            for e in entries.values()
        )
        response = runtime.complete(
            "threat_evaluate",
            {
                "context": design_context,
                "candidates": candidates_text,
                "dialogue": "\n\n".join(transcript),
            },
        )
        next_questions = []
        for line in response.text.splitlines():
            m = re.match(r"\s*(confirm|exclude)\s*:\s*([\w-]+)\s*(?:\|\s*(.*))?$", line,
                         re.IGNORECASE)
            if m and m.group(2) in entries:
                entry = entries[m.group(2)]
                entry.relevance = "confirmed" if m.group(1).lower() == "confirm" else "excluded"
                entry.rationale = (m.group(3) or "").strip() or "decided from engineer dialogue"
                continue
            m = re.match(r"\s*ask\s*:\s*(.+)", line, re.IGNORECASE)
            if m and len(next_questions) < QUESTIONS_PER_ROUND:
                next_questions.append(m.group(1).strip())

    unresolved = [e for e in entries.values() if e.relevance == "candidate"]
    if not unresolved:
        return ThreatIdentification(list(entries.values()), rounds_used=rounds_done)
    if rounds_done == 0:
        return ThreatIdentification(
            list(entries.values()),
            pending_questions=list(ROUND_ONE_QUESTIONS),
            rounds_used=0,
        )
    if next_questions and rounds_done < round_cap and rounds_done == len(dialogue):
        # the backend still has questions and the engineer has not answered them yet
        return ThreatIdentification(
            list(entries.values()), pending_questions=next_questions,
            rounds_used=rounds_done,
        )
    for entry in entries.values():
        if entry.relevance == "candidate":
            entry.rationale = entry.rationale or "unresolved at dialogue round cap"
    return ThreatIdentification(list(entries.values()), rounds_used=rounds_done)


@dataclass
class PolicyBundle:
    policies: list[SecurityPolicy]
    uncovered_assets: list[str] = field(default_factory=list)


def generate_policies(
    spec_store: VectorStore,
    isa_store: VectorStore,
    assets: list[dict],
    runtime: AgentRuntime,
) -> PolicyBundle:
    """Two-stage RAG policy extraction per asset.

    Assets with no retrievable spans in either store land in
    ``uncovered_assets`` instead of failing the run.
    """
    if not assets:
        return PolicyBundle([], [])
    policies: list[SecurityPolicy] = []
    uncovered: list[str] = []
    counter = 0
    for asset in assets:
        name = asset.get("Asset_Name") or asset.get("asset_name") or ""
        ip = asset.get("IP") or asset.get("ip") or ""
        query = embed(f"{ip} {name}")
        spec_hits = [(cid, s) for cid, s in search(spec_store, query, 3) if s > 0.0]
        isa_hits = [(cid, s) for cid, s in search(isa_store, query, 3) if s > 0.0]
        if not spec_hits and not isa_hits:
            uncovered.append(name)
            continue
        spec_text = "\n\n".join(spec_store.chunks[cid].text for cid, _ in spec_hits) or "none"
        isa_text = "\n\n".join(isa_store.chunks[cid].text for cid, _ in isa_hits) or "none"
        response = runtime.complete(
            "policy_extract",
            {"asset": f"{name} (module {ip})", "spec_spans": spec_text, "isa_spans": isa_text},
        )
        spans = [cid for cid, _ in spec_hits] + [cid for cid, _ in isa_hits]
        for block in re.split(r"(?=^\s*statement\s*:)", response.text,
                              flags=re.IGNORECASE | re.MULTILINE):
            fields = {}
            for line in block.splitlines():
                m = re.match(r"\s*(statement|significance|vulnerabilities)\s*:\s*(.+)", line,
                             re.IGNORECASE)
                if m:
                    fields.setdefault(m.group(1).lower(), m.group(2).strip())
            if "statement" not in fields:
                continue
            counter += 1
            policies.append(
                SecurityPolicy(
                    policy_id=f"pol-{counter:03d}",
                    asset_ref=name,
                    statement=fields["statement"],
                    source_spans=spans,
                    significance=fields.get("significance", ""),
                    potential_vulnerabilities=[
                        v.strip() for v in fields.get("vulnerabilities", "").split(";")
                        if v.strip()
                    ],
                )
            )
    return PolicyBundle(policies, uncovered)


INFRA_QUESTIONS = (
    ("infrastructure", "What verification infrastructure is available (simulators, formal tools, lab equipment)?"),
    ("budget", "What budget constraints apply to this verification effort?"),
    ("timeline", "What is the verification timeline?"),
)


@dataclass
class TestPlanResult:
    cases: list[TestCase]
    pending_questions: list[tuple[str, str]] = field(default_factory=list)

    @property
    def needs_dialogue(self) -> bool:
        return bool(self.pending_questions)


def _render_target(target) -> str:
    if isinstance(target, ThreatEntry):
        return (f"threat {target.threat_id}: {target.name} ({target.threat_class})\n"
                f"{target.description}\nrelevance: {target.relevance} ({target.rationale})")
    return (f"policy {target.policy_id} on asset {target.asset_ref}: {target.statement}\n"
            f"significance: {target.significance}")


def _constrain_tools(tools: list[str], infrastructure: str) -> list[str]:
    """Tools the engineer did not report available get flagged."""
    infra_lower = infrastructure.lower()
    out = []
    for tool in tools:
        words = [w for w in re.findall(r"\w+", tool.lower()) if len(w) > 2]
        if words and any(w in infra_lower for w in words):
            out.append(tool)
        else:
            out.append(f"{tool} (requires acquisition)")
    return out


def generate_test_plan(
    targets: list,
    infra_dialogue: dict[str, str],
    runtime: AgentRuntime,
) -> TestPlanResult:
    """One-or-more test cases per confirmed threat or extracted policy."""
    if not targets:
        raise PreconditionError("test plan needs at least one target")
    missing = [(name, q) for name, q in INFRA_QUESTIONS if name not in infra_dialogue]
    if missing:
        return TestPlanResult([], pending_questions=missing)

    cases: list[TestCase] = []
    for i, target in enumerate(targets):
        response = runtime.complete(
            "test_plan",
            {
                "target": _render_target(target),
                "infrastructure": infra_dialogue["infrastructure"],
                "budget": infra_dialogue["budget"],
                "timeline": infra_dialogue["timeline"],
            },
        )
        fields = {}
        for line in response.text.splitlines():
            m = re.match(
                r"\s*(objective|methodology|expected_behavior|evaluation_criteria|tools)"
                r"\s*:\s*(.+)",
                line,
                re.IGNORECASE,
            )
            if m:
                fields.setdefault(m.group(1).lower(), m.group(2).strip())
        target_id = target.threat_id if isinstance(target, ThreatEntry) else target.policy_id
        tools = [t.strip() for t in fields.get("tools", "").split(",") if t.strip()]
        case = TestCase(
            test_id=f"tc-{i + 1:03d}",
            target=target_id,
            objective=fields.get("objective", ""),
            methodology=fields.get("methodology", ""),
            expected_behavior=fields.get("expected_behavior", ""),
            evaluation_criteria=fields.get("evaluation_criteria", ""),
            tool_recommendations=_constrain_tools(tools, infra_dialogue["infrastructure"]),
        )
        if not case.validate():
            logger.warning("test case for %s missing mandated fields; kept with gaps flagged",
                           target_id)
        cases.append(case)
    return TestPlanResult(cases)


# ---------------------------------------------------------------------------
# artifact rendering


def render_threat_model_json(entries: list[ThreatEntry], uncovered: list[str] | None = None) -> str:
    return json.dumps(
        {
            "threats": [e.to_dict() for e in entries],
            "uncovered_assets": uncovered or [],
        },
        indent=2,
    )


def render_test_plan_json(cases: list[TestCase]) -> str:
    return json.dumps({"test_cases": [c.to_dict() for c in cases]}, indent=2)


def render_threat_model_markdown(entries: list[ThreatEntry],
                                 uncovered: list[str] | None = None) -> str:
    lines = ["# Threat Model", ""]
    for relevance in ("confirmed", "excluded", "candidate"):
        group = [e for e in entries if e.relevance == relevance]
        if not group:
            continue
        lines.append(f"## {relevance.capitalize()}")
        for entry in group:
            lines.append(f"- **{entry.name}** ({entry.threat_class}, `{entry.threat_id}`): "
                         f"{entry.rationale or entry.description}")
        lines.append("")
    if uncovered:
        lines += ["## Assets without policy coverage",
                  *[f"- {name}" for name in uncovered], ""]
    return "\n".join(lines)


def render_test_plan_markdown(cases: list[TestCase]) -> str:
    lines = ["# Security Test Plan", ""]
    for case in cases:
        lines += [
            f"## {case.test_id} — target {case.target}",
            f"- **Objective:** {case.objective}",
            f"- **Methodology:** {case.methodology}",
            f"- **Expected behavior:** {case.expected_behavior}",
            f"- **Evaluation criteria:** {case.evaluation_criteria}",
            f"- **Tools:** {', '.join(case.tool_recommendations) or 'none'}",
            "",
        ]
    return "\n".join(lines)
