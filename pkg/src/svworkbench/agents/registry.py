"""Canonical agent pipelines and their step handlers.

Step payloads are plain JSON-serializable structures so execution state
can checkpoint and resume losslessly. Handlers that need engineer input
return a needs_user_input outcome; answers come back merged into the plan
inputs under the requirement names they asked for.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

from ..core import Session
from ..knowledge import build_store, ingest, load_store, save_store
from ..orchestrator import NEEDS_INPUT, OK, StepOutcome
from ..runtime import AgentRuntime
from ..supervisor import StepSpec, TaskPlan
from . import assets, bugvalidate, chat, properties, threatmodel, vulndetect

logger = logging.getLogger(__name__)

PIPELINES: dict[str, list[StepSpec]] = {
    "security_qa": [
        StepSpec("answer", ["query"], "answer"),
    ],
    "asset_identification": [
        StepSpec("extract_hierarchy", ["spec_document"], "hierarchy"),
        StepSpec("summarize_modules", ["hierarchy", "spec_document"], "summaries"),
        StepSpec("generate_assets", ["summaries"], "asset_candidates"),
        StepSpec("critique_assets", ["asset_candidates", "summaries"], "assets"),
    ],
    "threat_modeling": [
        StepSpec("select_flow", ["query", "asset_json"], "flow"),
        StepSpec("identify_threats", ["flow", "query"], "threats"),
        StepSpec("generate_policies", ["flow", "spec_document", "asset_json"], "policies"),
        StepSpec("generate_test_plan", ["threats", "policies"], "test_plan"),
    ],
    "vulnerability_detection": [
        StepSpec("select_patterns", ["rtl_design"], "patterns"),
        StepSpec("analyze", ["rtl_design", "patterns"], "findings"),
        StepSpec("report", ["findings"], "vuln_report"),
    ],
    "bug_validation": [
        StepSpec("scenario_generation", ["rtl_design", "bug_report"], "scenario"),
        StepSpec("testbench_generation", ["rtl_design", "scenario"], "testbench"),
        StepSpec("simulate", ["rtl_design", "testbench"], "trace"),
        StepSpec("validate", ["trace", "scenario"], "verdict"),
    ],
    "property_generation": [
        StepSpec("classify_design", ["rtl_design"], "classification"),
        StepSpec("map_cwe", ["classification", "threat_vectors"], "cwe_list"),
        StepSpec("generate_properties", ["rtl_design", "cwe_list"], "property_candidates"),
        StepSpec("self_reflect", ["property_candidates", "rtl_design"], "properties"),
    ],
}


def _resolve_text(runtime: AgentRuntime, value) -> tuple[str, str]:
    """Resolve an input value to (text, name-stem). Accepts an ArtifactRef
    dict, a bare artifact id, or inline text."""
    if isinstance(value, dict) and "artifact_id" in value:
        data, ref = runtime.session_store.get_artifact(value["artifact_id"])
        return data.decode("utf-8"), Path(ref.filename).stem
    if isinstance(value, str) and re.fullmatch(r"[0-9a-f]{32}", value):
        try:
            data, ref = runtime.session_store.get_artifact(value)
            return data.decode("utf-8"), Path(ref.filename).stem
        except KeyError:
            pass
    return str(value), "input"


def _load_assets_json(text: str) -> list[dict]:
    """Flatten the asset artifact into per-asset dicts carrying their IP."""
    data = json.loads(text)
    flat = []
    for entry in data if isinstance(data, list) else [data]:
        for asset in entry.get("Assets", []):
            flat.append({**asset, "IP": entry.get("IP", "")})
    return flat


# ---------------------------------------------------------------------------
# security_qa


def h_chat_answer(runtime: AgentRuntime, session: Session, plan: TaskPlan, inputs: dict,
                  feedback: str = "") -> StepOutcome:
    query = inputs["query"]
    intent = chat.resolve_chat_intent(query, session, runtime)
    if intent.kind == "invalid":
        answer = chat.GroundedAnswer(answer=chat.INVALID_REPLY)
    elif intent.kind == "feedback":
        answer = chat.answer_feedback(query, session, runtime)
    else:
        answer = chat.answer(query, session, runtime)
    payload = answer.to_dict()
    payload["intent"] = intent.kind
    return StepOutcome("answer", OK, payload)


# ---------------------------------------------------------------------------
# asset_identification


def _spec_store(runtime: AgentRuntime, plan: TaskPlan, spec_value) -> tuple:
    """Build (or reload) the per-plan spec store."""
    text, stem = _resolve_text(runtime, spec_value)
    store_base = runtime.scratch_dir(plan.plan_id, "stores")
    store_dir = store_base / f"spec-{stem}"
    if store_dir.is_dir():
        return load_store(store_dir), stem
    chunks = ingest(text, stem, chunk_size=120, overlap=16)
    store = build_store(f"spec-{stem}", f"specification of {stem}", chunks)
    save_store(store, store_base)
    return store, stem


def h_extract_hierarchy(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    store, stem = _spec_store(runtime, plan, inputs["spec_document"])
    entries = assets.extract_hierarchy(store, runtime)
    return StepOutcome("extract_hierarchy", OK, {
        "design_name": stem,
        "modules": [e.to_dict() for e in entries],
    })


def h_summarize_modules(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    store, stem = _spec_store(runtime, plan, inputs["spec_document"])
    hierarchy = inputs["hierarchy"]
    summaries = []
    for entry_dict in hierarchy["modules"]:
        entry = assets.ModuleEntry.from_dict(entry_dict)
        if entry.pruned:
            continue
        summary = assets.summarize_module(entry, store, runtime)
        summaries.append(summary.to_dict())
    return StepOutcome("summarize_modules", OK, {
        "design_name": hierarchy["design_name"],
        "summaries": summaries,
    })


def h_generate_assets(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    exemplars = assets.exemplar_set()
    candidates = []
    for summary_dict in inputs["summaries"]["summaries"]:
        summary = assets.TechnicalSummary.from_dict(summary_dict)
        for record in assets.generate_assets(summary, exemplars, runtime):
            candidates.append(record.to_dict())
    return StepOutcome("generate_assets", OK, {
        "design_name": inputs["summaries"]["design_name"],
        "candidates": candidates,
    })


def h_critique_assets(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    summaries = {s["module"]: assets.TechnicalSummary.from_dict(s)
                 for s in inputs["summaries"]["summaries"]}
    design_name = inputs["asset_candidates"]["design_name"]
    final: list[assets.AssetRecord] = []
    by_ip: dict[str, list[assets.AssetRecord]] = {}
    for record_dict in inputs["asset_candidates"]["candidates"]:
        record = assets.AssetRecord.from_dict(record_dict)
        by_ip.setdefault(record.ip, []).append(record)
    for ip, group in by_ip.items():
        summary = summaries.get(ip)
        if summary is None:
            final.extend(group)
            continue
        final.extend(assets.critique_assets(group, summary, runtime))
    artifact_text = assets.render_asset_json(final)
    ref = runtime.session_store.put_artifact(
        artifact_text.encode("utf-8"), "asset_json", f"assets_{design_name}.json"
    )
    return StepOutcome("critique_assets", OK, {
        "design_name": design_name,
        "records": [r.to_dict() for r in final],
        "artifact": ref.to_dict(),
    })


# ---------------------------------------------------------------------------
# threat_modeling


def h_select_flow(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    asset_text, _ = _resolve_text(runtime, inputs["asset_json"])
    asset_list = _load_assets_json(asset_text)
    flow = threatmodel.select_flow(inputs["query"], asset_list, runtime)
    return StepOutcome("select_flow", OK, {"flow": flow})


def h_identify_threats(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    flow = inputs["flow"]["flow"]
    if flow == "flow2":
        return StepOutcome("identify_threats", OK, {"threats": [], "skipped": True})
    kb = threatmodel.build_threat_kb()
    dialogue: list[dict] = []
    round_index = 1
    while True:
        result = threatmodel.identify_threats(inputs["query"], kb, dialogue, runtime)
        if not result.needs_dialogue:
            return StepOutcome("identify_threats", OK, {
                "threats": [e.to_dict() for e in result.entries],
                "rounds": result.rounds_used,
            })
        names = [f"threat_r{round_index}_q{j + 1}" for j in range(len(result.pending_questions))]
        if all(name in plan.inputs for name in names):
            dialogue.append({
                "questions": list(result.pending_questions),
                "answers": [plan.inputs[name] for name in names],
            })
            round_index += 1
            continue
        return StepOutcome("identify_threats", NEEDS_INPUT, requirements=[
            {"name": name, "kind": "text", "description": question}
            for name, question in zip(names, result.pending_questions)
        ])


def h_generate_policies(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    flow = inputs["flow"]["flow"]
    if flow == "flow1":
        return StepOutcome("generate_policies", OK,
                           {"policies": [], "uncovered_assets": [], "skipped": True})
    if "isa_document" not in plan.inputs:
        return StepOutcome("generate_policies", NEEDS_INPUT, requirements=[{
            "name": "isa_document",
            "kind": "artifact:spec_document",
            "description": "the ISA document to search for security policies "
                           "(upload it or paste the relevant text)",
        }])
    spec_store, _ = _spec_store(runtime, plan, inputs["spec_document"])
    isa_text, isa_stem = _resolve_text(runtime, plan.inputs["isa_document"])
    isa_chunks = ingest(isa_text, f"isa-{isa_stem}", chunk_size=120, overlap=16)
    isa_store = build_store(f"isa-{isa_stem}", "instruction set architecture", isa_chunks)
    asset_text, _ = _resolve_text(runtime, inputs["asset_json"])
    asset_list = _load_assets_json(asset_text)
    bundle = threatmodel.generate_policies(spec_store, isa_store, asset_list, runtime)
    return StepOutcome("generate_policies", OK, {
        "policies": [p.to_dict() for p in bundle.policies],
        "uncovered_assets": bundle.uncovered_assets,
    })


def h_generate_test_plan(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    threats = [threatmodel.ThreatEntry.from_dict(d) for d in inputs["threats"]["threats"]]
    policies = [threatmodel.SecurityPolicy.from_dict(d)
                for d in inputs["policies"]["policies"]]
    targets = [t for t in threats if t.relevance == "confirmed"] + policies
    if not targets:
        return StepOutcome("generate_test_plan", OK,
                           {"test_cases": [], "note": "no confirmed threats or policies"})
    infra = {name: plan.inputs[name] for name, _ in threatmodel.INFRA_QUESTIONS
             if name in plan.inputs}
    result = threatmodel.generate_test_plan(targets, infra, runtime)
    if result.needs_dialogue:
        return StepOutcome("generate_test_plan", NEEDS_INPUT, requirements=[
            {"name": name, "kind": "text", "description": question}
            for name, question in result.pending_questions
        ])
    _, design_name = _resolve_text(runtime, plan.inputs.get("spec_document", "design"))
    store = runtime.session_store
    uncovered = inputs["policies"].get("uncovered_assets", [])
    refs = [
        store.put_artifact(
            threatmodel.render_threat_model_json(threats, uncovered).encode("utf-8"),
            "test_plan", f"threat_model_{design_name}.json"),
        store.put_artifact(
            threatmodel.render_threat_model_markdown(threats, uncovered).encode("utf-8"),
            "test_plan", f"threat_model_{design_name}.md"),
        store.put_artifact(
            threatmodel.render_test_plan_json(result.cases).encode("utf-8"),
            "test_plan", f"test_plan_{design_name}.json"),
        store.put_artifact(
            threatmodel.render_test_plan_markdown(result.cases).encode("utf-8"),
            "test_plan", f"test_plan_{design_name}.md"),
    ]
    return StepOutcome("generate_test_plan", OK, {
        "test_cases": [c.to_dict() for c in result.cases],
        "artifacts": [r.to_dict() for r in refs],
    })


# ---------------------------------------------------------------------------
# vulnerability_detection


def h_select_patterns(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, stem = _resolve_text(runtime, inputs["rtl_design"])
    selected = vulndetect.select_patterns(design)
    return StepOutcome("select_patterns", OK, {
        "design_name": stem,
        "patterns": [p.to_dict() for p in selected],
    })


def h_analyze(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, _ = _resolve_text(runtime, inputs["rtl_design"])
    findings = []
    for pattern_dict in inputs["patterns"]["patterns"]:
        pattern = vulndetect.VulnPattern.from_dict(pattern_dict)
        finding = vulndetect.analyze(design, pattern, runtime)
        findings.append(finding.to_dict())
    return StepOutcome("analyze", OK, {
        "design_name": inputs["patterns"]["design_name"],
        "findings": findings,
    })


def h_report(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    findings = [vulndetect.VulnFinding.from_dict(d) for d in inputs["findings"]["findings"]]
    design_name = inputs["findings"]["design_name"]
    vuln_report = vulndetect.report(findings, design_name, runtime.backend_id)
    ref = runtime.session_store.put_artifact(
        vuln_report.to_json().encode("utf-8"), "bug_report", f"vuln_report_{design_name}.json"
    )
    return StepOutcome("report", OK, {
        "design_name": design_name,
        "artifact": ref.to_dict(),
        "findings": [f.to_dict() for f in vuln_report.findings],
    })


# ---------------------------------------------------------------------------
# bug_validation


def _bug_description(text: str) -> tuple[str, str]:
    """Bug description and name from a report artifact (JSON or plain text)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return text.strip(), "bug"
    if isinstance(data, dict):
        if "bug_description" in data:
            return data["bug_description"], data.get("bug", data.get("pattern_id", "bug"))
        findings = data.get("findings", [])
        for finding in findings:
            if finding.get("verdict") == "vulnerable":
                return finding.get("bug_description", finding.get("explanation", "")), \
                    finding.get("pattern_id", "bug")
    return text.strip(), "bug"


def h_scenario_generation(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, stem = _resolve_text(runtime, inputs["rtl_design"])
    report_text, _ = _resolve_text(runtime, inputs["bug_report"])
    description, bug_name = _bug_description(report_text)
    scenario = bugvalidate.generate_scenario(design, description, runtime)
    return StepOutcome("scenario_generation", OK, {
        "design_name": stem,
        "bug_name": bug_name,
        "scenario": scenario.to_dict(),
    })


def h_testbench_generation(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, _ = _resolve_text(runtime, inputs["rtl_design"])
    scenario = bugvalidate.TestScenario.from_dict(inputs["scenario"]["scenario"])
    testbench = bugvalidate.generate_testbench(design, scenario, runtime)
    return StepOutcome("testbench_generation", OK, {"testbench": testbench})


def h_simulate(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, stem = _resolve_text(runtime, inputs["rtl_design"])
    adapter_id = plan.inputs.get("adapter", "mock")
    trace = bugvalidate.simulate(
        design, inputs["testbench"]["testbench"], adapter_id, runtime,
        plan_id=plan.plan_id, design_name=stem,
    )
    return StepOutcome("simulate", OK, {"trace": trace.to_dict()})


def h_validate(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    trace = bugvalidate.SimulationTrace.from_dict(inputs["trace"]["trace"])
    scenario_payload = inputs["scenario"]
    scenario = bugvalidate.TestScenario.from_dict(scenario_payload["scenario"])
    verdict = bugvalidate.validate(trace, scenario.roi)
    ref = runtime.session_store.put_artifact(
        bugvalidate.render_verdict_json(
            verdict, scenario_payload["bug_name"], scenario_payload["design_name"]
        ).encode("utf-8"),
        "trace_log",
        f"verdict_{scenario_payload['bug_name']}.json",
    )
    return StepOutcome("validate", OK, {
        "verdict": verdict.to_dict(),
        "artifact": ref.to_dict(),
    })


# ---------------------------------------------------------------------------
# property_generation


def h_classify_design(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, stem = _resolve_text(runtime, inputs["rtl_design"])
    classification = properties.classify_design(design, runtime)
    return StepOutcome("classify_design", OK, {
        "design_name": stem,
        "classification": classification.to_dict(),
    })


def h_map_cwe(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    classification = properties.DesignClassification(
        categories=inputs["classification"]["classification"]["categories"],
        evidence=inputs["classification"]["classification"]["evidence"],
    )
    vectors = [v.strip() for v in re.split(r"[,;\n]", str(inputs["threat_vectors"]))
               if v.strip()]
    design_cwes = properties.map_design_to_cwe(classification)
    threat_cwes = properties.map_threats_to_cwe(vectors)
    merged = properties.intersect_cwe(design_cwes, threat_cwes)
    fallback = not ({c.id for c in design_cwes} & {c.id for c in threat_cwes})
    return StepOutcome("map_cwe", OK, {
        "design_name": inputs["classification"]["design_name"],
        "cwes": [c.to_dict() for c in merged],
        "design_cwes": [c.to_dict() for c in design_cwes],
        "threat_cwes": [c.to_dict() for c in threat_cwes],
        "intersection_fallback": fallback,
    })


def h_generate_properties(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, _ = _resolve_text(runtime, inputs["rtl_design"])
    cwe_list = [properties.cwe(d["id"]) for d in inputs["cwe_list"]["cwes"]]
    candidates = properties.generate_properties(design, cwe_list, runtime)
    return StepOutcome("generate_properties", OK, {
        "design_name": inputs["cwe_list"]["design_name"],
        "candidates": [c.to_dict() for c in candidates],
    })


def h_self_reflect(runtime, session, plan, inputs, feedback="") -> StepOutcome:
    design, _ = _resolve_text(runtime, inputs["rtl_design"])
    design_name = inputs["property_candidates"]["design_name"]
    candidates = []
    for d in inputs["property_candidates"]["candidates"]:
        candidates.append(properties.GeneratedProperty(
            scenario=d["scenario"],
            nl_property=d["nl_property"],
            sva=d["sva"],
            cwe=properties.cwe(d["cwe"]["id"]),
            status=d.get("status", "candidate"),
        ))
    validated = properties.self_reflect(candidates, design, runtime)
    store = runtime.session_store
    sva_ref = store.put_artifact(
        properties.render_sva_file(validated).encode("utf-8"),
        "sva_file", f"properties_{design_name}.sva",
    )
    json_ref = store.put_artifact(
        properties.render_property_json(candidates).encode("utf-8"),
        "sva_file", f"properties_{design_name}.json",
    )
    return StepOutcome("self_reflect", OK, {
        "design_name": design_name,
        "validated": [p.to_dict() for p in validated],
        "all_candidates": [p.to_dict() for p in candidates],
        "artifact_sva": sva_ref.to_dict(),
        "artifact_json": json_ref.to_dict(),
    })


HANDLERS = {
    ("security_qa", "answer"): h_chat_answer,
    ("asset_identification", "extract_hierarchy"): h_extract_hierarchy,
    ("asset_identification", "summarize_modules"): h_summarize_modules,
    ("asset_identification", "generate_assets"): h_generate_assets,
    ("asset_identification", "critique_assets"): h_critique_assets,
    ("threat_modeling", "select_flow"): h_select_flow,
    ("threat_modeling", "identify_threats"): h_identify_threats,
    ("threat_modeling", "generate_policies"): h_generate_policies,
    ("threat_modeling", "generate_test_plan"): h_generate_test_plan,
    ("vulnerability_detection", "select_patterns"): h_select_patterns,
    ("vulnerability_detection", "analyze"): h_analyze,
    ("vulnerability_detection", "report"): h_report,
    ("bug_validation", "scenario_generation"): h_scenario_generation,
    ("bug_validation", "testbench_generation"): h_testbench_generation,
    ("bug_validation", "simulate"): h_simulate,
    ("bug_validation", "validate"): h_validate,
    ("property_generation", "classify_design"): h_classify_design,
    ("property_generation", "map_cwe"): h_map_cwe,
    ("property_generation", "generate_properties"): h_generate_properties,
    ("property_generation", "self_reflect"): h_self_reflect,
}
