"""Security vulnerability detection agent.

Selects applicable weakness patterns from a bundled catalog via construct
scanning, anchors each analysis prompt to the enclosing module window with
line numbers, and gates low-confidence verdicts to `uncertain`. Detection
quality belongs to whichever backend is plugged in; the report records the
backend id for attribution.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .. import hdl
from ..errors import AnchoringError, CatalogMissing
from ..gateway import estimate_confidence
from ..runtime import AgentRuntime, load_table

logger = logging.getLogger(__name__)

VERDICTS = ("vulnerable", "not_vulnerable", "uncertain")
ANALYZE_TEMPLATE = "vuln_analyze"


@dataclass
class VulnPattern:
    pattern_id: str
    title: str
    question: str
    applicable_constructs: list[str]
    query_template: str = ANALYZE_TEMPLATE

    @classmethod
    def from_dict(cls, d: dict) -> "VulnPattern":
        return cls(d["pattern_id"], d["title"], d["question"],
                   list(d["applicable_constructs"]), d.get("query_template", ANALYZE_TEMPLATE))

    def to_dict(self) -> dict:
        return {
            "pattern_id": self.pattern_id,
            "title": self.title,
            "question": self.question,
            "applicable_constructs": list(self.applicable_constructs),
            "query_template": self.query_template,
        }


@dataclass
class VulnFinding:
    pattern_id: str
    verdict: str
    explanation: str
    evidence_lines: list[tuple[int, str]] = field(default_factory=list)
    confidence: float = 0.5

    def to_dict(self) -> dict:
        return {
            "pattern_id": self.pattern_id,
            "verdict": self.verdict,
            "explanation": self.explanation,
            "evidence_lines": [[n, t] for n, t in self.evidence_lines],
            "confidence": self.confidence,
            "bug_description": self.explanation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VulnFinding":
        return cls(d["pattern_id"], d["verdict"], d["explanation"],
                   [(n, t) for n, t in d.get("evidence_lines", [])], d.get("confidence", 0.5))


def load_catalog() -> list[VulnPattern]:
    return [VulnPattern.from_dict(d) for d in load_table("vuln_patterns")]


def select_patterns(design_source: str, catalog: list[VulnPattern] | None = None) -> list[VulnPattern]:
    """Patterns whose constructs appear in the design, plus all `any` patterns."""
    if catalog is None:
        catalog = load_catalog()
    if not catalog:
        raise CatalogMissing("vulnerability pattern catalog is empty")
    constructs = hdl.scan_constructs(design_source) if design_source.strip() else set()
    selected = []
    for pattern in catalog:
        applicable = set(pattern.applicable_constructs)
        if "any" in applicable or applicable & constructs:
            selected.append(pattern)
    return selected


def _anchor_window(design: str, pattern: VulnPattern, table: hdl.SignalTable,
                   context_limit: int) -> str:
    """Context anchoring: the enclosing module plus matched construct lines,
    numbered. Falls back to the whole module; errors if even that exceeds
    the window."""
    lines = design.splitlines()
    masked = hdl.mask_strings_and_comments(design)
    masked_lines = masked.splitlines()

    module_start, module_end = 0, len(lines) - 1
    for i, line in enumerate(masked_lines):
        if re.search(r"\bmodule\b", line):
            module_start = i
            break
    for i in range(len(masked_lines) - 1, -1, -1):
        if re.search(r"\bendmodule\b", masked_lines[i]):
            module_end = i
            break

    window_lines = [(i + 1, lines[i]) for i in range(module_start, module_end + 1)]
    numbered = "\n".join(f"{n:4d}: {text}" for n, text in window_lines)
    if len(numbered.split()) > context_limit:
        raise AnchoringError(table.module_name, len(numbered.split()), context_limit)
    return numbered


def analyze(design: str, pattern: VulnPattern, runtime: AgentRuntime) -> VulnFinding:
    """Run one pattern against the design; verdicts below the session
    confidence threshold are forced to uncertain."""
    if not design.strip():
        raise CatalogMissing("design source is empty")
    table = hdl.parse_ports(design)
    window = _anchor_window(design, pattern, table, runtime.config.context_window_limit)
    variables = {
        "pattern_title": pattern.title,
        "pattern_question": pattern.question,
        "design_window": window,
    }
    response = runtime.complete(pattern.query_template, variables)
    verdict = _parse_verdict(response.text)
    if verdict is None:
        retry_vars = dict(variables, pattern_question=(
            pattern.question + " Begin your reply with exactly 'verdict: ...'."
        ))
        response = runtime.complete(pattern.query_template, retry_vars)
        verdict = _parse_verdict(response.text) or "uncertain"

    confidence = response.confidence if response.confidence is not None else estimate_confidence(response.text)
    if verdict in ("vulnerable", "not_vulnerable") and confidence < runtime.config.confidence_threshold:
        logger.info("forcing %s verdict to uncertain (confidence %.2f < %.2f)",
                    pattern.pattern_id, confidence, runtime.config.confidence_threshold)
        verdict = "uncertain"

    design_lines = design.splitlines()
    evidence: list[tuple[int, str]] = []
    explanation_lines = []
    for line in response.text.splitlines():
        m = re.match(r"\s*evidence\s*:\s*(\d+)", line, re.IGNORECASE)
        if m:
            n = int(m.group(1))
            if 1 <= n <= len(design_lines):
                evidence.append((n, design_lines[n - 1]))
            continue
        if re.match(r"\s*(verdict|confidence)\s*:", line, re.IGNORECASE):
            continue
        explanation_lines.append(line)
    return VulnFinding(
        pattern_id=pattern.pattern_id,
        verdict=verdict,
        explanation="\n".join(explanation_lines).strip(),
        evidence_lines=evidence,
        confidence=confidence,
    )


def _parse_verdict(text: str) -> str | None:
    first = text.strip().splitlines()[0] if text.strip() else ""
    m = re.match(r"\s*verdict\s*:\s*(\w+)", first, re.IGNORECASE)
    if m and m.group(1).lower() in VERDICTS:
        return m.group(1).lower()
    return None


_VERDICT_RANK = {"vulnerable": 0, "not_vulnerable": 1, "uncertain": 2}


@dataclass
class VulnReport:
    design_name: str
    backend_id: str
    findings: list[VulnFinding]
    coverage: list[dict] = field(default_factory=list)
    note: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "design": self.design_name,
                "backend_id": self.backend_id,
                "note": self.note,
                "findings": [f.to_dict() for f in self.findings],
                "coverage": self.coverage,
            },
            indent=2,
        )


def report(findings: list[VulnFinding], design_name: str = "design",
           backend_id: str = "", catalog: list[VulnPattern] | None = None,
           selected: list[VulnPattern] | None = None) -> VulnReport:
    """Aggregate findings: vulnerable first, then confidence descending,
    deduplicated by (pattern, first evidence line)."""
    seen = set()
    unique = []
    for finding in findings:
        first_evidence = finding.evidence_lines[0] if finding.evidence_lines else None
        key = (finding.pattern_id, first_evidence)
        if key in seen:
            continue
        seen.add(key)
        unique.append(finding)
    unique.sort(key=lambda f: (_VERDICT_RANK.get(f.verdict, 3), -f.confidence, f.pattern_id))

    catalog = catalog if catalog is not None else load_catalog()
    selected_ids = {p.pattern_id for p in selected} if selected is not None else None
    analyzed_ids = {f.pattern_id for f in unique}
    coverage = []
    for pattern in catalog:
        status = "analyzed" if pattern.pattern_id in analyzed_ids else (
            "selected" if selected_ids and pattern.pattern_id in selected_ids else "skipped"
        )
        coverage.append({"pattern_id": pattern.pattern_id, "status": status})
    note = "" if unique else "no applicable patterns produced findings"
    return VulnReport(design_name, backend_id, unique, coverage, note)
