"""Security property and assertion generation agent.

Two CWE lists (design classification and threat-vector lookup) intersect
to scope generation; each generated property carries a scenario, a natural
language statement, and an SVA checked for syntax and signal consistency
by the self-reflection pass.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .. import hdl
from ..errors import PreconditionError
from ..runtime import AgentRuntime, load_table

logger = logging.getLogger(__name__)

CATEGORIES = (
    "dma_controller",
    "debug_interface",
    "crypto_block",
    "fsm_controller",
    "bus_fabric",
    "memory_interface",
    "peripheral",
)

# segment evidence for the rule-based classifier; the backend may confirm
# or extend, but categories without evidence are dropped
CATEGORY_SEGMENTS = {
    "dma_controller": {"dma"},
    "debug_interface": {"dbg", "jtag", "debug"},
    "crypto_block": {"key", "hash", "cipher", "crypt", "crypto", "aes"},
    "fsm_controller": {"state", "fsm"},
    "bus_fabric": {"axi", "ahb", "apb", "wishbone", "bus"},
    "memory_interface": {"mem", "ram", "rom", "addr"},
    "peripheral": {"uart", "spi", "i2c", "gpio", "timer", "pwm"},
}


@dataclass
class CweId:
    id: int
    title: str

    def __post_init__(self):
        catalog = load_table("cwe_catalog")
        if str(self.id) not in catalog:
            raise PreconditionError(f"CWE-{self.id} is not in the bundled catalog")

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title}


def cwe(id_: int) -> CweId:
    return CweId(id_, load_table("cwe_catalog")[str(id_)])


@dataclass
class DesignClassification:
    categories: list[str]
    evidence: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"categories": list(self.categories), "evidence": dict(self.evidence)}


@dataclass
class GeneratedProperty:
    scenario: str
    nl_property: str
    sva: str
    cwe: CweId
    status: str = "candidate"  # candidate | validated | rejected
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "nl_property": self.nl_property,
            "sva": self.sva,
            "cwe": self.cwe.to_dict(),
            "status": self.status,
            "reason": self.reason,
        }


def classify_design(design: str, runtime: AgentRuntime | None = None) -> DesignClassification:
    """Rule-based keyword/port scan produces evidence; a backend pass may
    confirm or extend, but never adds a category without evidence."""
    table = hdl.parse_ports(design)
    masked = hdl.mask_strings_and_comments(design)
    identifiers = set(re.findall(r"[A-Za-z_][A-Za-z0-9_$]*", masked))

    evidence: dict[str, list[str]] = {}
    for ident in sorted(identifiers):
        segments = set(hdl.identifier_segments(ident))
        for category, seeds in CATEGORY_SEGMENTS.items():
            if segments & seeds:
                evidence.setdefault(category, [])
                if ident not in evidence[category]:
                    evidence[category].append(ident)
    categories = [c for c in CATEGORIES if c in evidence]

    if runtime is not None:
        ports_text = ", ".join(f"{p.direction} {p.name}[{p.width}]" for p in table.ports)
        evidence_text = "; ".join(f"{c}: {', '.join(hits[:6])}" for c, hits in evidence.items())
        response = runtime.complete(
            "prop_classify", {"ports": ports_text, "evidence": evidence_text or "none"}
        )
        m = re.search(r"categories\s*:\s*(.+)", response.text, re.IGNORECASE)
        if m:
            backend_cats = [c.strip().lower() for c in m.group(1).split(",") if c.strip()]
            merged = [c for c in CATEGORIES if c in categories or
                      (c in backend_cats and c in evidence)]
            categories = merged
    return DesignClassification(categories=categories,
                                evidence={c: evidence[c] for c in categories})


def map_design_to_cwe(classification: DesignClassification) -> list[CweId]:
    """Union of the static category->CWE rows, deduplicated, ascending."""
    table = load_table("category_cwe")
    ids: set[int] = set()
    for category in classification.categories:
        ids.update(table.get(category, []))
    return [cwe(i) for i in sorted(ids)]


def _normalize_phrase(phrase: str) -> str:
    return re.sub(r"[^a-z0-9 -]+", "", phrase.lower()).strip()


def map_threats_to_cwe(threat_vectors: list[str]) -> list[CweId]:
    """Static lookup of normalized threat phrases; unknown phrases are
    reported via warning, never fatal."""
    table = load_table("threat_cwe")
    ids: set[int] = set()
    for vector in threat_vectors:
        normalized = _normalize_phrase(vector)
        if normalized in table:
            ids.update(table[normalized])
        else:
            logger.warning("unknown threat phrase %r; no CWE mapping", vector)
    return [cwe(i) for i in sorted(ids)]


def intersect_cwe(design_list: list[CweId], threat_list: list[CweId]) -> list[CweId]:
    """Set intersection in ascending order; an empty intersection falls back
    to the union with a prominent warning rather than dropping the task."""
    design_ids = {c.id for c in design_list}
    threat_ids = {c.id for c in threat_list}
    common = design_ids & threat_ids
    if common:
        return [cwe(i) for i in sorted(common)]
    union = design_ids | threat_ids
    logger.warning(
        "empty CWE intersection; falling back to the unfiltered union of %d ids", len(union)
    )
    return [cwe(i) for i in sorted(union)]


def _find_clock_reset(table: hdl.SignalTable) -> tuple[str, str]:
    clock = next((p.name for p in table.ports
                  if "clk" in p.name.lower() or "clock" in p.name.lower()), "clk")
    reset = next((p.name for p in table.ports
                  if "rst" in p.name.lower() or "reset" in p.name.lower()), "rst_n")
    return clock, reset


def _parse_property_reply(text: str) -> dict[str, str] | None:
    sections: dict[str, str] = {}
    current = None
    for line in text.splitlines():
        m = re.match(r"\s*(scenario|nl_property|sva)\s*:\s*(.*)", line, re.IGNORECASE)
        if m:
            current = m.group(1).lower()
            sections[current] = m.group(2)
            continue
        if current is not None:
            sections[current] += "\n" + line
    if not {"scenario", "nl_property", "sva"} <= set(sections):
        return None
    return {k: v.strip() for k, v in sections.items()}


def generate_properties(design: str, cwe_list: list[CweId],
                        runtime: AgentRuntime) -> list[GeneratedProperty]:
    """Per-CWE generation of (scenario, NL property, SVA) triples tailored
    to the design's clock/reset names; unparseable CWEs are skipped after
    one formatting retry."""
    if not cwe_list:
        raise PreconditionError("generate_properties needs a non-empty CWE list")
    table = hdl.parse_ports(design)
    clock, reset = _find_clock_reset(table)
    signals = ", ".join(sorted(table.names()))

    candidates: list[GeneratedProperty] = []
    for cwe_id in cwe_list:
        variables = {
            "cwe_id": f"CWE-{cwe_id.id}",
            "cwe_title": cwe_id.title,
            "signals": signals,
            "clock": clock,
            "reset": reset,
            "feedback": "",
        }
        response = runtime.complete("prop_generate", variables)
        parsed = _parse_property_reply(response.text)
        if parsed is None:
            variables["feedback"] = (
                "\nYour previous reply did not follow the labeled sections "
                "scenario:, nl_property:, sva:. Reply again in that exact format."
            )
            response = runtime.complete("prop_generate", variables)
            parsed = _parse_property_reply(response.text)
            if parsed is None:
                logger.warning("skipping CWE-%d: reply unparseable after retry", cwe_id.id)
                continue
        if re.search(r"^\s*sva\s*:\s*none\s*$", response.text, re.IGNORECASE | re.MULTILINE):
            logger.info("backend declined CWE-%d for this design", cwe_id.id)
            continue
        candidates.append(
            GeneratedProperty(
                scenario=parsed["scenario"],
                nl_property=parsed["nl_property"],
                sva=parsed["sva"],
                cwe=cwe_id,
            )
        )
    return candidates


def self_reflect(candidates: list[GeneratedProperty], design: str,
                 runtime: AgentRuntime) -> list[GeneratedProperty]:
    """Validate each candidate SVA for syntax and signal consistency.

    Failures get one regeneration with the errors as feedback; candidates
    that still fail are marked rejected (in place) and excluded from the
    returned validated list.
    """
    table = hdl.parse_ports(design)
    signals = ", ".join(sorted(table.names()))
    validated: list[GeneratedProperty] = []
    for candidate in candidates:
        check = hdl.check_sva(candidate.sva, table)
        if not check.ok:
            errors = "\n".join(d.message for d in check.diagnostics)
            response = runtime.complete(
                "prop_fix",
                {
                    "sva": candidate.sva,
                    "errors": errors,
                    "signals": signals,
                    "scenario": candidate.scenario,
                    "nl_property": candidate.nl_property,
                },
            )
            parsed = _parse_property_reply(response.text)
            if parsed is not None:
                candidate.sva = parsed["sva"]
                check = hdl.check_sva(candidate.sva, table)
        if check.ok:
            candidate.status = "validated"
            validated.append(candidate)
        else:
            candidate.status = "rejected"
            reasons = [d.message for d in check.diagnostics]
            kind = "signal-consistency" if any("undeclared" in r for r in reasons) else "syntax"
            candidate.reason = f"{kind}: {'; '.join(reasons)}"
            logger.warning("rejected property for CWE-%d: %s", candidate.cwe.id, candidate.reason)
    return validated


# ---------------------------------------------------------------------------
# artifacts


def render_sva_file(properties: list[GeneratedProperty]) -> str:
    """One assert block per property with a header comment carrying the
    CWE id and natural language property."""
    blocks = []
    for prop in properties:
        nl = prop.nl_property.replace("\n", " ")
        blocks.append(f"// CWE-{prop.cwe.id}: {prop.cwe.title}\n// property: {nl}\n{prop.sva}")
    return "\n\n".join(blocks) + "\n"


def render_property_json(properties: list[GeneratedProperty]) -> str:
    return json.dumps([p.to_dict() for p in properties], indent=2)
