"""Security asset identification agent.

Works only from the SoC specification: hierarchy extraction with pruning,
per-module RAG summarization, in-context asset generation against bundled
CIA exemplars, then a self-critique pass that drops false positives.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from ..errors import EmptyHierarchy, GenerationError, PreconditionError, SummarizationError
from ..knowledge import VectorStore, embed, search
from ..runtime import AgentRuntime, load_table

logger = logging.getLogger(__name__)

MODULE_KINDS = ("functional", "package", "glue", "image")
PRUNED_KINDS = ("package", "glue", "image")
CIA_OBJECTIVES = ("Confidentiality", "Integrity", "Availability")

# suffix/infix name patterns that force a pruned kind; the backend may
# reclassify functional->glue but never the reverse
NAME_PATTERN_KINDS = (
    (("package", "pkg"), "package"),
    (("image", "img"), "image"),
    (("top", "wrapper"), "glue"),
)

SUMMARY_QUERY_SUFFIXES = ("registers", "control flags", "configuration", "interactions interface")


@dataclass
class ModuleEntry:
    name: str
    kind: str
    spec_sections: list[str] = field(default_factory=list)

    @property
    def pruned(self) -> bool:
        return self.kind in PRUNED_KINDS

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "spec_sections": list(self.spec_sections)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModuleEntry":
        return cls(d["name"], d["kind"], list(d.get("spec_sections", [])))


@dataclass
class TechnicalSummary:
    module: str
    summary: str
    cited_chunks: list[str]

    def to_dict(self) -> dict:
        return {"module": self.module, "summary": self.summary,
                "cited_chunks": list(self.cited_chunks)}

    @classmethod
    def from_dict(cls, d: dict) -> "TechnicalSummary":
        return cls(d["module"], d["summary"], list(d["cited_chunks"]))


@dataclass
class AssetRecord:
    ip: str
    asset_name: str
    functionality: str
    security_objective: str
    justification: str

    def validate(self) -> bool:
        return (
            self.security_objective in CIA_OBJECTIVES
            and all([self.ip, self.asset_name, self.functionality, self.justification])
        )

    def to_dict(self) -> dict:
        return {
            "ip": self.ip,
            "asset_name": self.asset_name,
            "functionality": self.functionality,
            "security_objective": self.security_objective,
            "justification": self.justification,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssetRecord":
        return cls(d["ip"], d["asset_name"], d["functionality"], d["security_objective"],
                   d["justification"])


def kind_from_name(name: str) -> str | None:
    """Name-pattern pruning rule; None when no pattern matches."""
    lowered = name.lower()
    for needles, kind in NAME_PATTERN_KINDS:
        for needle in needles:
            if re.search(rf"(^|_){needle}(_|$)", lowered) or lowered.endswith(needle):
                return kind
    return None


def extract_hierarchy(spec_store: VectorStore, runtime: AgentRuntime) -> list[ModuleEntry]:
    """Locate module names via backend extraction over heading-like chunks.

    Pruned entries stay in the output, flagged by kind, so downstream code
    can prove they never reached summarization.
    """
    heading_hits = search(
        spec_store,
        embed("module overview table of contents design hierarchy"),
        max(8, runtime.config.retrieval_k),
    )
    sections = "\n\n".join(spec_store.chunks[cid].text for cid, _ in heading_hits)
    response = runtime.complete("asset_hierarchy", {"sections": sections})

    entries: list[ModuleEntry] = []
    seen: set[str] = set()
    for line in response.text.splitlines():
        m = re.match(r"\s*module\s*:\s*([\w.$-]+)\s*(?:\|\s*kind\s*:\s*(\w+))?", line,
                     re.IGNORECASE)
        if not m:
            continue
        name = m.group(1)
        if name.lower() in seen:
            continue
        seen.add(name.lower())
        backend_kind = (m.group(2) or "functional").lower()
        if backend_kind not in MODULE_KINDS:
            backend_kind = "functional"
        rule_kind = kind_from_name(name)
        kind = rule_kind or backend_kind
        section_hits = search(spec_store, embed(name), 4)
        sections_ids = [cid for cid, score in section_hits if score > 0.0]
        entries.append(ModuleEntry(name=name, kind=kind, spec_sections=sections_ids))
    if not entries:
        raise EmptyHierarchy("backend found no design modules in the specification")
    return entries


def summarize_module(entry: ModuleEntry, spec_store: VectorStore,
                     runtime: AgentRuntime) -> TechnicalSummary:
    """RAG summary of one functional module; cites the retrieved chunks."""
    if entry.kind != "functional":
        raise PreconditionError(f"module {entry.name!r} is pruned (kind={entry.kind})")
    cited: list[str] = []
    texts: list[str] = []
    name_re = re.compile(rf"(?<![\w]){re.escape(entry.name)}(?![\w])", re.IGNORECASE)
    for suffix in SUMMARY_QUERY_SUFFIXES:
        hits = search(spec_store, embed(f"{entry.name} {suffix}"), 3)
        for cid, score in hits:
            if score <= 0.0 or cid in cited:
                continue
            # a section only counts when it actually talks about this module
            if not name_re.search(spec_store.chunks[cid].text):
                continue
            cited.append(cid)
            texts.append(spec_store.chunks[cid].text)
    if not cited:
        raise SummarizationError(entry.name)
    response = runtime.complete(
        "asset_summary", {"module": entry.name, "sections": "\n\n".join(texts)}
    )
    return TechnicalSummary(module=entry.name, summary=response.text, cited_chunks=cited)


def _render_exemplars(exemplar_set: list[dict]) -> str:
    blocks = []
    for ex in exemplar_set:
        blocks.append(
            f"asset: {ex['asset_name']}\n"
            f"functionality: {ex['functionality']}\n"
            f"objective: {ex['objective']}\n"
            f"justification: {ex['justification']}\n"
            f"(module: {ex['ip']})"
        )
    return "\n\n".join(blocks)


def _parse_asset_records(text: str, ip: str) -> list[AssetRecord] | None:
    """None means wholly unparseable; [] means the backend said none."""
    if re.search(r"^\s*assets?\s*:\s*none\s*$", text, re.IGNORECASE | re.MULTILINE):
        return []
    chunks = re.split(r"(?=^\s*asset\s*:)", text, flags=re.IGNORECASE | re.MULTILINE)
    records = []
    saw_marker = False
    for chunk in chunks:
        fields = {}
        for line in chunk.splitlines():
            m = re.match(r"\s*(asset|functionality|objective|justification)\s*:\s*(.+)", line,
                         re.IGNORECASE)
            if m:
                fields.setdefault(m.group(1).lower(), m.group(2).strip())
        if "asset" not in fields:
            continue
        saw_marker = True
        objective = fields.get("objective", "").strip().capitalize()
        record = AssetRecord(
            ip=ip,
            asset_name=fields["asset"],
            functionality=fields.get("functionality", ""),
            security_objective=objective,
            justification=fields.get("justification", ""),
        )
        if record.validate():
            records.append(record)
        else:
            logger.warning("dropping unparseable asset record %r for %s", fields.get("asset"), ip)
    if not saw_marker:
        return None
    return records


def generate_assets(summary: TechnicalSummary, exemplar_set: list[dict],
                    runtime: AgentRuntime) -> list[AssetRecord]:
    """In-context asset generation; zero assets is a legal outcome."""
    if not exemplar_set:
        raise PreconditionError("exemplar set must be non-empty")
    variables = {
        "module": summary.module,
        "summary": summary.summary,
        "exemplars": _render_exemplars(exemplar_set),
        "feedback": "",
    }
    response = runtime.complete("asset_generate", variables)
    records = _parse_asset_records(response.text, summary.module)
    if records is None:
        variables["feedback"] = (
            "\nYour previous reply did not follow the record format. Use the labeled "
            "lines exactly: asset:, functionality:, objective:, justification:\n"
        )
        response = runtime.complete("asset_generate", variables)
        records = _parse_asset_records(response.text, summary.module)
        if records is None:
            raise GenerationError(
                f"asset reply for {summary.module!r} unparseable after formatting retry"
            )
    return records


def critique_assets(candidates: list[AssetRecord], summary: TechnicalSummary,
                    runtime: AgentRuntime) -> list[AssetRecord]:
    """Second pass marks keep/drop; output is always a subset of the input."""
    if not candidates:
        return []
    rendered = "\n\n".join(
        f"asset: {c.asset_name}\nfunctionality: {c.functionality}\n"
        f"objective: {c.security_objective}\njustification: {c.justification}"
        for c in candidates
    )
    try:
        response = runtime.complete(
            "asset_critique",
            {"module": summary.module, "summary": summary.summary, "candidates": rendered},
        )
    except Exception as exc:
        logger.warning("critique failed (%s); keeping all candidates", exc)
        return list(candidates)
    dropped: set[str] = set()
    for line in response.text.splitlines():
        m = re.match(r"\s*drop\s*:\s*([^|]+?)\s*(?:\|.*)?$", line, re.IGNORECASE)
        if m:
            dropped.add(m.group(1).strip().lower())
    return [c for c in candidates if c.asset_name.lower() not in dropped]


def render_asset_json(records: list[AssetRecord]) -> str:
    """Output artifact: one object per IP with an "Assets" array.

    Key spelling matches the downstream consumers ("Asset_Name",
    "Security Objective" with a space); objects are grouped into a
    top-level array.
    """
    by_ip: dict[str, list[AssetRecord]] = {}
    for record in records:
        by_ip.setdefault(record.ip, []).append(record)
    payload = []
    for ip, group in by_ip.items():
        payload.append({
            "IP": ip,
            "Assets": [
                {
                    "Asset_Name": r.asset_name,
                    "Functionality": r.functionality,
                    "Security Objective": r.security_objective,
                    "Justification": r.justification,
                }
                for r in group
            ],
        })
    return json.dumps(payload, indent=4, ensure_ascii=False)


def validate_asset_json(text_or_data) -> bool:
    """Does the payload match the asset artifact schema?"""
    data = json.loads(text_or_data) if isinstance(text_or_data, (str, bytes)) else text_or_data
    if not isinstance(data, list):
        return False
    for entry in data:
        if not isinstance(entry, dict) or "IP" not in entry or "Assets" not in entry:
            return False
        for asset in entry["Assets"]:
            keys = {"Asset_Name", "Functionality", "Security Objective", "Justification"}
            if not keys <= set(asset):
                return False
            if asset["Security Objective"] not in CIA_OBJECTIVES:
                return False
    return True


def exemplar_set() -> list[dict]:
    return load_table("cia_exemplars")
