"""Security verification chat agent.

Pipeline per query: intent resolution, dialogue-state tracking, query
optimization, domain routing, top-k retrieval plus optional web search,
then generation grounded strictly in the retrieved evidence. When nothing
retrievable clears the score floor the agent says so instead of
fabricating an answer.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from ..core import Session, resolve_follow_up
from ..errors import SearchUnavailable
from ..knowledge import embed, route_domain, search, web_search
from ..runtime import AgentRuntime

logger = logging.getLogger(__name__)

# near-orthogonal bag-of-words cosine means no lexical overlap at all
SCORE_FLOOR = 0.05

INSUFFICIENT_KNOWLEDGE = (
    "I do not have enough grounded knowledge to answer this reliably: nothing "
    "in the configured knowledge stores matches the question and no web "
    "results are available. Please add relevant documents to a store or "
    "rephrase the question."
)

CITATION_SPAN_CHARS = 160


@dataclass
class ChatIntent:
    kind: str  # security_question | feedback | invalid


@dataclass
class OptimizedQuery:
    original: str
    optimized: str
    expansions: list[str] = field(default_factory=list)


@dataclass
class GroundedAnswer:
    answer: str
    citations: list[tuple[str, str]] = field(default_factory=list)
    used_web: bool = False

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "citations": [{"ref": ref, "span": span} for ref, span in self.citations],
            "used_web": self.used_web,
        }


def resolve_chat_intent(query: str, session: Session, runtime: AgentRuntime) -> ChatIntent:
    """Three-way classification; feedback requires a prior agent answer."""
    last = session.last_agent_turn()
    response = runtime.complete(
        "chat_intent",
        {"query": query, "last_answer": last.content if last else ""},
    )
    m = re.search(r"intent\s*:\s*(\w+)", response.text, re.IGNORECASE)
    kind = (m.group(1).lower() if m else response.text.strip().lower().split()[0:1] or [""])
    kind = kind if isinstance(kind, str) else (kind[0] if kind else "")
    if kind not in ("security_question", "feedback", "invalid"):
        kind = "invalid"
    if kind == "feedback" and last is None:
        kind = "invalid"
    return ChatIntent(kind)


def optimize_query(query: str, anchor_text: str, runtime: AgentRuntime) -> OptimizedQuery:
    """Backend rewrite; follow-ups become self-contained via the anchor turn."""
    response = runtime.complete("chat_optimize", {"query": query, "anchor": anchor_text})
    optimized = query
    expansions: list[str] = []
    for line in response.text.splitlines():
        m = re.match(r"\s*optimized\s*:\s*(.+)", line, re.IGNORECASE)
        if m and optimized == query:
            optimized = m.group(1).strip() or query
            continue
        m = re.match(r"\s*expansions\s*:\s*(.+)", line, re.IGNORECASE)
        if m:
            expansions = [e.strip() for e in m.group(1).split(",")
                          if e.strip() and e.strip().lower() != "none"]
    return OptimizedQuery(original=query, optimized=optimized, expansions=expansions)


def _gather_evidence(optimized: OptimizedQuery, runtime: AgentRuntime):
    """Route, retrieve, optionally web-search. Returns (evidence_text,
    citations, used_web, had_store_hits)."""
    store_hits: list[tuple[str, float]] = []
    store = None
    stores = list(runtime.stores.values())
    if stores:
        store_id = route_domain(optimized.optimized, stores)
        store = runtime.stores[store_id]
        query_vec = embed(optimized.optimized)
        store_hits = search(store, query_vec, runtime.config.retrieval_k)
        store_hits = [(cid, score) for cid, score in store_hits if score >= SCORE_FLOOR]

    web_results = []
    used_web = False
    try:
        web_results = web_search(optimized.optimized, runtime.web_adapter)
        used_web = bool(web_results)
    except SearchUnavailable:
        logger.debug("web search unavailable; store-only retrieval")

    blocks: list[str] = []
    citations: list[tuple[str, str]] = []
    for chunk_id, score in store_hits:
        chunk = store.chunks[chunk_id]
        blocks.append(f"[store chunk {chunk_id}]\n{chunk.text}")
        citations.append((chunk_id, chunk.text[:CITATION_SPAN_CHARS]))
    for result in web_results:
        blocks.append(f"[web {result.url}]\n{result.title}: {result.snippet}")
        citations.append((result.url, result.snippet[:CITATION_SPAN_CHARS]))
    return "\n\n".join(blocks), citations, used_web, bool(store_hits)


def answer(query: str, session: Session, runtime: AgentRuntime) -> GroundedAnswer:
    """Full chat pipeline for a security question."""
    follow = resolve_follow_up(session, query, runtime.gateway, runtime.backend_id)
    anchor_text = ""
    if follow.is_follow_up:
        anchor_text = session.transcript[follow.anchor_turn_index].content
    optimized = optimize_query(query, anchor_text, runtime)

    evidence, citations, used_web, had_hits = _gather_evidence(optimized, runtime)
    if not had_hits and not used_web:
        return GroundedAnswer(answer=INSUFFICIENT_KNOWLEDGE, citations=[], used_web=False)

    response = runtime.complete("chat_answer", {"query": optimized.optimized, "evidence": evidence})
    return GroundedAnswer(answer=response.text, citations=citations, used_web=used_web)


def answer_feedback(feedback_text: str, session: Session, runtime: AgentRuntime) -> GroundedAnswer:
    """Regenerate the last answer incorporating the engineer's feedback."""
    prior = session.last_agent_turn()
    prior_answer = prior.content if prior else ""
    prior_query = ""
    if prior is not None:
        for turn in reversed(session.transcript[: prior.index]):
            if turn.author == "user":
                prior_query = turn.content
                break
    optimized = OptimizedQuery(
        original=feedback_text,
        optimized=f"{prior_query} {feedback_text}".strip(),
    )
    evidence, citations, used_web, had_hits = _gather_evidence(optimized, runtime)
    response = runtime.complete(
        "chat_feedback",
        {"prior_answer": prior_answer, "feedback": feedback_text, "evidence": evidence},
    )
    return GroundedAnswer(answer=response.text, citations=citations, used_web=used_web)


INVALID_REPLY = (
    "That message does not look like a hardware security question or "
    "feedback on a previous answer, so I have nothing to run. Ask about "
    "SoC/RTL security verification, or give feedback on an earlier reply."
)
