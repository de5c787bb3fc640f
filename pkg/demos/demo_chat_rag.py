#!/usr/bin/env python3
"""Grounded question answering over a local knowledge store.

Builds a vector store from a short fuzzing-literature document, routes the
query, retrieves top-k chunks, and produces a cited answer; then shows the
insufficient-knowledge posture on an off-vocabulary query.
"""

import tempfile
from pathlib import Path

from svworkbench.agents import chat
from svworkbench.core import SessionStore, create_session
from svworkbench.gateway import Gateway, MockBackend, MockFixtureWriter
from svworkbench.knowledge import build_store, ingest
from svworkbench.runtime import AgentRuntime

DATA = Path(__file__).parent / "data"

QUERY = "List all frameworks that use fuzzing techniques for verification of hardware design"


def main():
    workdir = Path(tempfile.mkdtemp(prefix="svw_demo_"))
    store = build_store("fuzzing", "hardware fuzzing literature",
                        ingest((DATA / "fuzzing_kb.md").read_text(), "fuzzing-survey", 60, 8))
    print(f"=== 1. built store {store.store_id!r} with {len(store)} chunks ===")

    writer = MockFixtureWriter(workdir / "fixtures")
    writer.add("chat_optimize", f"optimized: {QUERY}\nexpansions: none",
               variables={"query": QUERY, "anchor": ""})
    writer.add("chat_answer",
               "Grounded by the retrieved chunks: RFUZZ (mux-toggle coverage), TheHuzz "
               "(processor fuzzing with hardware coverage metrics), SoCFuzzer (security "
               "cost function), FormalFuzzer (formal pruning + fuzzing), and RISCVuzz "
               "(differential CPU fuzzing).")
    off_query = "qqqq zzzz wwww vvvv"
    writer.add("chat_optimize", f"optimized: {off_query}\nexpansions: none",
               variables={"query": off_query, "anchor": ""})

    gateway = Gateway()
    gateway.register_backend("mock", MockBackend(workdir / "fixtures"))
    runtime = AgentRuntime(gateway=gateway, session_store=SessionStore(workdir / "store"),
                           stores={"fuzzing": store})

    print("\n=== 2. grounded answer with citations ===")
    answer = chat.answer(QUERY, create_session(), runtime)
    print("   ", answer.answer[:120], "...")
    for ref, span in answer.citations:
        print(f"    cited {ref}: {span[:60]}...")

    print("\n=== 3. anti-hallucination posture on off-vocabulary input ===")
    shrug = chat.answer(off_query, create_session(), runtime)
    print("   ", shrug.answer[:120], "...")
    print("    citations:", shrug.citations)


if __name__ == "__main__":
    main()
