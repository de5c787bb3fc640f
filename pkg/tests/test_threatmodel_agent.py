"""Threat modeling agent: flow selection, threat dialogue, policies, plans."""

import json

import pytest

from svworkbench.agents import threatmodel as tm
from svworkbench.errors import FlowSelectionError, PreconditionError, ThreatKbMissing
from svworkbench.knowledge import VectorStore, build_store, embed, ingest, search


IOT_CONTEXT = ("fielded IoT sensor device, attacker has physical access, parts sourced "
               "from an external supply chain with outsourced fabrication")
CPU_CONTEXT = "CPU with privilege levels, machine mode CSRs, and MMIO configuration registers"

ASSETS = [
    {"Asset_Name": "WDT_CTRL_LOCK", "IP": "wdt", "Functionality": "lock bit",
     "Security Objective": "Integrity", "Justification": "j"},
    {"Asset_Name": "TRNG_CTRL_EN", "IP": "trng", "Functionality": "enable flag",
     "Security Objective": "Availability", "Justification": "j"},
]


def script_flow(bench, context, assets, reply):
    asset_lines = ", ".join(a.get("Asset_Name", "?") for a in assets) or "none"
    bench.writer.add("threat_flow", reply,
                     variables={"context": context, "assets": asset_lines})


class TestSelectFlow:
    def test_iot_supply_chain_flow1(self, bench):
        script_flow(bench, IOT_CONTEXT, ASSETS, "flow: flow1")
        assert tm.select_flow(IOT_CONTEXT, ASSETS, bench.runtime()) == "flow1"

    def test_cpu_privilege_flow2(self, bench):
        script_flow(bench, CPU_CONTEXT, ASSETS, "flow: flow2")
        assert tm.select_flow(CPU_CONTEXT, ASSETS, bench.runtime()) == "flow2"

    def test_both(self, bench):
        context = "fielded device with privileged software stack"
        script_flow(bench, context, ASSETS, "flow: both")
        assert tm.select_flow(context, ASSETS, bench.runtime()) == "both"

    def test_unconstrained_raises_after_retry(self, bench):
        context = "vague"
        script_flow(bench, context, [], "hmm, hard to say")
        bench.writer.add("threat_flow", "really cannot decide")  # wildcard retry entry
        with pytest.raises(FlowSelectionError):
            tm.select_flow(context, [], bench.runtime())


class TestThreatKb:
    def test_kb_builds_with_bundled_entries(self):
        kb = tm.build_threat_kb()
        assert len(kb) >= 20
        assert "thr-clock-glitch" in kb.chunks

    def test_empty_kb_raises(self, bench):
        with pytest.raises(ThreatKbMissing):
            tm.identify_threats("ctx", VectorStore("empty"), [], bench.runtime())

    def test_zero_retrieval_empty_result(self, bench):
        kb = tm.build_threat_kb()
        result = tm.identify_threats("", kb, [], bench.runtime())
        assert result.entries == []
        assert not result.needs_dialogue


def seeded_candidates(context, k=6):
    kb = tm.build_threat_kb()
    hits = search(kb, embed(context), k)
    return kb, [cid for cid, score in hits if score > 0.0]


def candidates_text(entries):
    return "\n".join(f"{e.threat_id}: {e.name} ({e.threat_class}) [{e.relevance}]"
                     for e in entries)


class TestIdentifyThreats:
    def test_first_call_asks_round_one_questions(self, bench):
        kb = tm.build_threat_kb()
        result = tm.identify_threats(IOT_CONTEXT, kb, [], bench.runtime())
        assert result.needs_dialogue
        assert list(result.pending_questions) == list(tm.ROUND_ONE_QUESTIONS)
        assert all(e.relevance == "candidate" for e in result.entries)

    def _round1_dialogue(self, answers):
        return [{"questions": list(tm.ROUND_ONE_QUESTIONS), "answers": answers}]

    def _script_round(self, bench, context, dialogue, entries, reply):
        transcript = []
        for rnd in dialogue:
            for q, a in zip(rnd["questions"], rnd["answers"]):
                transcript.append(f"Q: {q}\nA: {a}")
        bench.writer.add("threat_evaluate", reply, variables={
            "context": context,
            "candidates": candidates_text(entries),
            "dialogue": "\n\n".join(transcript),
        })

    def test_scripted_dialogue_resolves_candidates(self, bench):
        kb, seeds = seeded_candidates(IOT_CONTEXT)
        assert len(seeds) == 6
        entries = [tm.ThreatEntry(cid, tm.kb_entry(cid)["name"], tm.kb_entry(cid)["class"],
                                  tm.kb_entry(cid)["description"]) for cid in seeds]
        answers = ["28nm QFN package with exposed SPI and JTAG",
                   "deployed on factory floors, physically reachable",
                   "fab and assembly outsourced to third parties"]
        dialogue = self._round1_dialogue(answers)
        reply = "\n".join([
            f"confirm: {seeds[0]} | physically reachable device",
            f"confirm: {seeds[1]} | exposed debug header",
            f"confirm: {seeds[2]} | outsourced supply chain",
            f"exclude: {seeds[3]} | requires lab equipment the attacker lacks",
            f"exclude: {seeds[4]} | not applicable to this package",
            "ask: does the device store long-lived secrets in external flash?",
        ])
        self._script_round(bench, IOT_CONTEXT, dialogue, entries, reply)
        result = tm.identify_threats(IOT_CONTEXT, kb, dialogue, bench.runtime(), round_cap=1)
        relevances = {e.threat_id: e.relevance for e in result.entries}
        assert sum(1 for r in relevances.values() if r == "confirmed") == 3
        assert sum(1 for r in relevances.values() if r == "excluded") == 2
        # round cap hit with one unresolved: stays candidate, flagged
        assert sum(1 for r in relevances.values() if r == "candidate") == 1
        flagged = next(e for e in result.entries if e.relevance == "candidate")
        assert flagged.rationale
        assert not result.needs_dialogue

    def test_secure_facility_answer_excludes_physical(self, bench):
        kb, seeds = seeded_candidates(IOT_CONTEXT)
        entries = [tm.ThreatEntry(cid, tm.kb_entry(cid)["name"], tm.kb_entry(cid)["class"],
                                  tm.kb_entry(cid)["description"]) for cid in seeds]
        answers = ["standard SoC", "device never leaves secure facility", "trusted fab"]
        dialogue = self._round1_dialogue(answers)
        physical = [cid for cid in seeds if tm.kb_entry(cid)["class"] == "physical"]
        reply = "\n".join(
            f"exclude: {cid} | device never leaves secure facility" for cid in physical
        ) + "\n" + "\n".join(
            f"confirm: {cid} | supply chain still applies"
            for cid in seeds if cid not in physical
        )
        self._script_round(bench, IOT_CONTEXT, dialogue, entries, reply)
        result = tm.identify_threats(IOT_CONTEXT, kb, dialogue, bench.runtime())
        for entry in result.entries:
            if entry.threat_id in physical:
                assert entry.relevance == "excluded"
                assert "secure facility" in entry.rationale

    def test_dialogue_bounded(self, bench):
        """At most round-cap x questions-per-round questions ever asked."""
        kb, seeds = seeded_candidates(IOT_CONTEXT)
        entries = [tm.ThreatEntry(cid, tm.kb_entry(cid)["name"], tm.kb_entry(cid)["class"],
                                  tm.kb_entry(cid)["description"]) for cid in seeds]
        asked = 0
        dialogue = []
        result = tm.identify_threats(IOT_CONTEXT, kb, dialogue, bench.runtime(), round_cap=3)
        while result.needs_dialogue:
            questions = result.pending_questions
            assert len(questions) <= tm.QUESTIONS_PER_ROUND
            asked += len(questions)
            self._script_round(
                bench, IOT_CONTEXT,
                dialogue + [{"questions": questions, "answers": ["answer"] * len(questions)}],
                entries,
                "ask: one more thing?\nask: and another?\nask: plus this?\nask: overflow?",
            )
            dialogue.append({"questions": questions, "answers": ["answer"] * len(questions)})
            result = tm.identify_threats(IOT_CONTEXT, kb, dialogue, bench.runtime(), round_cap=3)
        assert asked <= 3 * tm.QUESTIONS_PER_ROUND


@pytest.fixture
def spec_store(soc_spec_md):
    return build_store("spec", "soc spec", ingest(soc_spec_md, "soc_spec", 120, 16))


@pytest.fixture
def isa_store(isa_fixture_md):
    return build_store("isa", "isa manual", ingest(isa_fixture_md, "isa", 80, 8))


class TestGeneratePolicies:
    def test_policy_extracted_with_spans(self, bench, spec_store, isa_store):
        assets = [{"Asset_Name": "WDT_CTRL_LOCK", "IP": "wdt"}]
        bench.writer.add("policy_extract", (
            "statement: once WDT_CTRL_LOCK is set the watchdog timeout configuration "
            "must be immutable until hardware reset\n"
            "significance: prevents malware from silencing the watchdog\n"
            "vulnerabilities: watchdog disable; timeout extension attack\n"
        ))
        bundle = tm.generate_policies(spec_store, isa_store, assets, bench.runtime())
        assert len(bundle.policies) == 1
        policy = bundle.policies[0]
        assert policy.asset_ref == "WDT_CTRL_LOCK"
        assert "immutable" in policy.statement
        assert policy.source_spans
        known = set(spec_store.chunks) | set(isa_store.chunks)
        assert all(cid in known for cid in policy.source_spans)
        assert len(policy.potential_vulnerabilities) == 2
        assert not bundle.uncovered_assets

    def test_machine_mode_policy_from_isa(self, bench, spec_store, isa_store):
        assets = [{"Asset_Name": "mstatus privilege register", "IP": "cpu"}]
        bench.writer.add("policy_extract", (
            "statement: only machine mode may write the mstatus register\n"
            "significance: protects the privilege state from user code\n"
            "vulnerabilities: privilege escalation\n"
        ))
        bundle = tm.generate_policies(spec_store, isa_store, assets, bench.runtime())
        assert bundle.policies
        assert "only machine mode may write" in bundle.policies[0].statement

    def test_empty_assets_empty_policies(self, bench, spec_store, isa_store):
        bundle = tm.generate_policies(spec_store, isa_store, [], bench.runtime())
        assert bundle.policies == [] and bundle.uncovered_assets == []

    def test_uncovered_asset_recorded(self, bench, spec_store, isa_store):
        assets = [{"Asset_Name": "qqqx zzzy", "IP": "vvvw"}]
        bundle = tm.generate_policies(spec_store, isa_store, assets, bench.runtime())
        assert bundle.policies == []
        assert bundle.uncovered_assets == ["qqqx zzzy"]


def confirmed_threats(n=3):
    entries = []
    for i, entry in enumerate(tm.load_table("threat_kb")[:n]):
        entries.append(tm.ThreatEntry(
            entry["threat_id"], entry["name"], entry["class"], entry["description"],
            relevance="confirmed", rationale="scripted",
        ))
    return entries


INFRA = {"infrastructure": "we have a formal tool and a simulator",
         "budget": "two engineer-months", "timeline": "one quarter"}


class TestGenerateTestPlan:
    def test_infra_dialogue_asked_once(self, bench):
        result = tm.generate_test_plan(confirmed_threats(), {}, bench.runtime())
        assert result.needs_dialogue
        assert [name for name, _ in result.pending_questions] == [
            "infrastructure", "budget", "timeline",
        ]

    def test_cases_have_all_five_fields(self, bench):
        targets = confirmed_threats(3)
        for target in targets:
            bench.writer.add("test_plan", (
                f"objective: show {target.name} is mitigated\n"
                "methodology: drive the attack scenario in a simulator testbench\n"
                "expected_behavior: the design blocks the attack path\n"
                "evaluation_criteria: assertion passes on every run\n"
                "tools: simulator, formal tool\n"
            ), variables={
                "target": tm._render_target(target),
                "infrastructure": INFRA["infrastructure"],
                "budget": INFRA["budget"],
                "timeline": INFRA["timeline"],
            })
        result = tm.generate_test_plan(targets, INFRA, bench.runtime())
        assert len(result.cases) == 3
        target_ids = {t.threat_id for t in targets}
        for case in result.cases:
            assert case.validate()
            assert case.target in target_ids  # referential integrity

    def test_tool_constrained_to_reported_infra(self, bench):
        target = confirmed_threats(1)[0]
        bench.writer.add("test_plan", (
            "objective: o\nmethodology: m\nexpected_behavior: e\n"
            "evaluation_criteria: c\ntools: simulator, laser fault injection rig\n"
        ), variables={
            "target": tm._render_target(target),
            "infrastructure": INFRA["infrastructure"],
            "budget": INFRA["budget"],
            "timeline": INFRA["timeline"],
        })
        result = tm.generate_test_plan([target], INFRA, bench.runtime())
        tools = result.cases[0].tool_recommendations
        assert "simulator" in tools
        assert any("requires acquisition" in t for t in tools if "laser" in t)

    def test_single_policy_target(self, bench):
        policy = tm.SecurityPolicy("pol-001", "WDT_CTRL_LOCK", "lock must hold", ["c1"])
        bench.writer.add("test_plan", (
            "objective: o\nmethodology: m\nexpected_behavior: e\n"
            "evaluation_criteria: c\ntools: simulator\n"
        ), variables={
            "target": tm._render_target(policy),
            "infrastructure": INFRA["infrastructure"],
            "budget": INFRA["budget"],
            "timeline": INFRA["timeline"],
        })
        result = tm.generate_test_plan([policy], INFRA, bench.runtime())
        assert len(result.cases) == 1
        assert result.cases[0].target == "pol-001"

    def test_empty_targets_precondition(self, bench):
        with pytest.raises(PreconditionError):
            tm.generate_test_plan([], INFRA, bench.runtime())


class TestRendering:
    def test_json_and_markdown(self):
        cases = [tm.TestCase("tc-001", "thr-side-channel", "o", "m", "e", "c", ["sim"])]
        data = json.loads(tm.render_test_plan_json(cases))
        assert data["test_cases"][0]["test_id"] == "tc-001"
        md = tm.render_test_plan_markdown(cases)
        assert "tc-001" in md and "**Objective:** o" in md

    def test_threat_model_json(self):
        entries = confirmed_threats(2)
        data = json.loads(tm.render_threat_model_json(entries, ["orphan"]))
        assert len(data["threats"]) == 2
        assert data["uncovered_assets"] == ["orphan"]

    def test_threat_model_markdown(self):
        entries = confirmed_threats(2)
        entries[1].relevance = "excluded"
        md = tm.render_threat_model_markdown(entries, ["orphan"])
        assert "## Confirmed" in md and "## Excluded" in md
        assert entries[0].name in md
        assert "orphan" in md
