"""Simulation-based security bug validation agent.

Three stages: scenario synthesis with an LLM critic loop, testbench
generation gated by the structural syntax checker, then simulation through
a pluggable adapter and a region-of-interest comparison that yields one of
three verdicts: match, failed_activation, or incomplete_definition.
"""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .. import hdl
from ..errors import (
    MetricError,
    ScenarioError,
    SimulatorError,
    TestbenchError,
    TraceFormatError,
)
from ..runtime import AgentRuntime

logger = logging.getLogger(__name__)

CRITIC_ROUNDS = 3
TESTBENCH_ROUNDS = 3

ACTIONS = ("set_signal", "release_reset", "assert_reset", "observe")


@dataclass
class ScenarioEvent:
    time_ns: int
    action: str
    signal: str = ""
    value: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return {"time_ns": self.time_ns, "action": self.action, "signal": self.signal,
                "value": self.value, "note": self.note}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioEvent":
        return cls(d["time_ns"], d["action"], d.get("signal", ""), d.get("value", ""),
                   d.get("note", ""))

    def render(self) -> str:
        if self.action == "set_signal":
            body = f"set {self.signal}={self.value}"
        else:
            body = self.action
        note = f" | {self.note}" if self.note else ""
        return f"event: {self.time_ns} {body}{note}"


@dataclass
class RegionOfInterest:
    time_ns: int
    expected: dict[str, str]

    def to_dict(self) -> dict:
        return {"time_ns": self.time_ns, "expected": dict(self.expected)}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionOfInterest":
        return cls(d["time_ns"], dict(d["expected"]))


@dataclass
class TestScenario:
    events: list[ScenarioEvent]
    monitor_points: list[str]
    roi: RegionOfInterest

    def to_dict(self) -> dict:
        return {
            "events": [e.to_dict() for e in self.events],
            "monitor_points": list(self.monitor_points),
            "roi": self.roi.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestScenario":
        return cls(
            [ScenarioEvent.from_dict(e) for e in d["events"]],
            list(d["monitor_points"]),
            RegionOfInterest.from_dict(d["roi"]),
        )

    def render(self) -> str:
        lines = [e.render() for e in self.events]
        lines.append("monitor: " + ", ".join(self.monitor_points))
        roi_pairs = " ".join(f"{k}={v}" for k, v in self.roi.expected.items())
        lines.append(f"roi: {self.roi.time_ns} {roi_pairs}")
        return "\n".join(lines)


@dataclass
class SimulationTrace:
    records: list[tuple[int, dict[str, str]]]

    def at(self, time_ns: int) -> dict[str, str] | None:
        """Last record at exactly time_ns (strobe semantics)."""
        found = None
        for t, values in self.records:
            if t == time_ns:
                found = values
        return found

    def to_dict(self) -> dict:
        return {"records": [[t, values] for t, values in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationTrace":
        return cls([(t, dict(values)) for t, values in d["records"]])


@dataclass
class Verdict:
    outcome: str  # match | failed_activation | incomplete_definition
    detail: list[dict] = field(default_factory=list)
    time_ns: int = 0

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "detail": self.detail, "time_ns": self.time_ns}

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(d["outcome"], list(d.get("detail", [])), d.get("time_ns", 0))


# ---------------------------------------------------------------------------
# scenario generation


_EVENT_RE = re.compile(
    r"\s*event\s*:\s*(\d+)\s+(assert_reset|release_reset|observe|set)\b"
    r"(?:\s+([\w$.\[\]]+)\s*=\s*([\w'??]+))?\s*(?:\|\s*(.*))?$",
    re.IGNORECASE,
)


def parse_scenario(text: str) -> TestScenario:
    """Parse the labeled-line scenario reply format."""
    events: list[ScenarioEvent] = []
    monitor: list[str] = []
    roi = None
    problems: list[str] = []
    for line in text.splitlines():
        m = _EVENT_RE.match(line)
        if m:
            action = m.group(2).lower()
            if action == "set":
                action = "set_signal"
                if not m.group(3):
                    problems.append(f"set event without signal: {line.strip()!r}")
                    continue
            events.append(
                ScenarioEvent(
                    time_ns=int(m.group(1)),
                    action=action,
                    signal=m.group(3) or "",
                    value=m.group(4) or "",
                    note=(m.group(5) or "").strip(),
                )
            )
            continue
        m = re.match(r"\s*monitor\s*:\s*(.+)", line, re.IGNORECASE)
        if m:
            monitor = [s.strip() for s in m.group(1).split(",") if s.strip()]
            continue
        m = re.match(r"\s*roi\s*:\s*(\d+)\s+(.+)", line, re.IGNORECASE)
        if m:
            expected = {}
            for pair in m.group(2).split():
                if "=" in pair:
                    name, value = pair.split("=", 1)
                    expected[name.strip()] = value.strip()
            roi = RegionOfInterest(int(m.group(1)), expected)
    if not events:
        problems.append("no events parsed")
    if roi is None or not roi.expected:
        problems.append("no region of interest with expected values")
    times = [e.time_ns for e in events]
    if times != sorted(times) or len(set(times)) != len(times):
        problems.append("event times must be strictly increasing")
    if problems:
        raise ScenarioError("; ".join(problems))
    return TestScenario(events=events, monitor_points=monitor, roi=roi)


def scenario_signal_errors(scenario: TestScenario, table: hdl.SignalTable) -> list[str]:
    """Driven/monitored signals must exist in the design's port/register table."""
    known = {p.name for p in table.ports} | {r.name for r in table.registers}
    unknown = []
    for event in scenario.events:
        if event.action == "set_signal" and event.signal not in known:
            unknown.append(event.signal)
    for name in scenario.monitor_points:
        if name not in known:
            unknown.append(name)
    return sorted(set(unknown))


def _render_signals(table: hdl.SignalTable) -> str:
    port_lines = [f"{p.direction} [{p.width - 1}:0] {p.name}" if p.width > 1
                  else f"{p.direction} {p.name}" for p in table.ports]
    reg_lines = [f"reg [{r.width - 1}:0] {r.name}" if r.width > 1 else f"reg {r.name}"
                 for r in table.registers]
    param_lines = [f"parameter {p.name} = {p.value}" for p in table.parameters]
    return "\n".join([f"module {table.module_name}"] + port_lines + reg_lines + param_lines)


def generate_scenario(design: str, bug_description: str, runtime: AgentRuntime) -> TestScenario:
    """Backend drafts events; a critic pass accepts or returns revision
    notes, up to three rounds; the final scenario must reference only
    signals that exist in the design."""
    if not bug_description.strip():
        raise ScenarioError("bug description is empty")
    table = hdl.parse_ports(design)
    signals = _render_signals(table)

    feedback = ""
    last_errors: list[str] = []
    scenario = None
    for round_index in range(CRITIC_ROUNDS):
        response = runtime.complete(
            "scenario_generate",
            {"signals": signals, "bug_description": bug_description,
             "feedback": f"\nRevision notes:\n{feedback}\n" if feedback else ""},
        )
        try:
            draft = parse_scenario(response.text)
        except ScenarioError as exc:
            feedback = str(exc)
            last_errors = [str(exc)]
            continue
        unknown = scenario_signal_errors(draft, table)
        if unknown:
            feedback = f"these signals do not exist in the design: {', '.join(unknown)}"
            last_errors = unknown
            scenario = None
            continue
        critic = runtime.complete(
            "scenario_critic",
            {"bug_description": bug_description, "scenario": draft.render()},
        )
        if re.search(r"^\s*accept\b", critic.text, re.IGNORECASE | re.MULTILINE):
            return draft
        m = re.search(r"revise\s*:\s*(.+)", critic.text, re.IGNORECASE | re.DOTALL)
        feedback = m.group(1).strip() if m else critic.text.strip()
        scenario = draft
    if scenario is not None:
        # critic kept revising but the last draft is structurally sound
        logger.warning("scenario critic did not accept within %d rounds; using last draft",
                       CRITIC_ROUNDS)
        return scenario
    raise ScenarioError(
        f"no valid scenario after {CRITIC_ROUNDS} rounds: {'; '.join(last_errors)}",
        unknown_signals=[e for e in last_errors if " " not in e],
    )


def generate_testbench(design: str, scenario: TestScenario, runtime: AgentRuntime) -> str:
    """Backend-generated self-checking testbench, re-generated with error
    feedback until the structural checker passes (at most three rounds)."""
    table = hdl.parse_ports(design)
    feedback = ""
    last_diags: list[hdl.ParseDiagnostic] = []
    for round_index in range(TESTBENCH_ROUNDS):
        response = runtime.complete(
            "testbench_generate",
            {"design": design, "scenario": scenario.render(),
             "feedback": f"\nFix these checker errors:\n{feedback}\n" if feedback else ""},
        )
        check = hdl.check_testbench_syntax(response.text, table)
        if check.ok:
            return response.text
        last_diags = check.diagnostics
        feedback = "\n".join(d.format("tb.v") for d in check.diagnostics)
        logger.info("testbench round %d failed checker: %s", round_index + 1, feedback)
    raise TestbenchError(
        f"testbench still failing after {TESTBENCH_ROUNDS} rounds", diagnostics=last_diags
    )


# ---------------------------------------------------------------------------
# simulation adapters


_TRACE_LINE_RE = re.compile(r"\s*Time\s*=\s*(\d+)\s*(.*)$")


def parse_trace(text: str) -> SimulationTrace:
    """Canonical log grammar: ``Time=<ns> name=value [name=value ...]``.

    Lines not starting with Time= (banners, prompts) are skipped; a line
    that starts the grammar but does not complete it is an error.
    """
    records: list[tuple[int, dict[str, str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped.lower().startswith("time"):
            continue
        m = _TRACE_LINE_RE.match(stripped)
        if not m:
            raise TraceFormatError(lineno, line)
        values: dict[str, str] = {}
        rest = m.group(2).strip()
        if not rest and not values:
            raise TraceFormatError(lineno, line)
        for pair in rest.split():
            if "=" not in pair:
                raise TraceFormatError(lineno, line)
            name, value = pair.split("=", 1)
            if not name or not value:
                raise TraceFormatError(lineno, line)
            values[name] = value
        records.append((int(m.group(1)), values))
    records.sort(key=lambda r: r[0])
    return SimulationTrace(records)


class MockSimulator:
    """Replays a fixture trace file keyed by design name.

    Looks in the configured directory (or $SVW_MOCK_TRACES) for
    ``<design_name>.log``.
    """

    def __init__(self, traces_dir: str | Path | None = None):
        self.traces_dir = Path(traces_dir or os.environ.get("SVW_MOCK_TRACES", "."))

    def run(self, design: str, testbench: str, workdir: Path, design_name: str) -> str:
        path = self.traces_dir / f"{design_name}.log"
        if not path.is_file():
            raise SimulatorError(f"no mock trace for design {design_name!r} in {self.traces_dir}")
        return path.read_text(encoding="utf-8")


class SubprocessSimulator:
    """Runs any event-driven Verilog simulator reachable as a subprocess.

    ``command_template`` uses {dut}, {tb}, {log}, and {workdir} placeholders,
    e.g. "iverilog -o {workdir}/sim {dut} {tb} && vvp {workdir}/sim > {log}".
    """

    def __init__(self, command_template: str, timeout: float = 60.0):
        self.command_template = command_template
        self.timeout = timeout

    def run(self, design: str, testbench: str, workdir: Path, design_name: str) -> str:
        dut = workdir / "dut.v"
        tb = workdir / "tb.v"
        log = workdir / "trace.log"
        dut.write_text(design, encoding="utf-8")
        tb.write_text(testbench, encoding="utf-8")
        command = self.command_template.format(dut=dut, tb=tb, log=log, workdir=workdir)
        proc = subprocess.run(
            command, shell=True, capture_output=True, text=True, timeout=self.timeout
        )
        if proc.returncode != 0:
            raise SimulatorError(
                f"simulator exited {proc.returncode}: {proc.stderr[:500] or proc.stdout[:500]}"
            )
        if log.is_file():
            return log.read_text(encoding="utf-8")
        return proc.stdout


def simulate(design: str, testbench: str, adapter_id: str, runtime: AgentRuntime,
             plan_id: str = "adhoc", design_name: str = "design") -> SimulationTrace:
    """Write sources, invoke the adapter, parse the canonical log."""
    if adapter_id not in runtime.sim_adapters:
        raise SimulatorError(f"simulator adapter {adapter_id!r} not registered")
    adapter = runtime.sim_adapters[adapter_id]
    workdir = runtime.scratch_dir(plan_id)
    (workdir / "dut.v").write_text(design, encoding="utf-8")
    (workdir / "tb.v").write_text(testbench, encoding="utf-8")
    log_text = adapter.run(design, testbench, workdir, design_name)
    (workdir / "trace.log").write_text(log_text, encoding="utf-8")
    return parse_trace(log_text)


# ---------------------------------------------------------------------------
# verdicts


def normalize_value(literal: str) -> tuple[str, int | None] | str:
    """Numeric literals normalize to a width-independent integer key;
    symbolic values (state names and x/z forms) compare as strings."""
    parsed = hdl.parse_verilog_literal(literal)
    if parsed is not None:
        return ("num", parsed[0])
    return literal.strip()


def values_equal(expected: str, actual: str) -> bool:
    return normalize_value(expected) == normalize_value(actual)


def validate(trace: SimulationTrace, roi: RegionOfInterest) -> Verdict:
    """Compare the trace record at the ROI time against expected values.

    match: every expected signal present and equal. failed_activation: the
    record exists but at least one value differs. incomplete_definition:
    the record or any expected signal is absent.
    """
    record = trace.at(roi.time_ns)
    if record is None:
        return Verdict(
            outcome="incomplete_definition",
            detail=[{"signal": name, "expected": value, "actual": None, "equal": False}
                    for name, value in roi.expected.items()],
            time_ns=roi.time_ns,
        )
    detail = []
    missing = False
    mismatch = False
    for name, expected in roi.expected.items():
        actual = record.get(name)
        if actual is None:
            missing = True
            detail.append({"signal": name, "expected": expected, "actual": None, "equal": False})
            continue
        equal = values_equal(expected, actual)
        mismatch = mismatch or not equal
        detail.append({"signal": name, "expected": expected, "actual": actual, "equal": equal})
    if missing:
        return Verdict("incomplete_definition", detail, roi.time_ns)
    if mismatch:
        return Verdict("failed_activation", detail, roi.time_ns)
    return Verdict("match", detail, roi.time_ns)


@dataclass
class ValidationRate:
    matches: int
    total: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.matches, self.total)

    @property
    def value(self) -> float:
        return self.matches / self.total

    def __str__(self) -> str:
        return f"{self.matches}/{self.total} = {self.value:.4f}"


def validation_rate(results: list[Verdict]) -> ValidationRate:
    """Proportion of runs whose verdict is match; exact rational kept."""
    if not results:
        raise MetricError("validation rate over an empty result list")
    matches = sum(1 for v in results if v.outcome == "match")
    return ValidationRate(matches, len(results))


def render_verdict_json(verdict: Verdict, bug_name: str, design_name: str) -> str:
    return json.dumps(
        {"bug": bug_name, "design": design_name, **verdict.to_dict()}, indent=2
    )
