#!/usr/bin/env python3
"""Walk the simulation-based bug validation pipeline on the buggy
authentication FSM: scenario synthesis, critic review, testbench
generation with syntax checking, mock simulation, and the region-of-
interest verdict at 45 ns.

Everything runs offline against a scripted mock backend that this script
writes itself, so the run is deterministic end to end.
"""

import shutil
import tempfile
from pathlib import Path

from svworkbench import hdl
from svworkbench.agents import bugvalidate as bv
from svworkbench.core import SessionStore
from svworkbench.gateway import Gateway, MockBackend, MockFixtureWriter
from svworkbench.runtime import AgentRuntime

DATA = Path(__file__).parent / "data"

BUG_DESCRIPTION = (
    "The authentication state machine transitions to the waiting state regardless "
    "of whether the authentication flag indicates a successful or failed hash "
    "match, so failed attempts are never blocked."
)

SCENARIO_REPLY = """event: 0 assert_reset | hold the FSM in reset
event: 10 release_reset | FSM will enter IDLE on the next rising edge
event: 20 set inputHash=128'hA5A5A5A5A5A5A5A5A5A5A5A5A5A5A5A5 | valid credentials
event: 21 set isHashValid=1 | present the valid hash
event: 30 set isHashValid=0 | clear between attempts
event: 40 set inputHash=128'h5A5A5A5A5A5A5A5A5A5A5A5A5A5A5A5A | wrong credentials
event: 41 set isHashValid=1 | trigger the buggy transition
event: 45 observe | the FSM enters the wait state despite the failed match
monitor: isHashValid, inputHash, correctHash, authenticationFlag, currentState
roi: 45 isHashValid=1 inputHash=128'h5A5A5A5A5A5A5A5A5A5A5A5A5A5A5A5A correctHash=128'hA5A5A5A5A5A5A5A5A5A5A5A5A5A5A5A5 authenticationFlag=0 currentState=WAIT_STATE"""


def main():
    design = (DATA / "authentication_bypass.v").read_text()
    testbench = (DATA / "authentication_bypass_tb.v").read_text()
    workdir = Path(tempfile.mkdtemp(prefix="svw_demo_"))

    # script the backend: one scenario draft, an accepting critic, one testbench
    writer = MockFixtureWriter(workdir / "fixtures")
    table = hdl.parse_ports(design)
    writer.add("scenario_generate", SCENARIO_REPLY, variables={
        "signals": bv._render_signals(table),
        "bug_description": BUG_DESCRIPTION, "feedback": ""})
    draft = bv.parse_scenario(SCENARIO_REPLY)
    writer.add("scenario_critic", "accept", variables={
        "bug_description": BUG_DESCRIPTION, "scenario": draft.render()})
    writer.add("testbench_generate", testbench, variables={
        "design": design, "scenario": draft.render(), "feedback": ""})

    traces = workdir / "traces"
    traces.mkdir()
    shutil.copy(DATA / "fsm_trace.log", traces / "authentication_bypass.log")

    gateway = Gateway()
    gateway.register_backend("mock", MockBackend(workdir / "fixtures"))
    runtime = AgentRuntime(
        gateway=gateway,
        session_store=SessionStore(workdir / "store"),
        sim_adapters={"mock": bv.MockSimulator(traces)},
        work_dir=workdir / "scratch",
    )

    print("=== 1. scenario generation (with critic review) ===")
    scenario = bv.generate_scenario(design, BUG_DESCRIPTION, runtime)
    for event in scenario.events:
        print("   ", event.render())
    print("    roi @", scenario.roi.time_ns, "ns expects", scenario.roi.expected)

    print("\n=== 2. testbench generation (syntax-checked) ===")
    tb = bv.generate_testbench(design, scenario, runtime)
    check = hdl.check_testbench_syntax(tb, table)
    print(f"    checker verdict: {'ok' if check.ok else 'diagnostics!'},",
          f"{len(tb.splitlines())} lines of Verilog")

    print("\n=== 3. simulation (mock adapter replaying a ModelSim-style log) ===")
    trace = bv.simulate(design, tb, "mock", runtime, plan_id="demo",
                        design_name="authentication_bypass")
    print(f"    {len(trace.records)} sampled records, times "
          f"{[t for t, _ in trace.records]}")

    print("\n=== 4. region-of-interest validation ===")
    verdict = bv.validate(trace, scenario.roi)
    for row in verdict.detail:
        mark = "==" if row["equal"] else "!="
        print(f"    {row['signal']:>20}: expected {row['expected']} {mark} "
              f"actual {row['actual']}")
    print(f"\n    VERDICT: {verdict.outcome.upper()} at {verdict.time_ns} ns")
    print("    (the FSM reached WAIT_STATE with authenticationFlag=0: bug confirmed)")


if __name__ == "__main__":
    main()
