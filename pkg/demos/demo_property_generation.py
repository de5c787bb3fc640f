#!/usr/bin/env python3
"""Generate security properties for a UART+DMA+debug subsystem.

Shows the two CWE routes (design classification vs user threat vectors),
their intersection, per-CWE generation, and the self-reflection pass that
rejects an assertion referencing an undeclared signal.
"""

import tempfile
from pathlib import Path

from svworkbench import hdl
from svworkbench.agents import properties as pr
from svworkbench.core import SessionStore
from svworkbench.gateway import Gateway, MockBackend, MockFixtureWriter
from svworkbench.runtime import AgentRuntime

DATA = Path(__file__).parent / "data"

SVAS = {
    284: "assert property (@(posedge clk) disable iff (!rst_n) (dbg_sel && dbg_en) |-> "
         "(csr_q.enable_dma == 1'b0 && csr_q.dma_prio == 3'h0));",
    1244: "assert property (@(posedge clk) disable iff (!rst_n) (dbg_sel && dbg_en) |-> "
          "(dbg_rdata == 32'hDEADBEEF || dbg_rdata == 32'hCAFEBABE));",
    1262: "assert property (@(posedge clk) (dbg_sel && dbg_en) |-> "
          "(dbg_rdata == 32'hDEADBEEF));",
}


def main():
    design = (DATA / "uart_dma_top.v").read_text()
    workdir = Path(tempfile.mkdtemp(prefix="svw_demo_"))

    print("=== 1. structural classification (rule-based evidence) ===")
    classification = pr.classify_design(design)
    for category in classification.categories:
        hits = ", ".join(classification.evidence[category][:4])
        print(f"    {category:<18} evidence: {hits}")

    print("\n=== 2. two CWE routes and their intersection ===")
    design_cwes = pr.map_design_to_cwe(classification)
    threat_cwes = pr.map_threats_to_cwe(["Improper Access Control"])
    merged = pr.intersect_cwe(design_cwes, threat_cwes)
    print("    design route :", [c.id for c in design_cwes])
    print("    threat route :", [c.id for c in threat_cwes])
    print("    intersection :", [c.id for c in merged])

    # script one property per intersected CWE
    writer = MockFixtureWriter(workdir / "fixtures")
    table = hdl.parse_ports(design)
    clock, reset = pr._find_clock_reset(table)
    for cwe in merged:
        writer.add("prop_generate",
                   f"scenario: debug-session abuse targeting CWE-{cwe.id}\n"
                   f"nl_property: protection objective for CWE-{cwe.id}\n"
                   f"sva: {SVAS.get(cwe.id, SVAS[1262])}",
                   variables={"cwe_id": f"CWE-{cwe.id}", "cwe_title": cwe.title,
                              "signals": ", ".join(sorted(table.names())),
                              "clock": clock, "reset": reset, "feedback": ""})
    bad_sva = SVAS[1244].replace("dbg_rdata", "dbg_rd")
    writer.add("prop_fix", f"scenario: s\nnl_property: p\nsva: {bad_sva}")

    gateway = Gateway()
    gateway.register_backend("mock", MockBackend(workdir / "fixtures"))
    runtime = AgentRuntime(gateway=gateway, session_store=SessionStore(workdir / "store"))

    print("\n=== 3. per-CWE generation ===")
    candidates = pr.generate_properties(design, merged, runtime)
    for cand in candidates:
        print(f"    CWE-{cand.cwe.id}: {cand.sva[:68]}...")

    print("\n=== 4. self-reflection (seeding one broken candidate) ===")
    seeded = pr.GeneratedProperty(scenario="s", nl_property="p", sva=bad_sva,
                                  cwe=pr.cwe(1244))
    validated = pr.self_reflect(candidates + [seeded], design, runtime)
    print(f"    validated: {len(validated)} / {len(candidates) + 1}")
    print(f"    rejected : CWE-{seeded.cwe.id} -> {seeded.reason}")

    out = Path(workdir / "properties_uart_dma_top.sva")
    out.write_text(pr.render_sva_file(validated))
    print(f"\n    wrote {out}")
    print("    every emitted assertion re-passes the checker:",
          all(r.ok for r in hdl.check_sva_file(out.read_text(), table)))


if __name__ == "__main__":
    main()
