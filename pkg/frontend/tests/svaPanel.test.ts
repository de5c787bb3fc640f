import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { downloadArtifact, highlightSva, renderSvaPanel, splitSvaBlocks } from "../src/svaPanel.js";
import type { ArtifactRef } from "../src/types.js";

const SVA_FILE = `// CWE-284: Improper Access Control
// property: debug mode must not expose live DMA configuration
assert property (@(posedge clk)
    disable iff (!rst_n)
    (dbg_sel && dbg_en) |->
    (csr_q.enable_dma == 1'b0 &&
    csr_q.dma_prio == 3'h0));

// CWE-1244: Unlocking Debug Features Without Authorization
assert property (@(posedge clk)
    disable iff (!rst_n)
    (dbg_sel && dbg_en) |->
    (dbg_rdata == 32'hDEADBEEF
    || dbg_rdata == 32'hCAFEBABE));

assert property (@(posedge clk) (dbg_sel && dbg_en) |-> (dbg_rdata == 32'hDEADBEEF));

assert property (@(posedge clk) (dbg_sel && dbg_en) |-> (dbg_rdata == 32'hCAFEBABE));
`;

const REF: ArtifactRef = {
  artifact_id: "f".repeat(32),
  kind: "sva_file",
  filename: "properties_uart_dma_top.sva",
  byte_length: SVA_FILE.length,
};

describe("splitSvaBlocks", () => {
  it("finds one card per assert statement", () => {
    const blocks = splitSvaBlocks(SVA_FILE);
    expect(blocks).toHaveLength(4);
    expect(blocks[0].comments[0]).toContain("CWE-284");
    expect(blocks[1].comments[0]).toContain("CWE-1244");
    expect(blocks[2].comments).toEqual([]);
    for (const block of blocks) {
      expect(block.assertion).toContain("assert property");
    }
  });
});

describe("renderSvaPanel", () => {
  it("renders four assertion cards for the fixture file", () => {
    const html = renderSvaPanel(REF, SVA_FILE);
    expect(html.match(/class="sva-card"/g)).toHaveLength(4);
    expect(html).toContain("data-action=\"download-sva\"");
    expect(html).toContain(REF.filename);
  });

  it("shows an empty-state message for an empty file", () => {
    const html = renderSvaPanel(REF, "");
    expect(html).toContain("empty");
    expect(html).not.toContain("sva-card");
  });

  it("highlights keywords and sized literals", () => {
    const html = highlightSva("assert property (@(posedge clk) (a == 32'hDEADBEEF));");
    expect(html).toContain('<span class="kw">assert</span>');
    expect(html).toContain('<span class="kw">posedge</span>');
    expect(html).toContain('class="lit"');
  });
});

describe("downloadArtifact", () => {
  it("downloaded bytes are identical to the server artifact", async () => {
    const serverBytes = new TextEncoder().encode(SVA_FILE);
    const fakeFetch = (async (url: RequestInfo | URL) => {
      expect(String(url)).toContain(`/api/artifacts/${REF.artifact_id}`);
      return new Response(serverBytes.buffer.slice(0), { status: 200 });
    }) as typeof fetch;
    type UrlApi = { createObjectURL(blob: Blob): string; revokeObjectURL(u: string): void };
    const urlApi = URL as unknown as UrlApi;
    if (!("createObjectURL" in URL)) {
      urlApi.createObjectURL = () => "blob:test";
      urlApi.revokeObjectURL = () => undefined;
    }
    const api = new ApiClient("", fakeFetch);
    const { bytes } = await downloadArtifact(api, REF);
    expect(bytes).toEqual(serverBytes);
    expect(new TextDecoder().decode(bytes)).toBe(SVA_FILE);
  });
});
