import { describe, expect, it } from "vitest";

import { buildPrompt } from "../src/prompt.js";

describe("buildPrompt", () => {
  it("wraps the query in the instruction template", () => {
    const out = buildPrompt("people walking");
    expect(out.startsWith("You are a Visual Language Model specifically designed")).toBe(true);
    expect(out).toContain("detect all targets that match: people walking");
    expect(out).toContain("<think></think>");
    expect(out).toContain("<answer></answer>");
    expect(out).toContain("[x1,y1,x2,y2]");
  });

  it("is byte-stable", () => {
    expect(buildPrompt("cars")).toBe(buildPrompt("cars"));
  });

  it("rejects empty queries", () => {
    expect(() => buildPrompt("")).toThrow();
  });
});
