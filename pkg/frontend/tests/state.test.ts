import { describe, expect, it } from "vitest";

import {
  beginSubmit,
  buildControl,
  completeSubmit,
  effectiveP,
  failSubmit,
  initialState,
  loadDetection,
  setMerge,
  toggleTarget,
} from "../src/state.js";
import type { NeutralizeResponse } from "../src/types.js";
import { DETECTION, detectedState } from "./helpers.js";

const REWRITE: NeutralizeResponse = {
  tokens: ["he", "clearly", "stole", "it"],
  probabilities: [0.05, 0.91, 0.4, 0.02],
  output_tokens: ["he", "took", "it"],
  output_text: "he took it",
  changed_spans: [[1, 2]],
};

describe("initialState", () => {
  it("starts empty with replace merge and no error", () => {
    const s = initialState("http://x");
    expect(s.serverUrl).toBe("http://x");
    expect(s.tokens).toEqual([]);
    expect(s.merge).toBe("replace");
    expect(s.history).toEqual([]);
    expect(s.pending).toBe(false);
    expect(s.error).toBeNull();
    expect(s.detectMismatch).toBe(false);
  });
});

describe("loadDetection", () => {
  it("builds one view per token with overrides cleared", () => {
    const s = detectedState();
    expect(s.tokens).toHaveLength(4);
    expect(s.tokens.map((t) => t.token)).toEqual(DETECTION.tokens);
    expect(s.tokens.map((t) => t.probability)).toEqual(
      DETECTION.probabilities,
    );
    expect(s.tokens.every((t) => t.override === "none")).toBe(true);
    expect(s.text).toBe("he clearly stole it");
    expect(s.detectMismatch).toBe(false);
  });

  it("flags mismatched array lengths instead of rendering", () => {
    const s = loadDetection(initialState("http://x"), "a b", {
      tokens: ["a", "b"],
      probabilities: [0.5],
    });
    expect(s.detectMismatch).toBe(true);
    expect(s.tokens).toEqual([]);
    expect(s.error).toMatch(/2 tokens but 1 probabilities/);
  });

  it("clears overrides and errors from the previous detection", () => {
    let s = toggleTarget(detectedState(), 1);
    s = failSubmit(s, "boom");
    s = loadDetection(s, "he clearly stole it", DETECTION);
    expect(s.tokens.every((t) => t.override === "none")).toBe(true);
    expect(s.error).toBeNull();
  });
});

describe("toggleTarget", () => {
  it("cycles none -> forced-1 -> forced-0 -> none", () => {
    let s = detectedState();
    s = toggleTarget(s, 1);
    expect(s.tokens[1].override).toBe("forced-1");
    s = toggleTarget(s, 1);
    expect(s.tokens[1].override).toBe("forced-0");
    s = toggleTarget(s, 1);
    expect(s.tokens[1].override).toBe("none");
  });

  it("leaves other tokens and the input state untouched", () => {
    const before = detectedState();
    const after = toggleTarget(before, 2);
    expect(before.tokens[2].override).toBe("none");
    expect(after.tokens[0].override).toBe("none");
    expect(after.tokens[1].override).toBe("none");
    expect(after.tokens[3].override).toBe("none");
  });

  it("rejects out-of-range indices", () => {
    expect(() => toggleTarget(detectedState(), 4)).toThrow(RangeError);
    expect(() => toggleTarget(detectedState(), -1)).toThrow(RangeError);
  });
});

describe("effectiveP and buildControl", () => {
  it("forced overrides pin the probability to 1 or 0", () => {
    expect(
      effectiveP({ token: "x", probability: 0.3, override: "forced-1" }),
    ).toBe(1.0);
    expect(
      effectiveP({ token: "x", probability: 0.3, override: "forced-0" }),
    ).toBe(0.0);
    expect(
      effectiveP({ token: "x", probability: 0.3, override: "none" }),
    ).toBe(0.3);
  });

  it("is null when no overrides are active", () => {
    expect(buildControl(detectedState())).toBeNull();
  });

  it("uses detector values except at overridden positions", () => {
    let s = toggleTarget(detectedState(), 1);
    s = toggleTarget(s, 3);
    s = toggleTarget(s, 3);
    expect(buildControl(s)).toEqual([0.05, 1.0, 0.4, 0.0]);
  });
});

describe("submit lifecycle", () => {
  it("beginSubmit sets pending and clears the error", () => {
    const s = beginSubmit(failSubmit(detectedState(), "old"));
    expect(s.pending).toBe(true);
    expect(s.error).toBeNull();
  });

  it("completeSubmit appends a history entry with copied arrays", () => {
    const control = [0.05, 1.0, 0.4, 0.02];
    const first = completeSubmit(
      beginSubmit(detectedState()),
      control,
      REWRITE,
      123,
    );
    expect(first.pending).toBe(false);
    expect(first.history).toHaveLength(1);
    const entry = first.history[0];
    expect(entry.control).toEqual(control);
    expect(entry.control).not.toBe(control);
    expect(entry.outputText).toBe("he took it");
    expect(entry.changedSpans).toEqual([[1, 2]]);
    expect(entry.timestamp).toBe(123);
  });

  it("keeps history append-only across submits", () => {
    let s = completeSubmit(beginSubmit(detectedState()), null, REWRITE, 1);
    const firstEntry = s.history[0];
    s = setMerge(s, "max");
    s = completeSubmit(beginSubmit(s), [0, 0, 0, 0], REWRITE, 2);
    expect(s.history).toHaveLength(2);
    expect(s.history[0]).toBe(firstEntry);
    expect(s.history[1].merge).toBe("max");
    expect(s.history[1].timestamp).toBe(2);
  });

  it("failSubmit surfaces the message and stops pending", () => {
    const s = failSubmit(beginSubmit(detectedState()), "invalid-control");
    expect(s.pending).toBe(false);
    expect(s.error).toBe("invalid-control");
    expect(s.history).toHaveLength(0);
  });
});
