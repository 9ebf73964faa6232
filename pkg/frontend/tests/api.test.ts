import { describe, expect, it } from "vitest";

import { ApiError, detect, health, neutralize } from "../src/api.js";
import { fakeFetch } from "./helpers.js";

describe("detect", () => {
  it("posts text and category to /api/detect", async () => {
    const { fetchFn, calls } = fakeFetch([
      { status: 200, body: { tokens: ["a"], probabilities: [0.5] } },
    ]);
    const resp = await detect("http://s", "a", "history", fetchFn);
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://s/api/detect");
    expect(calls[0].body).toEqual({ text: "a", category: "history" });
    expect(resp.probabilities).toEqual([0.5]);
  });

  it("surfaces the server error code", async () => {
    const { fetchFn } = fakeFetch([
      { status: 400, body: { code: "invalid-text", message: "empty" } },
    ]);
    const err = await detect("http://s", "", "unknown", fetchFn).catch(
      (e) => e,
    );
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("invalid-text");
    expect(err.message).toBe("empty");
  });

  it("maps bodyless failures to an http code", async () => {
    const { fetchFn } = fakeFetch([{ status: 502, body: null }]);
    const err = await detect("http://s", "a", "unknown", fetchFn).catch(
      (e) => e,
    );
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("http-502");
  });

  it("maps thrown fetch errors to the network code", async () => {
    const failing = (async () => {
      throw new TypeError("connection refused");
    }) as unknown as typeof fetch;
    const err = await detect("http://s", "a", "unknown", failing).catch(
      (e) => e,
    );
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("network");
  });
});

describe("neutralize", () => {
  it("omits the control key when none is given", async () => {
    const { fetchFn, calls } = fakeFetch([{ status: 200, body: {} }]);
    await neutralize(
      "http://s",
      { text: "a b", category: "unknown", merge: "replace" },
      fetchFn,
    );
    expect(calls[0].url).toBe("http://s/api/neutralize");
    expect(calls[0].body).toEqual({
      text: "a b",
      category: "unknown",
      merge: "replace",
    });
  });

  it("sends the control vector and merge rule when present", async () => {
    const { fetchFn, calls } = fakeFetch([{ status: 200, body: {} }]);
    await neutralize(
      "http://s",
      { text: "a b", category: "unknown", control: [1, 0], merge: "max" },
      fetchFn,
    );
    expect(calls[0].body).toEqual({
      text: "a b",
      category: "unknown",
      control: [1, 0],
      merge: "max",
    });
  });
});

describe("health", () => {
  it("returns the parsed body on success", async () => {
    const { fetchFn, calls } = fakeFetch([
      { status: 200, body: { status: "ok", model: "abc" } },
    ]);
    const got = await health("http://s", fetchFn);
    expect(calls[0].url).toBe("http://s/api/health");
    expect(got.model).toBe("abc");
  });

  it("throws ApiError on failure", async () => {
    const { fetchFn } = fakeFetch([{ status: 500, body: null }]);
    const err = await health("http://s", fetchFn).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("http-500");
  });
});
