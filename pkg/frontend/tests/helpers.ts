import type { AppState, DetectResponse } from "../src/types.js";
import { initialState, loadDetection } from "../src/state.js";

export interface RecordedCall {
  url: string;
  body: unknown;
}

/** Fetch stub that returns queued responses and records request bodies. */
export function fakeFetch(
  responses: Array<{ status: number; body: unknown }>,
): { fetchFn: typeof fetch; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const queue = [...responses];
  const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
    calls.push({
      url: String(url),
      body: init?.body ? JSON.parse(String(init.body)) : null,
    });
    const next = queue.shift();
    if (!next) throw new Error("no queued response");
    return {
      ok: next.status >= 200 && next.status < 300,
      status: next.status,
      json: async () => next.body,
    } as Response;
  }) as typeof fetch;
  return { fetchFn, calls };
}

export const DETECTION: DetectResponse = {
  tokens: ["he", "clearly", "stole", "it"],
  probabilities: [0.05, 0.91, 0.4, 0.02],
};

/** State with a loaded four-token detection and no overrides. */
export function detectedState(): AppState {
  return loadDetection(
    initialState("http://s"),
    "he clearly stole it",
    DETECTION,
  );
}
