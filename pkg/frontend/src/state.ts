import type {
  AppState,
  DetectResponse,
  MergeRule,
  NeutralizeResponse,
  Override,
  TokenView,
  WhatIfEntry,
} from "./types.js";

export function initialState(serverUrl: string): AppState {
  return {
    serverUrl,
    text: "",
    category: "unknown",
    tokens: [],
    merge: "replace",
    history: [],
    pending: false,
    error: null,
    detectMismatch: false,
  };
}

export function effectiveP(view: TokenView): number {
  if (view.override === "forced-1") return 1.0;
  if (view.override === "forced-0") return 0.0;
  return view.probability;
}

const CYCLE: Record<Override, Override> = {
  none: "forced-1",
  "forced-1": "forced-0",
  "forced-0": "none",
};

export function toggleTarget(state: AppState, index: number): AppState {
  if (index < 0 || index >= state.tokens.length) {
    throw new RangeError(`token index ${index} out of range`);
  }
  const tokens = state.tokens.map((t, i) =>
    i === index ? { ...t, override: CYCLE[t.override] } : t,
  );
  return { ...state, tokens };
}

/** Control vector for the next request; null means omit (no overrides). */
export function buildControl(state: AppState): number[] | null {
  if (state.tokens.every((t) => t.override === "none")) return null;
  return state.tokens.map(effectiveP);
}

/** New detection replaces the token strip and clears all overrides. */
export function loadDetection(
  state: AppState,
  text: string,
  resp: DetectResponse,
): AppState {
  if (resp.tokens.length !== resp.probabilities.length) {
    return {
      ...state,
      text,
      tokens: [],
      detectMismatch: true,
      error: `server sent ${resp.tokens.length} tokens but ${resp.probabilities.length} probabilities`,
    };
  }
  const tokens = resp.tokens.map((token, i) => ({
    token,
    probability: resp.probabilities[i],
    override: "none" as Override,
  }));
  return { ...state, text, tokens, detectMismatch: false, error: null };
}

export function setMerge(state: AppState, merge: MergeRule): AppState {
  return { ...state, merge };
}

export function beginSubmit(state: AppState): AppState {
  return { ...state, pending: true, error: null };
}

export function completeSubmit(
  state: AppState,
  control: number[] | null,
  resp: NeutralizeResponse,
  now: number,
): AppState {
  const entry: WhatIfEntry = {
    control: control === null ? null : [...control],
    merge: state.merge,
    outputText: resp.output_text,
    outputTokens: [...resp.output_tokens],
    changedSpans: resp.changed_spans.map(([a, b]) => [a, b] as [number, number]),
    timestamp: now,
  };
  return { ...state, pending: false, history: [...state.history, entry] };
}

export function failSubmit(state: AppState, message: string): AppState {
  return { ...state, pending: false, error: message };
}
