export type Override = "none" | "forced-1" | "forced-0";

export type MergeRule = "replace" | "max";

export interface TokenView {
  token: string;
  probability: number;
  override: Override;
}

export interface WhatIfEntry {
  control: number[] | null;
  merge: MergeRule;
  outputText: string;
  outputTokens: string[];
  changedSpans: Array<[number, number]>;
  timestamp: number;
}

export interface DetectResponse {
  tokens: string[];
  probabilities: number[];
}

export interface NeutralizeResponse {
  tokens: string[];
  probabilities: number[];
  output_tokens: string[];
  output_text: string;
  changed_spans: Array<[number, number]>;
}

export interface AppState {
  serverUrl: string;
  text: string;
  category: string;
  tokens: TokenView[];
  merge: MergeRule;
  history: ReadonlyArray<WhatIfEntry>;
  pending: boolean;
  error: string | null;
  /* set when the last detect response had mismatched array lengths */
  detectMismatch: boolean;
}
