import { detect, neutralize } from "./api.js";
import {
  beginSubmit,
  buildControl,
  completeSubmit,
  failSubmit,
  loadDetection,
} from "./state.js";
import type { AppState } from "./types.js";

type FetchFn = typeof fetch;

/** Fetch token probabilities for new input text; replaces overrides. */
export async function runDetect(
  state: AppState,
  text: string,
  fetchFn: FetchFn = fetch,
): Promise<AppState> {
  try {
    const resp = await detect(state.serverUrl, text, state.category, fetchFn);
    return loadDetection(state, text, resp);
  } catch (err) {
    return { ...state, error: err instanceof Error ? err.message : String(err) };
  }
}

/** One what-if round trip; at most one in flight (guarded by `pending`). */
export async function runSubmit(
  state: AppState,
  fetchFn: FetchFn = fetch,
  now: () => number = Date.now,
): Promise<AppState> {
  if (state.pending || state.tokens.length === 0) return state;
  const control = buildControl(state);
  const started = beginSubmit(state);
  try {
    const resp = await neutralize(
      state.serverUrl,
      {
        text: state.text,
        category: state.category,
        ...(control === null ? {} : { control }),
        merge: state.merge,
      },
      fetchFn,
    );
    return completeSubmit(started, control, resp, now());
  } catch (err) {
    return failSubmit(
      started,
      err instanceof Error ? err.message : String(err),
    );
  }
}
