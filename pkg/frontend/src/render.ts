import { effectiveP } from "./state.js";
import type { AppState, WhatIfEntry } from "./types.js";

function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Background opacity for a probability; strictly monotone in p. */
export function shade(p: number): number {
  const clamped = Math.min(1, Math.max(0, p));
  return Math.round(clamped * 1000) / 1000;
}

const OVERRIDE_MARK = { none: "", "forced-1": "+", "forced-0": "−" };

export function renderHeatmap(state: AppState): string {
  if (state.detectMismatch) {
    return `<div class="banner error" role="alert">${escapeHtml(
      state.error ?? "token and probability arrays do not match",
    )}</div>`;
  }
  if (state.tokens.length === 0) {
    return `<div class="empty">no detection yet</div>`;
  }
  const cells = state.tokens.map((t, i) => {
    const p = effectiveP(t);
    const mark = OVERRIDE_MARK[t.override];
    return (
      `<button class="token" data-index="${i}" data-override="${t.override}"` +
      ` style="background: rgba(214, 69, 69, ${shade(p)})"` +
      ` title="p=${t.probability.toFixed(3)}">` +
      `${escapeHtml(t.token)}${mark}</button>`
    );
  });
  return `<div class="heatmap">${cells.join("")}</div>`;
}

function highlightOutput(entry: WhatIfEntry): string {
  const changed = new Set<number>();
  for (const [a, b] of entry.changedSpans) {
    for (let i = a; i < b; i++) changed.add(i);
  }
  return entry.outputTokens
    .map((tok, i) =>
      changed.has(i)
        ? `<mark>${escapeHtml(tok)}</mark>`
        : escapeHtml(tok),
    )
    .join(" ");
}

export function renderHistory(state: AppState): string {
  if (state.history.length === 0) {
    return `<div class="empty">no rewrites yet</div>`;
  }
  const items = state.history.map((entry, i) => {
    const control =
      entry.control === null
        ? "detector probabilities"
        : entry.control.map((x) => x.toFixed(2)).join(", ");
    return (
      `<li class="whatif" data-entry="${i}">` +
      `<span class="control">[${escapeHtml(control)}] ${entry.merge}</span>` +
      `<span class="output">${highlightOutput(entry)}</span></li>`
    );
  });
  return `<ol class="history">${items.join("")}</ol>`;
}

export function renderControls(state: AppState): string {
  const disabled = state.pending || state.tokens.length === 0;
  const options = (["replace", "max"] as const)
    .map(
      (rule) =>
        `<option value="${rule}"${rule === state.merge ? " selected" : ""}>${rule}</option>`,
    )
    .join("");
  return (
    `<select id="merge" ${state.pending ? "disabled" : ""}>${options}</select>` +
    `<button id="submit" ${disabled ? "disabled" : ""}>rewrite</button>`
  );
}

export function renderError(state: AppState): string {
  if (state.detectMismatch || state.error === null) return "";
  return `<div class="banner error" role="alert">${escapeHtml(state.error)}</div>`;
}
