import { runDetect, runSubmit } from "./app.js";
import { initialState, setMerge, toggleTarget } from "./state.js";
import { renderControls, renderError, renderHeatmap, renderHistory } from "./render.js";
import type { AppState, MergeRule } from "./types.js";

function serverFromLocation(): string {
  const param = new URLSearchParams(window.location.search).get("server");
  return param ?? "http://127.0.0.1:8000";
}

let state: AppState = initialState(serverFromLocation());

function paint(): void {
  byId("heatmap").innerHTML = renderHeatmap(state);
  byId("history").innerHTML = renderHistory(state);
  byId("controls").innerHTML = renderControls(state);
  byId("error").innerHTML = renderError(state);
}

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

function update(next: AppState): void {
  state = next;
  paint();
}

export function wire(): void {
  byId("detect-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = byId("text") as HTMLInputElement;
    void runDetect(state, input.value).then(update);
  });
  byId("heatmap").addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest("[data-index]");
    if (!target) return;
    update(toggleTarget(state, Number(target.getAttribute("data-index"))));
  });
  byId("controls").addEventListener("change", (ev) => {
    const el = ev.target as HTMLSelectElement;
    if (el.id === "merge") update(setMerge(state, el.value as MergeRule));
  });
  byId("controls").addEventListener("click", (ev) => {
    const el = ev.target as HTMLElement;
    if (el.id === "submit") {
      update({ ...state });
      void runSubmit(state).then(update);
    }
  });
  paint();
}

if (typeof document !== "undefined" && document.getElementById("heatmap")) {
  wire();
}
