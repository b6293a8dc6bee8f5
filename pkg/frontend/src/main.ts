/**
 * DOM wiring: fetch the decision window, keep the slider grid, charts,
 * metrics, suggestion and explain panels in sync with the draft state.
 * Edits are debounced and at most one evaluation request is in flight;
 * responses for superseded drafts are dropped by the state machine.
 */

import { Client } from "./api.js";
import {
  DraftStore,
  acceptSuggestion,
  applyResult,
  beginEvaluation,
  clearPin,
  createStore,
  editCell,
  failEvaluation,
  needsEvaluation,
  pinCurrent,
  setSuggestion,
  status,
} from "./state.js";
import {
  renderExplainHeatmap,
  renderHistoryChart,
  renderLevelChart,
  renderLossReadout,
  renderMetricsPanel,
  renderSliderGrid,
  renderStatusBadge,
  renderSuggestion,
} from "./render.js";
import type { WindowPayload } from "./types.js";

const DEBOUNCE_MS = 250;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

class Console {
  private client = new Client();
  private store: DraftStore | null = null;
  private win: WindowPayload | null = null;
  private debounce: number | undefined;

  async start(): Promise<void> {
    this.win = await this.client.window();
    const k = this.win.future_cov.length;
    const s = this.win.structures.length;
    this.store = createStore(k, s);
    el("history").innerHTML = renderHistoryChart(this.win);
    el("scenario-time").textContent = this.win.time;
    this.renderAll();
    this.queueEvaluation();
    el("fetch-suggestion").addEventListener("click", () => this.fetchSuggestion());
    el("pin-result").addEventListener("click", () => {
      if (this.store) {
        pinCurrent(this.store);
        this.renderAll();
      }
    });
    el("clear-pin").addEventListener("click", () => {
      if (this.store) {
        clearPin(this.store);
        this.renderAll();
      }
    });
    el("load-explain").addEventListener("click", () => this.fetchExplain());
    el("grid").addEventListener("input", (event) => {
      const input = event.target as HTMLInputElement;
      if (input.dataset.hour === undefined) return;
      this.onEdit(Number(input.dataset.hour), Number(input.dataset.structure),
                  Number(input.value));
    });
  }

  private onEdit(hour: number, structure: number, value: number): void {
    if (!this.store) return;
    editCell(this.store, hour, structure, value);
    this.renderStatus();
    window.clearTimeout(this.debounce);
    this.debounce = window.setTimeout(() => this.queueEvaluation(), DEBOUNCE_MS);
  }

  private queueEvaluation(): void {
    const store = this.store;
    if (!store || !needsEvaluation(store)) return;
    const { token, schedule } = beginEvaluation(store);
    this.renderStatus();
    this.client
      .evaluate(schedule)
      .then((resp) => {
        if (applyResult(store, token, resp)) this.renderAll();
        if (needsEvaluation(store)) this.queueEvaluation();
      })
      .catch(() => {
        failEvaluation(store, token);
        this.renderStatus();
      });
  }

  private fetchSuggestion(): void {
    const store = this.store;
    if (!store) return;
    this.client.suggest().then((resp) => {
      setSuggestion(store, resp);
      this.renderSuggestionPanel();
      const button = document.getElementById("accept-suggestion");
      button?.addEventListener("click", () => {
        acceptSuggestion(store);
        this.renderAll();
      });
    });
  }

  private fetchExplain(): void {
    this.client.explain().then((payload) => {
      el("explain").innerHTML = payload.heatmaps
        .map((h) => renderExplainHeatmap(payload, h))
        .join("");
    });
  }

  private renderStatus(): void {
    if (this.store) el("draft-status").innerHTML = renderStatusBadge(status(this.store));
  }

  private renderSuggestionPanel(): void {
    if (this.store) el("suggestion").innerHTML = renderSuggestion(this.store.suggestion);
  }

  private renderAll(): void {
    const store = this.store;
    if (!store || !this.win) return;
    this.renderStatus();
    el("grid").innerHTML = renderSliderGrid(store.schedule, this.win.structures,
                                            store.resultSchedule);
    if (store.result) {
      el("metrics").innerHTML =
        renderMetricsPanel(store.result.metrics, "Draft consequences") +
        renderLossReadout(store.result.losses);
      el("charts").innerHTML = store.result.points
        .map((_, p) => renderLevelChart(store.result!, p, store.pinned))
        .join("");
    }
    this.renderSuggestionPanel();
  }
}

window.addEventListener("DOMContentLoaded", () => {
  new Console().start().catch((err) => {
    el("draft-status").textContent =
      `service unavailable (${err instanceof Error ? err.message : err})`;
  });
});
