/**
 * Pure render-to-string views.  Every number displayed comes verbatim from a
 * service payload: these functions format and place values, they never
 * compute levels, metrics, losses, or attributions.  Coordinate mapping for
 * SVG layout is the only arithmetic here.
 */

import type {
  AttributionHeatmapPayload,
  EvaluateResponse,
  ExplainPayload,
  ViolationMetrics,
  WindowPayload,
} from "./types.js";
import type { DraftStatus } from "./state.js";

const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(3);
}

export function renderStatusBadge(status: DraftStatus): string {
  const text = {
    evaluating: "evaluating…",
    stale: "stale — results shown are for the previous draft",
    current: "up to date",
    empty: "not evaluated yet",
  }[status];
  return `<span class="badge badge-${status}">${text}</span>`;
}

export function renderMetricsPanel(m: ViolationMetrics, title = "Violations"): string {
  return [
    `<div class="metrics"><h3>${esc(title)}</h3><dl>`,
    `<dt>OverTime (h)</dt><dd data-field="over_time">${fmt(m.over_time)}</dd>`,
    `<dt>OverArea (ft&middot;h)</dt><dd data-field="over_area_ft_hr">${fmt(m.over_area_ft_hr)}</dd>`,
    `<dt>UnderTime (h)</dt><dd data-field="under_time">${fmt(m.under_time)}</dd>`,
    `<dt>UnderArea (ft&middot;h)</dt><dd data-field="under_area_ft_hr">${fmt(m.under_area_ft_hr)}</dd>`,
    `</dl></div>`,
  ].join("");
}

export function renderLossReadout(losses: EvaluateResponse["losses"]): string {
  return (
    `<div class="losses">flood <b data-field="loss_flood">${fmt(losses.flood)}</b> ` +
    `&middot; waste <b data-field="loss_waste">${fmt(losses.waste)}</b> ` +
    `&middot; combined <b data-field="loss_combined">${fmt(losses.combined)}</b></div>`
  );
}

interface Scale {
  x: (i: number) => number;
  y: (v: number) => number;
}

function makeScale(
  n: number,
  values: number[],
  width: number,
  height: number,
  pad = 18,
): Scale {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  return {
    x: (i) => pad + (i * (width - 2 * pad)) / Math.max(n - 1, 1),
    y: (v) => height - pad - ((v - lo) * (height - 2 * pad)) / span,
  };
}

function polyline(values: number[], scale: Scale, cls: string): string {
  const pts = values.map((v, i) => `${scale.x(i).toFixed(1)},${scale.y(v).toFixed(1)}`);
  return `<polyline class="${cls}" fill="none" points="${pts.join(" ")}" />`;
}

/**
 * Predicted levels for one control point with its threshold band; an
 * optional pinned trajectory is drawn against the same thresholds.
 */
export function renderLevelChart(
  resp: EvaluateResponse,
  point: number,
  pinned: EvaluateResponse | null = null,
  width = 360,
  height = 150,
): string {
  const series = resp.levels_ft.map((row) => row[point]);
  const pinnedSeries = pinned ? pinned.levels_ft.map((row) => row[point]) : [];
  const flood = resp.flood_threshold_ft[point];
  const waste = resp.waste_threshold_ft[point];
  const all = [...series, ...pinnedSeries, flood, waste];
  const scale = makeScale(series.length, all, width, height);
  const parts = [
    `<svg class="level-chart" data-point="${point}" viewBox="0 0 ${width} ${height}">`,
    `<line class="threshold flood" x1="0" x2="${width}" y1="${scale.y(flood).toFixed(1)}" y2="${scale.y(flood).toFixed(1)}" data-threshold-ft="${flood}" />`,
    `<line class="threshold waste" x1="0" x2="${width}" y1="${scale.y(waste).toFixed(1)}" y2="${scale.y(waste).toFixed(1)}" data-threshold-ft="${waste}" />`,
    polyline(series, scale, "levels current"),
  ];
  if (pinnedSeries.length) {
    parts.push(polyline(pinnedSeries, scale, "levels pinned"));
  }
  parts.push(
    `<text x="4" y="12" class="chart-title">${esc(resp.points[point])}</text>`,
    `</svg>`,
  );
  return parts.join("");
}

/** Past levels plus tide and rain, drawn from the window payload. */
export function renderHistoryChart(win: WindowPayload, width = 720, height = 170): string {
  const header = win.variables.map((h) => h.split(":")[0]);
  const roleOf = (i: number) => win.variables[i].split(":")[1];
  const parts = [`<svg class="history-chart" viewBox="0 0 ${width} ${height}">`];
  const levelCols = header.map((_, i) => i).filter((i) => roleOf(i) === "water_level");
  const tideCol = header.map((_, i) => i).find((i) => roleOf(i) === "tide");
  const rainCol = header.map((_, i) => i).find((i) => roleOf(i) === "rain");
  const flat: number[] = [];
  for (const i of levelCols) flat.push(...win.past.map((r) => r[i]));
  if (tideCol !== undefined) flat.push(...win.past.map((r) => r[tideCol]));
  flat.push(...win.flood_threshold_ft, ...win.waste_threshold_ft);
  const scale = makeScale(win.past.length, flat, width, height);
  levelCols.forEach((col, j) => {
    parts.push(polyline(win.past.map((r) => r[col]), scale, `levels p${j}`));
  });
  if (tideCol !== undefined) {
    parts.push(polyline(win.past.map((r) => r[tideCol]), scale, "tide"));
  }
  if (rainCol !== undefined) {
    const rain = win.past.map((r) => r[rainCol]);
    const rscale = makeScale(rain.length, [...rain, 0, 1], width, height);
    parts.push(polyline(rain, rscale, "rain"));
  }
  parts.push(`</svg>`);
  return parts.join("");
}

/** Hour-by-structure grid of sliders reflecting the draft. */
export function renderSliderGrid(
  schedule: number[][],
  structures: string[],
  dirtySince: number[][] | null,
): string {
  const rows = [
    `<table class="schedule-grid"><thead><tr><th>hour</th>` +
      structures.map((s) => `<th>${esc(s)}</th>`).join("") +
      `</tr></thead><tbody>`,
  ];
  schedule.forEach((row, hour) => {
    const cells = row
      .map((v, j) => {
        const changed =
          dirtySince !== null && dirtySince[hour] !== undefined && dirtySince[hour][j] !== v;
        return (
          `<td class="${changed ? "cell-dirty" : ""}">` +
          `<input type="range" min="0" max="1" step="0.05" value="${v}" ` +
          `data-hour="${hour}" data-structure="${j}" />` +
          `<span class="cell-value">${v.toFixed(2)}</span></td>`
        );
      })
      .join("");
    rows.push(`<tr><th>t+${hour + 1}</th>${cells}</tr>`);
  });
  rows.push(`</tbody></table>`);
  return rows.join("");
}

function heatColor(v: number, vmax: number): string {
  if (vmax <= 0) return "rgb(255,255,255)";
  const x = Math.max(-1, Math.min(1, v / vmax));
  const r = x > 0 ? 255 : Math.round(255 * (1 + x));
  const b = x < 0 ? 255 : Math.round(255 * (1 - x));
  const g = Math.round(255 * (1 - Math.abs(x)));
  return `rgb(${r},${g},${b})`;
}

/** Attribution heatmap for one output point, rendered from server values. */
export function renderExplainHeatmap(
  payload: ExplainPayload,
  heatmap: AttributionHeatmapPayload,
): string {
  const w = heatmap.past.length;
  const k = heatmap.future_cov.length;
  const v = heatmap.past[0].length;
  const values: number[] = [];
  for (const row of heatmap.past) values.push(...row.map(Math.abs));
  for (const row of heatmap.future_cov) values.push(...row.map(Math.abs));
  for (const row of heatmap.future_controls) values.push(...row.map(Math.abs));
  const vmax = Math.max(...values);
  const cw = 6;
  const ch = 10;
  const label = payload.points[heatmap.output_point];
  const fidelity = heatmap.faithful
    ? `R&sup2;=${heatmap.r_squared.toFixed(2)}`
    : `low fidelity (R&sup2;=${heatmap.r_squared.toFixed(2)})`;
  const parts = [
    `<div class="explain-block" data-faithful="${heatmap.faithful}">`,
    `<h4>contributions to ${esc(label)} <small data-field="r_squared">${fidelity}</small></h4>`,
    `<svg viewBox="0 0 ${(w + k) * cw + 90} ${v * ch + 4}" class="heatmap">`,
  ];
  for (let col = 0; col < v; col++) {
    parts.push(
      `<text x="0" y="${col * ch + 9}" class="heat-label">${esc(payload.variables[col])}</text>`,
    );
    for (let t = 0; t < w; t++) {
      parts.push(
        `<rect x="${90 + t * cw}" y="${col * ch}" width="${cw}" height="${ch}" ` +
          `fill="${heatColor(heatmap.past[t][col], vmax)}" />`,
      );
    }
  }
  parts.push(
    `<line x1="${90 + w * cw}" x2="${90 + w * cw}" y1="0" y2="${v * ch}" class="now-line" />`,
  );
  parts.push(`</svg></div>`);
  return parts.join("");
}

/** Suggestion panel: the schedule plus its server-computed consequences. */
export function renderSuggestion(resp: EvaluateResponse | null): string {
  if (resp === null) {
    return `<div class="suggestion empty">no suggestion fetched</div>`;
  }
  return [
    `<div class="suggestion">`,
    renderMetricsPanel(resp.metrics, "Suggested schedule"),
    renderLossReadout(resp.losses),
    `<button id="accept-suggestion">copy into draft</button>`,
    `</div>`,
  ].join("");
}
