/**
 * Draft/evaluation state machine.
 *
 * The operator edits a [k x S] schedule draft; evaluation results are only
 * ever shown for the exact draft they were computed from.  Any edit marks
 * the draft dirty until a response for the *current* draft arrives; responses
 * for superseded drafts are discarded by token.  At most one evaluation is
 * in flight; a queued flag remembers edits made meanwhile.
 */

import type { EvaluateResponse } from "./types.js";

export interface DraftStore {
  k: number;
  s: number;
  schedule: number[][];
  dirty: boolean;
  inFlight: boolean;
  queued: boolean;
  token: number;
  sentSchedule: number[][] | null;
  result: EvaluateResponse | null;
  resultSchedule: number[][] | null;
  suggestion: EvaluateResponse | null;
  pinned: EvaluateResponse | null;
}

export function clamp01(v: number): number {
  if (Number.isNaN(v)) return 0;
  return Math.min(1, Math.max(0, v));
}

export function cloneSchedule(s: number[][]): number[][] {
  return s.map((row) => row.slice());
}

export function schedulesEqual(a: number[][] | null, b: number[][] | null): boolean {
  if (a === null || b === null) return a === b;
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i].length !== b[i].length) return false;
    for (let j = 0; j < a[i].length; j++) {
      if (a[i][j] !== b[i][j]) return false;
    }
  }
  return true;
}

export function createStore(k: number, s: number, initial?: number[][]): DraftStore {
  const schedule =
    initial !== undefined
      ? cloneSchedule(initial)
      : Array.from({ length: k }, () => Array(s).fill(0));
  return {
    k,
    s,
    schedule,
    dirty: true,
    inFlight: false,
    queued: false,
    token: 0,
    sentSchedule: null,
    result: null,
    resultSchedule: null,
    suggestion: null,
    pinned: null,
  };
}

/** Operator moved one slider; value clamps to [0,1] and the draft goes dirty. */
export function editCell(store: DraftStore, hour: number, structure: number, value: number): void {
  if (hour < 0 || hour >= store.k || structure < 0 || structure >= store.s) {
    throw new RangeError(`cell (${hour}, ${structure}) outside ${store.k}x${store.s} grid`);
  }
  store.schedule[hour][structure] = clamp01(value);
  store.dirty = !schedulesEqual(store.schedule, store.resultSchedule);
  if (store.inFlight) store.queued = true;
}

/** Whether a (re-)evaluation should be dispatched now. */
export function needsEvaluation(store: DraftStore): boolean {
  return store.dirty && !store.inFlight;
}

/** Snapshot the draft for sending; returns the token identifying this request. */
export function beginEvaluation(store: DraftStore): { token: number; schedule: number[][] } {
  store.token += 1;
  store.inFlight = true;
  store.queued = false;
  store.sentSchedule = cloneSchedule(store.schedule);
  return { token: store.token, schedule: store.sentSchedule };
}

/**
 * Install a response.  Discarded when a newer request was issued since.
 * The draft stays dirty if it was edited while the request was in flight.
 */
export function applyResult(store: DraftStore, token: number, resp: EvaluateResponse): boolean {
  if (token !== store.token) return false;
  store.inFlight = false;
  store.result = resp;
  store.resultSchedule = store.sentSchedule;
  store.sentSchedule = null;
  store.dirty = !schedulesEqual(store.schedule, store.resultSchedule);
  return true;
}

export function failEvaluation(store: DraftStore, token: number): void {
  if (token !== store.token) return;
  store.inFlight = false;
  store.dirty = true;
}

/** Store the manager's suggestion (with its consequences) for display. */
export function setSuggestion(store: DraftStore, resp: EvaluateResponse): void {
  store.suggestion = resp;
}

/**
 * One-click adoption: the draft becomes exactly the suggested schedule and
 * the suggestion's evaluation is immediately valid for it (no stale gap).
 */
export function acceptSuggestion(store: DraftStore): void {
  if (store.suggestion === null) throw new Error("no suggestion to accept");
  store.schedule = cloneSchedule(store.suggestion.schedule_fraction);
  store.result = store.suggestion;
  store.resultSchedule = cloneSchedule(store.suggestion.schedule_fraction);
  store.dirty = false;
  store.queued = false;
}

/** Pin the current evaluated result for side-by-side comparison. */
export function pinCurrent(store: DraftStore): void {
  if (store.result !== null && !store.dirty) {
    store.pinned = store.result;
  }
}

export function clearPin(store: DraftStore): void {
  store.pinned = null;
}

export type DraftStatus = "evaluating" | "stale" | "current" | "empty";

export function status(store: DraftStore): DraftStatus {
  if (store.inFlight) return "evaluating";
  if (store.result === null) return "empty";
  return store.dirty ? "stale" : "current";
}
