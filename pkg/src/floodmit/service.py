"""Operator-facing HTTP service over trained artifacts.

A single-tenant session holds a frozen evaluator, a manager, one scenario
frame, thresholds and loss weights.  The operator can inspect the decision
window at a cursor, evaluate what-if schedules, ask the manager for a
suggestion (returned together with its predicted consequences), and fetch an
explanation bundle.  Units are spelled out in field names (``_ft``,
``_ft_hr``); the window payload never exposes future water levels or future
controls - the console may not see more than the models do.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .explain import lime_attributions, perturbation_design
from .metrics import flood_metrics
from .models.evaluator import FloodEvaluator
from .models.losses import LossWeights, Thresholds, evaluate_levels
from .models.manager import FloodManager
from .series import SeriesFrame, read_csv

API_VERSION = 1


@dataclass
class SessionState:
    evaluator: FloodEvaluator
    manager: FloodManager | None
    frame: SeriesFrame
    thresholds: Thresholds
    weights: LossWeights
    cursor: int

    @property
    def w(self) -> int:
        return self.evaluator.w

    @property
    def k(self) -> int:
        return self.evaluator.k

    def cursor_range(self) -> tuple[int, int]:
        return self.w - 1, self.frame.T - self.k - 1

    def blocks_at(self, cursor: int) -> tuple[np.ndarray, np.ndarray]:
        past = self.frame.values[cursor - self.w + 1:cursor + 1]
        fut = self.frame.values[cursor + 1:cursor + 1 + self.k]
        return past, fut[:, self.frame.cov_indices]


def load_session(evaluator_path, frame_path, manager_path=None,
                 thresholds: Thresholds | None = None,
                 weights: LossWeights | None = None,
                 cursor: int | None = None) -> SessionState:
    evaluator = FloodEvaluator.load(evaluator_path)
    if not evaluator.is_frozen():
        evaluator.freeze()
    manager = FloodManager.load(manager_path) if manager_path else None
    frame = read_csv(frame_path)
    thresholds = thresholds or (manager.thresholds_ if manager
                                else Thresholds.uniform(evaluator.layout_.n_water))
    weights = weights or (manager.weights_ if manager else LossWeights())
    state = SessionState(evaluator=evaluator, manager=manager, frame=frame,
                         thresholds=thresholds, weights=weights, cursor=0)
    lo, hi = state.cursor_range()
    state.cursor = lo if cursor is None else cursor
    if not lo <= state.cursor <= hi:
        raise ValueError(f"cursor {state.cursor} outside [{lo}, {hi}]")
    return state


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def _require_session(app: FastAPI) -> SessionState | None:
    return getattr(app.state, "session", None)


def _resolve_cursor(state: SessionState, cursor) -> tuple[int | None, JSONResponse | None]:
    c = state.cursor if cursor is None else int(cursor)
    lo, hi = state.cursor_range()
    if not lo <= c <= hi:
        return None, _error(416, f"cursor {c} outside valid range [{lo}, {hi}]")
    return c, None


def _validate_schedule(payload: Any, k: int, s: int):
    if not isinstance(payload, list) or len(payload) != k:
        return None, f"schedule must be a {k}x{s} array"
    rows = []
    for i, row in enumerate(payload):
        if not isinstance(row, list) or len(row) != s:
            return None, f"schedule[{i}] must have {s} entries"
        for j, v in enumerate(row):
            if not isinstance(v, (int, float)) or not np.isfinite(v):
                return None, f"schedule[{i}][{j}] is not a finite number"
            if not 0.0 <= float(v) <= 1.0:
                return None, f"schedule[{i}][{j}]={v} outside [0,1]"
        rows.append([float(v) for v in row])
    return np.asarray(rows, dtype=np.float64), None


def _evaluation_payload(state: SessionState, cursor: int,
                        schedule: np.ndarray) -> dict:
    past, cov = state.blocks_at(cursor)
    levels = state.evaluator.predict_blocks(past[None], cov[None], schedule[None])[0]
    m = flood_metrics(levels, state.thresholds)
    l1, l2, comb = evaluate_levels(levels, state.thresholds, state.weights)
    ev = state.evaluator
    return {
        "cursor": cursor,
        "time": state.frame.time_at(cursor).isoformat(),
        "schedule_fraction": schedule.tolist(),
        "structures": [ev.specs_[i].name for i in ev.layout_.ctrl],
        "points": [ev.specs_[i].name for i in ev.layout_.water],
        "levels_ft": levels.tolist(),
        "flood_threshold_ft": state.thresholds.flood_ft.tolist(),
        "waste_threshold_ft": state.thresholds.waste_ft.tolist(),
        "metrics": {
            "over_time": m.over_time, "over_area_ft_hr": m.over_area,
            "under_time": m.under_time, "under_area_ft_hr": m.under_area,
        },
        "losses": {"flood": l1, "waste": l2, "combined": comb},
    }


def create_app(session: SessionState | None = None,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="floodmit control service", version=str(API_VERSION))
    if session is not None:
        app.state.session = session

    @app.post("/session")
    async def post_session(request: Request):
        body = await request.json()
        if "evaluator" not in body or "frame" not in body:
            return _error(400, "session body needs 'evaluator' and 'frame' paths")
        try:
            thresholds = (Thresholds.from_dict(body["thresholds"])
                          if "thresholds" in body else None)
            weights = (LossWeights.from_dict(body["weights"])
                       if "weights" in body else None)
            state = load_session(body["evaluator"], body["frame"],
                                 body.get("manager"), thresholds, weights,
                                 body.get("cursor"))
        except FileNotFoundError as exc:
            return _error(400, f"artifact not found: {exc}")
        except (ValueError, KeyError) as exc:
            return _error(400, str(exc))
        app.state.session = state
        lo, hi = state.cursor_range()
        return {"loaded": True, "frame_hours": state.frame.T,
                "cursor": state.cursor, "cursor_min": lo, "cursor_max": hi,
                "w": state.w, "k": state.k,
                "has_manager": state.manager is not None}

    @app.get("/window")
    def get_window(cursor: int | None = Query(default=None)):
        state = _require_session(app)
        if state is None:
            return _error(409, "no session loaded")
        c, err = _resolve_cursor(state, cursor)
        if err:
            return err
        past, cov = state.blocks_at(c)
        ev = state.evaluator
        return {
            "cursor": c,
            "time": state.frame.time_at(c).isoformat(),
            "variables": [s.header() for s in state.frame.specs],
            "past": past.tolist(),
            "covariates": [state.frame.specs[i].name for i in state.frame.cov_indices],
            "future_cov": cov.tolist(),
            "points": [ev.specs_[i].name for i in ev.layout_.water],
            "structures": [ev.specs_[i].name for i in ev.layout_.ctrl],
            "flood_threshold_ft": state.thresholds.flood_ft.tolist(),
            "waste_threshold_ft": state.thresholds.waste_ft.tolist(),
        }

    @app.post("/evaluate")
    async def post_evaluate(request: Request):
        state = _require_session(app)
        if state is None:
            return _error(409, "no session loaded")
        body = await request.json()
        c, err = _resolve_cursor(state, body.get("cursor"))
        if err:
            return err
        schedule, problem = _validate_schedule(
            body.get("schedule_fraction"), state.k, state.evaluator.layout_.n_ctrl)
        if problem:
            return _error(400, problem)
        return _evaluation_payload(state, c, schedule)

    @app.post("/suggest")
    async def post_suggest(request: Request):
        state = _require_session(app)
        if state is None:
            return _error(409, "no session loaded")
        if state.manager is None:
            return _error(409, "no manager loaded in this session")
        body = {}
        if await request.body():
            body = await request.json()
        c, err = _resolve_cursor(state, body.get("cursor"))
        if err:
            return err
        past, cov = state.blocks_at(c)
        schedule = state.manager.suggest_schedule(past, cov)
        payload = _evaluation_payload(state, c, schedule)
        payload["suggested"] = True
        return payload

    @app.get("/explain")
    def get_explain(cursor: int | None = Query(default=None),
                    n_perturb: int = Query(default=1500, ge=100, le=20000),
                    seed: int = Query(default=0)):
        state = _require_session(app)
        if state is None:
            return _error(409, "no session loaded")
        c, err = _resolve_cursor(state, cursor)
        if err:
            return err
        past, cov = state.blocks_at(c)
        ev = state.evaluator
        fut = state.frame.values[c + 1:c + 1 + state.k]
        from .series import WindowSample
        sample = WindowSample(past=past, future_cov=cov,
                              future_controls=fut[:, state.frame.control_indices],
                              future_water=fut[:, state.frame.water_indices],
                              t_index=c)
        design = perturbation_design(ev, sample, n_perturb=n_perturb, seed=seed)
        heatmaps = [lime_attributions(ev, sample, output_point=p, design=design)
                    for p in range(ev.layout_.n_water)]
        out = {
            "cursor": c,
            "points": [ev.specs_[i].name for i in ev.layout_.water],
            "variables": [s.name for s in ev.specs_],
            "heatmaps": [h.to_dict() for h in heatmaps],
            "r_squared": [h.r_squared for h in heatmaps],
        }
        try:
            scores, labels = ev.attention_matrix([sample])
            out["attention"] = {"scores": scores.tolist(), "labels": labels}
        except Exception:
            out["attention"] = None
        return out

    @app.get("/health")
    def health():
        return {"ok": True, "session": _require_session(app) is not None}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")
    return app
