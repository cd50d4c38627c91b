"""HTTP session service: a live human decision maker drives the loop.

Each session owns one optimization run configured at creation time. The
state machine is idle -> experimenting -> awaiting_preference -> idle ...
-> finished, with exactly one pending question at a time. Every transition
is persisted as JSON so sessions survive service restarts. With a human in
the loop the true utility is unknown, so progress is reported as the
utility model's ranking of observed outputs rather than regret.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from bope.acquisition import optimize_qneiuu, select_pair
from bope.config import RunConfig
from bope.dm import DmConfig
from bope.errors import BopeError, ConfigError
from bope.gp import ObservationSet, fit
from bope.loop import (
    _DOM_ACQ,
    _DOM_ENSEMBLE,
    _DOM_GP,
    _DOM_INIT_DESIGN,
    _DOM_INIT_PAIRS,
    component_seed,
    distinct_pairs,
    sobol_designs,
)
from bope.problems import output_range
from bope.utility_ensemble import ComparisonSet, train_ensemble

SESSION_SCHEMA_VERSION = 1

PHASE_IDLE = "idle"
PHASE_EXPERIMENTING = "experimenting"
PHASE_AWAITING = "awaiting_preference"
PHASE_FINISHED = "finished"

_CHOICE_LABELS = {"1": 1, "2": -1, "tie": 0, 1: 1, 2: -1}


def _now() -> float:
    return time.time()


class SessionStore:
    """In-memory sessions mirrored to one JSON file per session."""

    def __init__(self, persist_dir: Path):
        self.persist_dir = Path(persist_dir)
        self.persist_dir.mkdir(parents=True, exist_ok=True)
        self._states: dict[str, dict] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        for path in self.persist_dir.glob("*.json"):
            state = json.loads(path.read_text())
            if state.get("schema_version") == SESSION_SCHEMA_VERSION:
                self._states[state["id"]] = state
                self._locks[state["id"]] = threading.Lock()

    def ids(self) -> list[str]:
        return sorted(self._states)

    def add(self, state: dict) -> None:
        with self._registry_lock:
            self._states[state["id"]] = state
            self._locks[state["id"]] = threading.Lock()
        self.save(state)

    def lock(self, session_id: str) -> threading.Lock:
        if session_id not in self._locks:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return self._locks[session_id]

    def get(self, session_id: str) -> dict:
        state = self._states.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return state

    def save(self, state: dict) -> None:
        state["updated_at"] = _now()
        path = self.persist_dir / f"{state['id']}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(state))
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Session mechanics
# ---------------------------------------------------------------------------


def _build_session(cfg: RunConfig) -> dict:
    cfg = replace(cfg, dm=DmConfig(model="human"), algorithm="bope")
    problem = cfg.build_problem()
    n0, m0 = cfg.resolved_init_sizes(problem.dim)

    X = sobol_designs(problem, n0, component_seed(cfg.seed, _DOM_INIT_DESIGN))
    Y = problem.evaluate_batch(X)
    pool = distinct_pairs(Y)
    if m0 > len(pool):
        raise ConfigError(
            f"init_comparisons={m0} exceeds the {len(pool)} distinct pairs "
            f"available from {n0} observations"
        )
    rng_pairs = np.random.default_rng(component_seed(cfg.seed, _DOM_INIT_PAIRS))
    chosen = rng_pairs.choice(len(pool), size=m0, replace=False)
    low, high = output_range(problem)

    return {
        "schema_version": SESSION_SCHEMA_VERSION,
        "id": uuid.uuid4().hex[:12],
        "config": cfg.to_dict(),
        "phase": PHASE_IDLE,
        "t": 0,
        "question_counter": 0,
        "observations": {"X": X.tolist(), "Y": Y.tolist()},
        "comparisons": {"Y1": [], "Y2": [], "labels": []},
        "init_queue": [[int(i), int(j)] for i, j in (pool[idx] for idx in chosen)],
        "current_question": None,
        "questions": [],
        "experiments": [],
        "model_ranking": None,
        "problem_meta": {
            "name": problem.name,
            "objective_names": list(problem.objective_names),
            "axis_low": np.asarray(low, float).tolist(),
            "axis_high": np.asarray(high, float).tolist(),
        },
        "created_at": _now(),
        "updated_at": _now(),
    }


def _pair_view(state: dict) -> dict | None:
    question = state["current_question"]
    if question is None:
        return None
    meta = state["problem_meta"]
    return {
        "question_id": question["question_id"],
        "iteration": question["iteration"],
        "y1": question["y1"],
        "y2": question["y2"],
        "objective_names": meta["objective_names"],
        "axis_low": meta["axis_low"],
        "axis_high": meta["axis_high"],
    }


def _summary(state: dict) -> dict:
    cfg = state["config"]
    ranking = state["model_ranking"]
    Y = state["observations"]["Y"]
    best = (
        [{"index": i, "y": Y[i]} for i in ranking[:5]] if ranking is not None else []
    )
    return {
        "id": state["id"],
        "phase": state["phase"],
        "iteration": state["t"],
        "budget": cfg["iterations"],
        "init_questions_remaining": len(state["init_queue"]),
        "n_observations": len(Y),
        "n_comparisons": len(state["comparisons"]["labels"]),
        "current_pair": _pair_view(state),
        "best_outputs": best,
        "problem": state["problem_meta"],
        "created_at": state["created_at"],
        "updated_at": state["updated_at"],
    }


def _ask(state: dict, i: int, j: int) -> None:
    Y = state["observations"]["Y"]
    state["question_counter"] += 1
    question = {
        "question_id": state["question_counter"],
        "iteration": state["t"],
        "i": i,
        "j": j,
        "y1": Y[i],
        "y2": Y[j],
        "label": None,
        "asked_at": _now(),
        "answered_at": None,
    }
    state["current_question"] = question
    state["questions"].append(question)
    state["phase"] = PHASE_AWAITING


def _run_experiment_step(state: dict) -> None:
    """One experimentation stage plus selection of the next question."""
    cfg = RunConfig.from_dict(state["config"])
    problem = cfg.build_problem()
    observations = ObservationSet.from_arrays(
        np.asarray(state["observations"]["X"]), np.asarray(state["observations"]["Y"])
    )
    comparisons = ComparisonSet.from_arrays(
        np.asarray(state["comparisons"]["Y1"]).reshape(-1, problem.num_objectives),
        np.asarray(state["comparisons"]["Y2"]).reshape(-1, problem.num_objectives),
        state["comparisons"]["labels"],
    )
    t = state["t"]
    gp = fit(
        observations,
        problem.bounds,
        np.random.default_rng(component_seed(cfg.seed, _DOM_GP, t)),
    )
    train_cfg = replace(
        cfg.train,
        seed=int(component_seed(cfg.seed, _DOM_ENSEMBLE, t).generate_state(1)[0]),
    )
    ensemble = train_ensemble(
        comparisons,
        ensemble_size=cfg.ensemble_size,
        cfg=train_cfg,
        activation=cfg.activation,
        monotone=cfg.monotone,
    )
    acq = optimize_qneiuu(
        gp,
        ensemble,
        observations,
        problem.bounds,
        cfg.acquisition,
        seed=int(component_seed(cfg.seed, _DOM_ACQ, t).generate_state(1)[0]),
    )
    y_next = problem.evaluate(acq.x)
    observations.append(acq.x, y_next)
    state["observations"]["X"].append(np.asarray(acq.x, float).tolist())
    state["observations"]["Y"].append(np.asarray(y_next, float).tolist())
    state["experiments"].append(
        {
            "t": t,
            "x": np.asarray(acq.x, float).tolist(),
            "y": np.asarray(y_next, float).tolist(),
            "acquisition_value": acq.value,
        }
    )
    state["t"] = t + 1

    means, _ = ensemble.belief_batch(observations.Y)
    state["model_ranking"] = np.argsort(means)[::-1].tolist()

    choice = select_pair(observations, ensemble, comparisons, cfg.acquisition)
    _ask(state, choice.i, choice.j)


# ---------------------------------------------------------------------------
# FastAPI application
# ---------------------------------------------------------------------------


def create_app(persist_dir: str | Path, ui_dist: str | Path | None = None) -> FastAPI:
    store = SessionStore(Path(persist_dir))
    app = FastAPI(title="bope session service")

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        try:
            cfg = RunConfig.from_dict(body)
            state = _build_session(cfg)
        except (ConfigError, BopeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        store.add(state)
        return {"id": state["id"], "session": _summary(state)}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": [_summary(store.get(sid)) for sid in store.ids()]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return {"session": _summary(store.get(session_id))}

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str):
        lock = store.lock(session_id)
        with lock:
            state = store.get(session_id)
            if state["phase"] != PHASE_IDLE:
                raise HTTPException(
                    status_code=409,
                    detail=f"step not allowed in phase {state['phase']!r}",
                )
            if state["init_queue"]:
                i, j = state["init_queue"].pop(0)
                _ask(state, i, j)
                store.save(state)
                return {"session": _summary(state)}
            state["phase"] = PHASE_EXPERIMENTING
            store.save(state)
            try:
                _run_experiment_step(state)
            except BopeError as exc:
                state["phase"] = PHASE_IDLE
                store.save(state)
                raise HTTPException(status_code=500, detail=str(exc))
            store.save(state)
            return {"session": _summary(state)}

    @app.post("/sessions/{session_id}/preference")
    def preference(session_id: str, body: dict):
        choice = body.get("choice") if isinstance(body, dict) else None
        if choice not in _CHOICE_LABELS:
            raise HTTPException(
                status_code=400, detail="body must be {'choice': 1|2|'tie'}"
            )
        lock = store.lock(session_id)
        with lock:
            state = store.get(session_id)
            if state["phase"] != PHASE_AWAITING:
                raise HTTPException(
                    status_code=409,
                    detail=f"no pending question in phase {state['phase']!r}",
                )
            label = _CHOICE_LABELS[choice]
            question = state["current_question"]
            question["label"] = label
            question["answered_at"] = _now()
            # keep the questions log entry in sync (same object when in
            # memory, but not after a reload from disk)
            for entry in state["questions"]:
                if entry["question_id"] == question["question_id"]:
                    entry.update(question)
            state["comparisons"]["Y1"].append(question["y1"])
            state["comparisons"]["Y2"].append(question["y2"])
            state["comparisons"]["labels"].append(label)
            state["current_question"] = None
            done = not state["init_queue"] and state["t"] >= state["config"]["iterations"]
            state["phase"] = PHASE_FINISHED if done else PHASE_IDLE
            store.save(state)
            return {"session": _summary(state)}

    @app.get("/sessions/{session_id}/trace")
    def trace(session_id: str):
        state = store.get(session_id)
        return {
            "id": state["id"],
            "phase": state["phase"],
            "questions": state["questions"],
            "experiments": state["experiments"],
            "model_ranking": state["model_ranking"],
            "n_observations": len(state["observations"]["Y"]),
        }

    ui_dir = Path(ui_dist) if ui_dist else Path(os.environ.get("BOPE_UI_DIST", "frontend/dist"))
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def index():
            return RedirectResponse(url="/ui/")

    return app
