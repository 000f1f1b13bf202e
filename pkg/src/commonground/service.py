"""HTTP session service: a live human plays the human agent.

The robot side runs exactly the same session machinery as simulated
episodes; the human side arrives over REST. Human actions are clicks on
grounded actions of the robot's current model, utterances and
restatements are free text routed through the configured NLU.

Responses never contain ground-truth facts, only what the robot itself
believes or has communicated. Each session is single-writer behind a
lock; every response carries the session tick so clients can reconcile
polled events.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .divergence import CSV_HEADER, DivergenceReport
from .errors import CommonGroundError, PhaseError, ScenarioInvalid
from .facts import compile_context, edit_distance
from .harness import Scenario, bundled_scenarios, load_scenario
from .nlu import DEFAULT_NLU_MODE, NLU_MODES, LlmClient, LlmEndpointConfig, NluEngine, Utterance
from .session import CONVERGED, HUMAN, Session, SessionPhase


class CreateSessionRequest(BaseModel):
    scenario: str
    nlu_mode: str = ""
    seed: int = 0


class UtteranceRequest(BaseModel):
    text: str


class ActionRequest(BaseModel):
    name: str


class RestatementRequest(BaseModel):
    text: str


@dataclass
class LiveSession:
    handle: str
    scenario: Scenario
    session: Session
    gt_goal: frozenset[str]
    series: list[DivergenceReport] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    flushed: bool = False

    def snapshot(self) -> None:
        """Live metrics carry only what the robot side can observe."""
        report = DivergenceReport(
            iteration=self.session.t,
            d_hr=None,
            d_rh=None,
            epsilon=self.scenario.epsilon,
            ed_r_gt=edit_distance(self.session.robot_ctx, self.scenario.ground_truth_facts),
            ed_h_gt=None,
            ed_r_h=None,
        )
        if self.series and self.series[-1].iteration == report.iteration:
            self.series[-1] = report
        else:
            self.series.append(report)

    def advance_robot(self) -> list[str]:
        """Let the robot work until it waits, finishes, or leaves EXECUTING."""
        executed: list[str] = []
        while self.session.phase is SessionPhase.EXECUTING:
            action = self.session.robot_step()
            if action is None:
                break
            executed.append(action.name)
        return executed

    def after_turn(self, session_dir: Path | None) -> None:
        if self.series[-1].iteration != self.session.t:
            self.snapshot()
        if self.session.live_termination_ready(self.gt_goal):
            self.session.terminate(CONVERGED)
        if self.session.phase is SessionPhase.TERMINATED and not self.flushed:
            self.flushed = True
            if session_dir is not None:
                out = session_dir / self.handle
                out.mkdir(parents=True, exist_ok=True)
                (out / "events.jsonl").write_text(self.session.events_jsonl())
                (out / "metrics.csv").write_text(self.metrics_csv())

    def metrics_csv(self) -> str:
        rows = [CSV_HEADER] + [r.csv_row() for r in self.series]
        return "\n".join(rows) + "\n"

    def view(self) -> dict:
        s = self.session
        executed = s.robot_idx
        robot_plan = [
            {"index": i, "name": a.name, "gloss": a.gloss(), "executed": i < executed}
            for i, a in enumerate(s.plans.robot_projection.steps)
        ]
        expected = [
            {"index": i, "name": a.name, "gloss": a.gloss()}
            for i, a in enumerate(s.human_expected)
        ]
        available = [
            {"name": a.name, "gloss": a.gloss()}
            for a in s.compiled.task.actions
            if a.agent == HUMAN and a.pre <= s.world
        ]
        told = [
            {"key": f.key, "gloss": f.gloss}
            for f in s.robot_ctx.facts
            if f.key in s.told_human
        ]
        pending = s.pending_explanation.explanation.text if s.pending_explanation else None
        return {
            "session_id": self.handle,
            "tick": s.tick,
            "iteration": s.t,
            "phase": s.phase.value,
            "terminated_reason": s.termination_reason,
            "robot_plan": robot_plan,
            "expected_human_plan": expected,
            "available_actions": available,
            "facts_told_to_human": told,
            "restatement_prompt": pending,
            "goal_met": bool(self.gt_goal <= s.world),
        }


def create_app(session_dir: str | Path | None = "live-sessions",
               nlu_mode: str = DEFAULT_NLU_MODE) -> FastAPI:
    app = FastAPI(title="commonground live sessions", version="0.1.0")
    registry: dict[str, LiveSession] = {}
    flush_dir = Path(session_dir) if session_dir else None

    def make_nlu(mode: str) -> NluEngine:
        if mode == "grammar":
            return NluEngine(mode="grammar")
        return NluEngine(mode=mode, client=LlmClient(LlmEndpointConfig.from_env()))

    def get_live(session_id: str) -> LiveSession:
        live = registry.get(session_id)
        if live is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return live

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        mode = request.nlu_mode or nlu_mode
        if mode not in NLU_MODES:
            raise HTTPException(status_code=422, detail=f"nlu_mode must be one of {NLU_MODES}")
        bundled = bundled_scenarios()
        try:
            if request.scenario in bundled:
                scenario = load_scenario(bundled[request.scenario])
            elif Path(request.scenario).exists():
                scenario = load_scenario(request.scenario)
            else:
                raise HTTPException(status_code=404, detail="unknown scenario")
        except ScenarioInvalid as exc:
            raise HTTPException(status_code=404, detail=f"scenario rejected: {exc}") from exc
        session = Session(scenario=scenario, mode="live", seed=request.seed,
                          nlu=make_nlu(mode))
        gt_model = compile_context(scenario.domain, scenario.problem,
                                   scenario.ground_truth_facts)
        live = LiveSession(
            handle=uuid.uuid4().hex,
            scenario=scenario,
            session=session,
            gt_goal=gt_model.task.goal,
        )
        live.snapshot()
        live.advance_robot()
        live.after_turn(flush_dir)
        registry[live.handle] = live
        return live.view()

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        live = get_live(session_id)
        with live.lock:
            return live.view()

    @app.post("/sessions/{session_id}/utterance")
    def post_utterance(session_id: str, request: UtteranceRequest):
        live = get_live(session_id)
        with live.lock:
            if not request.text.strip():
                raise HTTPException(status_code=422, detail="utterance text is empty")
            utterance = Utterance(speaker=HUMAN, text=request.text,
                                  timestamp=live.session.tick)
            before = live.session.robot_ctx.revision
            try:
                explanation = live.session.handle_human_utterance(utterance)
            except PhaseError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except CommonGroundError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            executed = live.advance_robot()
            live.after_turn(flush_dir)
            return {
                "tick": live.session.tick,
                "phase": live.session.phase.value,
                "model_updated": live.session.robot_ctx.revision != before,
                "explanation": explanation.text if explanation else None,
                "robot_plan": [a.name for a in live.session.plans.robot_projection.steps],
                "robot_executed": executed,
            }

    @app.post("/sessions/{session_id}/action")
    def post_action(session_id: str, request: ActionRequest):
        live = get_live(session_id)
        with live.lock:
            action = live.session.compiled.task.action(request.name)
            if action is None or action.agent != HUMAN:
                raise HTTPException(status_code=422,
                                    detail=f"unknown human action {request.name!r}")
            try:
                violation = live.session.observe_human_action(action)
            except PhaseError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            interruption = live.session.interrupt(violation).text if violation else None
            executed = live.advance_robot()
            live.after_turn(flush_dir)
            return {
                "tick": live.session.tick,
                "phase": live.session.phase.value,
                "violation": violation is not None,
                "interruption": interruption,
                "robot_executed": executed,
            }

    @app.post("/sessions/{session_id}/restatement")
    def post_restatement(session_id: str, request: RestatementRequest):
        live = get_live(session_id)
        with live.lock:
            if not request.text.strip():
                raise HTTPException(status_code=422, detail="restatement text is empty")
            utterance = Utterance(speaker=HUMAN, text=request.text,
                                  timestamp=live.session.tick)
            try:
                match = live.session.confirm_restatement(utterance)
            except PhaseError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            re_explanation = None
            if not match.matched and live.session.pending_explanation is not None:
                re_explanation = live.session.pending_explanation.explanation.text
            unresolved = not match.matched and live.session.pending_explanation is None
            executed = live.advance_robot()
            live.after_turn(flush_dir)
            return {
                "tick": live.session.tick,
                "phase": live.session.phase.value,
                "matched": match.matched,
                "missing": list(match.missing_keys),
                "re_explanation": re_explanation,
                "unresolved": unresolved,
                "robot_executed": executed,
            }

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, since: int = -1):
        live = get_live(session_id)
        with live.lock:
            events = [e for e in live.session.events if e["tick"] > since]
            return {"tick": live.session.tick, "events": events}

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        from fastapi.responses import PlainTextResponse

        live = get_live(session_id)
        with live.lock:
            return PlainTextResponse(live.metrics_csv(), media_type="text/csv")

    frontend_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend_dist.is_dir():  # pragma: no cover - depends on frontend build
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dist, html=True), name="ui")

    return app
