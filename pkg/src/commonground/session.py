"""Reconciliation session: the robot-side dialogue state machine.

A session owns the robot's context, its compiled planning model, the
shared world state, and the event log. Execution and dialogue interleave
under a phase machine:

* ``EXECUTING``: the robot works through its plan projection and checks
  observed human actions against its prediction.
* ``AWAITING_CLARIFICATION``: a deviation (or a stuck plan) was detected
  and the robot asked why; human utterances are routed here until the
  discrepancy is resolved or abandoned.
* ``AWAITING_RESTATEMENT``: the robot explained facts to the human and
  execution stays suspended until the human's echo covers them.

All robot text is templated; everything appended to the event log is
JSON-serializable and deterministic for equal inputs, which makes whole
episodes byte-replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

from .divergence import DivergenceReport, reconciliation_complete
from .errors import CompileError, NluError, PhaseError, ResourceLimit, Unsolvable
from .facts import (
    ContextModel,
    Fact,
    Vocabulary,
    add_facts,
    compile_context,
    rank_explaining_facts,
    transfer_sorted,
    with_object_dependencies,
)
from .nlu import Attribution, FactExtraction, NluEngine, Utterance
from .pddl import GroundedAction
from .planning import AgentPlanPair, Plan, find_plan, split_plan

if TYPE_CHECKING:  # pragma: no cover
    from .harness import Scenario

ROBOT = "robot"
HUMAN = "human"

ROBOT_TO_HUMAN = "robot-to-human"
HUMAN_TO_ROBOT = "human-to-robot"

CONVERGED = "converged"
UNRESOLVED = "unresolved"
ERROR = "error"

MAX_RE_EXPLANATIONS = 2
LIVE_MATCH_STREAK = 3


class SessionPhase(str, Enum):
    EXECUTING = "executing"
    AWAITING_CLARIFICATION = "awaiting-clarification"
    AWAITING_RESTATEMENT = "awaiting-restatement"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class Violation:
    expected: GroundedAction | None
    observed: GroundedAction
    step_index: int

    def __post_init__(self):
        if self.expected is not None and self.expected.name == self.observed.name:
            raise ValueError("a violation needs differing expected/observed actions")


@dataclass(frozen=True)
class Explanation:
    direction: str
    facts: tuple[Fact, ...]
    text: str
    iteration: int

    def __post_init__(self):
        if not self.facts:
            raise ValueError("an explanation must carry at least one fact")
        missing = [f.gloss for f in self.facts if f.gloss not in self.text]
        if missing:
            raise ValueError(f"explanation text must contain every gloss, missing {missing}")


@dataclass
class ExplanationLog:
    entries: list[Explanation] = field(default_factory=list)

    @property
    def n(self) -> int:
        return sum(1 for e in self.entries if e.direction == ROBOT_TO_HUMAN)

    @property
    def m(self) -> int:
        return sum(1 for e in self.entries if e.direction == HUMAN_TO_ROBOT)

    def append(self, e: Explanation) -> None:
        self.entries.append(e)


@dataclass
class _PendingViolation:
    violation: Violation | None  # None for a stuck-plan notice
    re_asks: int = 0


@dataclass
class _PendingExplanation:
    explanation: Explanation
    re_explains: int = 0


def make_interruption(v: Violation | None) -> str:
    """Deterministic templated interruption for a detected deviation."""
    if v is None:
        return ("I cannot make progress toward the goal from here. "
                "Can you tell me anything I might be missing?")
    if v.expected is None:
        return (f"I did not expect another step from you, but I observed "
                f"{v.observed.gloss()}. Can you tell me why?")
    return (f"I expected you to {v.expected.gloss()} but I observed "
            f"{v.observed.gloss()}. Can you tell me why?")


class Session:
    """Single-writer reconciliation session (robot side)."""

    def __init__(
        self,
        *,
        scenario: "Scenario",
        mode: str = "simulated",
        seed: int = 0,
        nlu: NluEngine | None = None,
    ):
        if mode not in ("simulated", "live"):
            raise ValueError(f"unknown session mode {mode!r}")
        self.mode = mode
        self.seed = seed
        self.nlu = nlu or NluEngine(mode="grammar")
        self.scenario = scenario
        self.base_domain = scenario.domain
        self.base_problem = scenario.problem
        self.vocabulary = Vocabulary.from_model(scenario.domain, scenario.problem)
        self.epsilon = scenario.epsilon
        self.tolerate_reordering = bool(scenario.flags.get("tolerate_reordering", False))

        self.robot_ctx: ContextModel = scenario.robot_facts
        self.events: list[dict] = []
        self.tick = 0
        self.t = 0
        self.explanations = ExplanationLog()
        self.told_human: set[str] = set()
        self.known_to_human: set[str] = set()
        self.pending_violation: _PendingViolation | None = None
        self.pending_explanation: _PendingExplanation | None = None
        self.consecutive_matched = 0
        self.human_steps_seen = 0
        self.saw_misalignment = False
        self.termination_reason: str | None = None
        self.phase = SessionPhase.EXECUTING

        # Physical reality starts from the ground-truth initial state; the
        # robot's decisions only ever read it through belief_state().
        gt_model = compile_context(scenario.domain, scenario.problem, scenario.ground_truth_facts)
        self.world: frozenset[str] = gt_model.task.init

        self.compiled = compile_context(scenario.domain, scenario.problem, self.robot_ctx)
        self.plans = _empty_plans()
        self.robot_idx = 0
        self.human_expected: list[GroundedAction] = []
        self.log_event("plan", note="session start", scenario=scenario.name, mode=mode, seed=seed)
        self._replan("initial plan")

    # -- event log ----------------------------------------------------------

    def log_event(self, kind: str, **payload) -> None:
        self.events.append({"tick": self.tick, "kind": kind, "payload": payload})
        self.tick += 1

    def events_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.events) + "\n"

    def _say(self, text: str, **extra) -> Utterance:
        utterance = Utterance(speaker=ROBOT, text=text, timestamp=self.tick)
        self.log_event("utterance", speaker=ROBOT, text=text, **extra)
        return utterance

    def _require(self, *phases: SessionPhase) -> None:
        if self.phase not in phases:
            raise PhaseError(f"operation not allowed in phase {self.phase.value}")

    # -- planning -----------------------------------------------------------

    def belief(self) -> frozenset[str]:
        return self.compiled.belief_state(self.world)

    def goal_believed_met(self) -> bool:
        return self.compiled.task.goal <= self.belief()

    def _replan(self, reason: str) -> bool:
        try:
            joint = find_plan(self.compiled.task, self.belief(), owner="robot-joint")
        except (Unsolvable, ResourceLimit) as exc:
            self.log_event("replan", reason=reason, outcome=f"failed: {exc}")
            self._enter_clarification(None)
            return False
        self.plans = split_plan(joint, ROBOT, HUMAN)
        self.robot_idx = 0
        self.human_expected = list(self.plans.human_projection.steps)
        self.log_event(
            "replan",
            reason=reason,
            joint=list(joint.step_names),
            robot=list(self.plans.robot_projection.step_names),
            human_expected=list(self.plans.human_projection.step_names),
        )
        return True

    def _enter_clarification(self, violation: Violation | None) -> None:
        self.pending_violation = _PendingViolation(violation)
        self.phase = SessionPhase.AWAITING_CLARIFICATION

    def _resume(self) -> None:
        self.pending_violation = None
        if self.phase is not SessionPhase.TERMINATED:
            self.phase = SessionPhase.EXECUTING

    # -- execution ----------------------------------------------------------

    def robot_step(self) -> GroundedAction | None:
        """Execute the robot's next planned step if it is ready.

        Returns the executed action, or None when the robot is done or
        waiting on teammate effects. A physically failed step triggers a
        replan from the current world.
        """
        self._require(SessionPhase.EXECUTING)
        steps = self.plans.robot_projection.steps
        if self.robot_idx >= len(steps):
            if not self.goal_believed_met() and not self.human_expected:
                if self._replan("plan exhausted with goal unmet"):
                    return self.robot_step() if self.plans.robot_projection.steps else None
            return None
        step = steps[self.robot_idx]
        if not step.pre <= self.belief():
            if self.human_expected:
                return None  # teammate effects pending
            self._replan(f"step {step.name} blocked in belief state")
            return None
        if not step.pre <= self.world:
            self.log_event("replan", reason=f"precondition of {step.name} failed in world",
                           outcome="pending")
            self._replan(f"world rejected {step.name}")
            return None
        self.world = (self.world - step.delete) | step.add
        self.robot_idx += 1
        self.log_event("robot_action", name=step.name, agent=step.agent)
        return step

    def observe_human_action(self, action: GroundedAction) -> Violation | None:
        """Track a human action; deviation from the prediction raises dialogue."""
        self._require(SessionPhase.EXECUTING)
        if action.agent != HUMAN:
            raise ValueError(f"observed action {action.name} is not a human action")
        expected = self.human_expected[0] if self.human_expected else None
        applicable = action.pre <= self.world
        matched = applicable and expected is not None and action.name == expected.name
        reordered = False
        if not matched and applicable and self.tolerate_reordering:
            for i in range(1, len(self.human_expected)):
                if self.human_expected[i].name == action.name:
                    del self.human_expected[i]
                    reordered = True
                    break
        if applicable:
            self.world = (self.world - action.delete) | action.add
        self.human_steps_seen += 1
        self.log_event(
            "human_action",
            name=action.name,
            applicable=applicable,
            expected=expected.name if expected else None,
            matched=matched or reordered,
        )
        if matched:
            self.human_expected.pop(0)
            self.consecutive_matched += 1
            return None
        if reordered:
            self.consecutive_matched += 1
            return None
        self.consecutive_matched = 0
        self.saw_misalignment = True
        violation = Violation(
            expected=expected if (expected and expected.name != action.name) else None,
            observed=action,
            step_index=self.human_steps_seen - 1,
        )
        self.log_event(
            "violation",
            expected=violation.expected.name if violation.expected else None,
            observed=action.name,
            applicable=applicable,
        )
        self._enter_clarification(violation)
        return violation

    def interrupt(self, violation: Violation | None = None) -> Utterance:
        """Templated interruption for the pending (or given) violation."""
        if violation is None and self.pending_violation is not None:
            violation = self.pending_violation.violation
        text = make_interruption(violation)
        self.log_event("interruption", text=text)
        return Utterance(speaker=ROBOT, text=text, timestamp=self.tick)

    # -- dialogue -----------------------------------------------------------

    def handle_human_utterance(self, utterance: Utterance) -> Explanation | None:
        """Route a human utterance through extraction and model update."""
        self._require(SessionPhase.EXECUTING, SessionPhase.AWAITING_CLARIFICATION)
        self.log_event("utterance", speaker=HUMAN, text=utterance.text)
        try:
            extraction = self.nlu.extract_facts(
                utterance, self.robot_ctx, self._known_to_human_summary(), self.vocabulary
            )
        except NluError as exc:
            self.log_event("extraction", error=str(exc))
            self._say("I did not understand that.")
            return None
        self.log_event(
            "extraction",
            attribution=extraction.attribution.value,
            facts=[f.key for f in extraction.facts],
            source=extraction.source,
            query=(extraction.query.agent, extraction.query.schema, list(extraction.query.args))
            if extraction.query else None,
        )
        attribution = extraction.attribution
        if attribution is Attribution.NO_NEW_INFORMATION:
            return self._after_no_information()
        if attribution in (Attribution.MISSING_FROM_ROBOT, Attribution.BOTH):
            prior_pending = self.pending_violation
            absorbed = self._absorb_facts(extraction.facts)
            counter = self._maybe_counter_explain()
            # Resolve the clarification unless a replan failure opened a new one.
            if counter is None and self.pending_violation is prior_pending:
                self._resume()
            return counter or absorbed
        # A question: answer it from the robot's own context if possible.
        self.saw_misalignment = True
        answer = self._resolve_query(extraction)
        if answer:
            return self._issue_explanation(answer)
        self._say("I do not have information about that.", unresolved=True)
        self._resume()
        return None

    def confirm_restatement(self, utterance: Utterance):
        """Verify the human's echo of the pending explanation."""
        from .nlu import RestatementMatch

        self._require(SessionPhase.AWAITING_RESTATEMENT)
        self.log_event("utterance", speaker=HUMAN, text=utterance.text)
        pending = self.pending_explanation
        assert pending is not None
        try:
            match = self.nlu.match_restatement(
                utterance, pending.explanation.facts, self.robot_ctx, self.vocabulary
            )
        except NluError as exc:
            self.log_event("restatement", error=str(exc))
            self._say("Sorry, could you restate that once more?")
            return RestatementMatch(False, tuple(f.key for f in pending.explanation.facts))
        self.log_event("restatement", matched=match.matched, missing=list(match.missing_keys))
        if match.matched:
            keys = {f.key for f in pending.explanation.facts}
            self.told_human |= keys
            self.known_to_human |= keys
            self.explanations.append(pending.explanation)
            self.t += 1
            self.pending_explanation = None
            self.phase = SessionPhase.EXECUTING
            self._replan("restatement confirmed")
            return match
        pending.re_explains += 1
        if pending.re_explains <= MAX_RE_EXPLANATIONS:
            self._say(pending.explanation.text, re_explanation=pending.re_explains)
        else:
            self._say("Let us continue; we can come back to this.", unresolved=True)
            self.pending_explanation = None
            self.phase = SessionPhase.EXECUTING
        return match

    # -- internals ----------------------------------------------------------

    def _known_to_human_summary(self) -> str:
        return "\n".join(f"- {k}" for k in sorted(self.known_to_human))

    def _absorb_facts(self, facts) -> Explanation | None:
        self.known_to_human |= {f.key for f in facts}
        new = [f for f in facts if f.key not in self.robot_ctx.keys]
        if not new:
            if facts:
                self._say("I already knew that: " + "; ".join(f.gloss for f in facts) + ".")
            return None
        try:
            ctx = add_facts(self.robot_ctx, new)
            compiled = compile_context(self.base_domain, self.base_problem, ctx)
        except CompileError as exc:
            self.log_event("extraction", error=f"compile rejected facts: {exc}")
            self._say("I did not understand that.")
            return None
        self.robot_ctx = ctx
        self.compiled = compiled
        self.saw_misalignment = True
        self.t += 1
        glosses = "; ".join(f.gloss for f in new)
        text = f"Thank you, I did not know that: {glosses}. I have updated my plan."
        explanation = Explanation(
            direction=HUMAN_TO_ROBOT, facts=tuple(new), text=text, iteration=self.t
        )
        self.explanations.append(explanation)
        self.log_event(
            "explanation",
            direction=HUMAN_TO_ROBOT,
            facts=[f.key for f in new],
            text=text,
            iteration=self.t,
        )
        self._say(text)
        self._replan("context updated with teammate facts")
        return explanation

    def _issue_explanation(self, facts: list[Fact]) -> Explanation | None:
        untold = [f for f in facts if f.key not in self.known_to_human]
        if not untold:
            return None
        glosses = "; ".join(f.gloss for f in untold)
        text = f"Please note: {glosses}. Could you restate that in your own words?"
        explanation = Explanation(
            direction=ROBOT_TO_HUMAN, facts=tuple(untold), text=text, iteration=self.t
        )
        self.pending_explanation = _PendingExplanation(explanation)
        self.pending_violation = None
        self.phase = SessionPhase.AWAITING_RESTATEMENT
        self.log_event(
            "explanation",
            direction=ROBOT_TO_HUMAN,
            facts=[f.key for f in untold],
            text=text,
            iteration=self.t,
            awaiting_restatement=True,
        )
        self._say(text)
        return explanation

    def _after_no_information(self) -> Explanation | None:
        if self.phase is not SessionPhase.AWAITING_CLARIFICATION:
            return None
        counter = self._maybe_counter_explain()
        if counter is not None:
            return counter
        pending = self.pending_violation
        assert pending is not None
        if pending.re_asks == 0:
            pending.re_asks = 1
            self._say("Could you tell me more about why?", re_ask=True)
            return None
        self._say("Let us continue; I will keep watching.", unresolved=True)
        self._resume()
        return None

    def _maybe_counter_explain(self) -> Explanation | None:
        """Offer the robot's own untold facts that explain the pending deviation."""
        pending = self.pending_violation
        if pending is None or pending.violation is None:
            return None
        untold = [f for f in self.robot_ctx.facts if f.key not in self.known_to_human]
        ranked = rank_explaining_facts(untold, pending.violation.expected, pending.violation.observed)
        if not ranked:
            return None
        batch = with_object_dependencies(ranked, untold)
        return self._issue_explanation(batch)

    def _resolve_query(self, extraction: FactExtraction) -> list[Fact]:
        untold = [f for f in self.robot_ctx.facts if f.key not in self.known_to_human]
        if extraction.query is not None:
            q = extraction.query
            target = None
            for a in self.compiled.task.actions:
                rest = tuple(x for x in a.args if x != a.agent)
                if a.schema == q.schema and a.agent == q.agent and rest == q.args:
                    target = a
                    break
            if target is None:
                return []
            ranked = rank_explaining_facts(untold, None, target)
            return with_object_dependencies(ranked, untold)
        asked = [self.robot_ctx.get(f.key) for f in extraction.facts]
        present = [f for f in asked if f is not None and f.key not in self.known_to_human]
        return with_object_dependencies(present, untold) if present else []

    # -- proactive transfer and termination -----------------------------------

    def untold_facts(self) -> list[Fact]:
        """Robot facts with no evidence the human knows them, transfer-ordered."""
        return transfer_sorted(
            f for f in self.robot_ctx.facts if f.key not in self.known_to_human
        )

    def next_share_batch(self) -> list[Fact]:
        untold = self.untold_facts()
        if not untold:
            return []
        non_object = [f for f in untold if f.category != "object"]
        head = non_object[0] if non_object else untold[0]
        return with_object_dependencies([head], untold)

    def share_untold(self) -> Explanation | None:
        """Volunteer the next untold fact batch (dialogue-only phase).

        Only fires once some behavioral evidence of misalignment exists;
        an episode whose predictions all held needs no volunteering.
        """
        self._require(SessionPhase.EXECUTING)
        if not self.saw_misalignment:
            return None
        batch = self.next_share_batch()
        if not batch:
            return None
        return self._issue_explanation(batch)

    def terminate(self, reason: str) -> None:
        if self.phase is SessionPhase.TERMINATED:
            return
        self.phase = SessionPhase.TERMINATED
        self.termination_reason = reason
        self.log_event("terminated", reason=reason, iteration=self.t,
                       explanations_robot_to_human=self.explanations.n,
                       explanations_human_to_robot=self.explanations.m)

    def live_termination_ready(self, goal_atoms: frozenset[str]) -> bool:
        """Behavioral proxy used when the human side is a real person."""
        return (
            self.phase is SessionPhase.EXECUTING
            and goal_atoms <= self.world
            and self.consecutive_matched >= LIVE_MATCH_STREAK
        )


def check_termination(session: Session, report: DivergenceReport, goal_met: bool) -> bool:
    """Terminate when policies agree within epsilon and the task is done."""
    session.log_event(
        "metrics",
        iteration=report.iteration,
        d_hr=report.d_hr,
        d_rh=report.d_rh,
        ed_r_gt=report.ed_r_gt,
        ed_h_gt=report.ed_h_gt,
        ed_r_h=report.ed_r_h,
    )
    if goal_met and reconciliation_complete(report):
        session.terminate(CONVERGED)
        return True
    return False


def _empty_plans() -> AgentPlanPair:
    empty = Plan(steps=(), cost=0, owner="empty")
    return AgentPlanPair(joint=empty, robot_projection=empty, human_projection=empty)
