"""Scenario loading and batch episode execution.

A scenario is a manifest naming a base PDDL model plus three fact files:
ground truth, the robot's initial context, and the human's initial
context. The loader enforces the study invariants: both initial contexts
are subsets of the ground truth, and their union equals it.

``run_episode`` drives a full simulated episode: interleaved execution,
both interruption triggers, clarification and restatement dialogue, a
proactive fact sweep once execution goes quiet, and a divergence report
per iteration. With the grammar NLU the whole episode is deterministic.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .divergence import CSV_HEADER, DivergenceReport, plan_divergence
from .errors import CommonGroundError, PddlError, ScenarioInvalid
from .facts import CompiledModel, ContextModel, Fact, compile_context, edit_distance, union
from .nlu import NluEngine, Utterance
from .pddl import PddlDomain, PddlProblem, parse_domain, parse_problem
from .planning import AgentPlanPair, Plan, find_plan, split_plan
from .session import (
    CONVERGED,
    HUMAN,
    ROBOT,
    UNRESOLVED,
    Session,
    SessionPhase,
    check_termination,
)
from .simhuman import SimulatedHuman

CONDITIONS = (
    "robot-incomplete",
    "human-incomplete",
    "both-incomplete",
    "neither-incomplete",
)

DEFAULT_MAX_ROUNDS = 10_000
_DIALOGUE_GUARD = 32


@dataclass(frozen=True)
class Scenario:
    name: str
    condition: str
    domain: PddlDomain
    problem: PddlProblem
    ground_truth_facts: ContextModel
    robot_facts: ContextModel
    human_facts: ContextModel
    epsilon: float = 1.0
    flags: dict = field(default_factory=dict)
    root: Path | None = None


@dataclass
class EpisodeLog:
    scenario: str
    seed: int
    events: list[dict]
    series: list[DivergenceReport]
    outcome: str
    explanations_robot_to_human: int
    explanations_human_to_robot: int
    final_t: int
    wall_seconds: float

    def events_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.events) + "\n"


def load_facts_file(path: Path, owner: str) -> ContextModel:
    try:
        records = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioInvalid(f"cannot read fact file {path}: {exc}") from exc
    if not isinstance(records, list):
        raise ScenarioInvalid(f"fact file {path} must hold a JSON array")
    try:
        facts = tuple(Fact.from_dict(r) for r in records)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"bad fact record in {path}: {exc}") from exc
    return ContextModel(owner=owner, revision=0, facts=facts)


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario directory (or manifest file)."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.is_file():
        raise ScenarioInvalid(f"no manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"manifest is not valid JSON: {exc}") from exc
    root = manifest_path.parent

    def resolve(key: str) -> Path:
        if key not in manifest:
            raise ScenarioInvalid(f"manifest missing required key {key!r}")
        return (root / manifest[key]).resolve()

    condition = manifest.get("condition", "")
    if condition not in CONDITIONS:
        raise ScenarioInvalid(f"condition must be one of {CONDITIONS}, got {condition!r}")

    try:
        domain = parse_domain(resolve("domain").read_text())
        problem = parse_problem(resolve("problem").read_text(), domain)
    except OSError as exc:
        raise ScenarioInvalid(f"cannot read PDDL fixture: {exc}") from exc
    except PddlError as exc:
        raise ScenarioInvalid(f"PDDL fixture rejected: {exc}") from exc

    gt = load_facts_file(resolve("ground_truth_facts"), owner="ground_truth")
    robot = load_facts_file(resolve("robot_facts"), owner="robot")
    human = load_facts_file(resolve("human_facts"), owner="human")

    if not robot.keys <= gt.keys:
        extra = sorted(robot.keys - gt.keys)
        raise ScenarioInvalid(f"robot facts outside ground truth: {extra}")
    if not human.keys <= gt.keys:
        extra = sorted(human.keys - gt.keys)
        raise ScenarioInvalid(f"human facts outside ground truth: {extra}")
    if robot.keys | human.keys != gt.keys:
        missing = sorted(gt.keys - (robot.keys | human.keys))
        raise ScenarioInvalid(f"ground truth is not the union of initial contexts; unaccounted: {missing}")

    scenario = Scenario(
        name=manifest.get("name", root.name),
        condition=condition,
        domain=domain,
        problem=problem,
        ground_truth_facts=gt,
        robot_facts=robot,
        human_facts=human,
        epsilon=float(manifest.get("epsilon", 1.0)),
        flags=dict(manifest.get("flags", {})),
        root=root,
    )
    # Every context must compile standalone, ground truth included.
    for ctx in (gt, robot, human):
        try:
            compile_context(domain, problem, ctx)
        except CommonGroundError as exc:
            raise ScenarioInvalid(f"{ctx.owner} context does not compile: {exc}") from exc
    return scenario


def bundled_scenarios() -> dict[str, Path]:
    """Scenario directories shipped inside the package."""
    from importlib import resources

    base = resources.files("commonground") / "scenarios"
    out: dict[str, Path] = {}
    with resources.as_file(base) as root:
        if root.is_dir():
            for child in sorted(root.iterdir()):
                if (child / "manifest.json").is_file():
                    out[child.name] = child
    return out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


class _PolicyCache:
    """Plans each side's model yields from its own initial beliefs.

    Divergence compares mental models, not execution pointers, so the
    policies are recomputed from each model's init whenever the model
    revision changes.
    """

    def __init__(self):
        self._cache: dict[tuple[str, int], AgentPlanPair] = {}

    def policies(self, side: str, compiled: CompiledModel) -> AgentPlanPair:
        key = (side, compiled.source_revision)
        if key not in self._cache:
            try:
                joint = find_plan(compiled.task, compiled.task.init, owner=f"{side}-joint")
            except CommonGroundError:
                joint = Plan(steps=(), cost=0, owner=f"{side}-joint")
            self._cache[key] = split_plan(joint, ROBOT, HUMAN)
        return self._cache[key]


def build_report(
    session: Session,
    sim: SimulatedHuman,
    scenario: Scenario,
    cache: _PolicyCache,
) -> DivergenceReport:
    robot_pair = cache.policies("robot", session.compiled)
    human_pair = cache.policies("human", sim.compiled)
    return DivergenceReport(
        iteration=session.t,
        d_hr=plan_divergence(human_pair.robot_projection, robot_pair.robot_projection),
        d_rh=plan_divergence(robot_pair.human_projection, human_pair.human_projection),
        epsilon=scenario.epsilon,
        ed_r_gt=edit_distance(session.robot_ctx, scenario.ground_truth_facts),
        ed_h_gt=edit_distance(sim.ctx, scenario.ground_truth_facts),
        ed_r_h=edit_distance(session.robot_ctx, sim.ctx),
    )


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------


def run_episode(
    scenario: Scenario,
    seed: int = 0,
    nlu: NluEngine | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> EpisodeLog:
    """One simulated reconciliation episode, start to termination."""
    started = time.perf_counter()
    session = Session(scenario=scenario, mode="simulated", seed=seed, nlu=nlu)
    sim = SimulatedHuman(scenario=scenario, seed=seed)
    gt_model = compile_context(scenario.domain, scenario.problem, scenario.ground_truth_facts)
    gt_goal = gt_model.task.goal
    cache = _PolicyCache()
    series: list[DivergenceReport] = []

    def snapshot() -> DivergenceReport:
        report = build_report(session, sim, scenario, cache)
        if series and series[-1].iteration == report.iteration:
            series[-1] = report
        else:
            series.append(report)
        return report

    def maybe_snapshot() -> None:
        if not series or series[-1].iteration < session.t:
            snapshot()

    def restatement_cycle() -> None:
        guard = 0
        while session.phase is SessionPhase.AWAITING_RESTATEMENT and guard < _DIALOGUE_GUARD:
            guard += 1
            pending = session.pending_explanation
            assert pending is not None
            echo = sim.receive_explanation(pending.explanation, session.world)
            session.confirm_restatement(echo)
            maybe_snapshot()

    def dialogue(first: Utterance) -> None:
        pending: Utterance | None = first
        guard = 0
        while pending is not None and guard < _DIALOGUE_GUARD:
            guard += 1
            session.handle_human_utterance(pending)
            maybe_snapshot()
            pending = None
            restatement_cycle()
            if session.phase is SessionPhase.AWAITING_CLARIFICATION:
                assert session.pending_violation is not None
                pending = sim.answer_clarification(session.pending_violation.violation)
        sim.resync(session.world)

    snapshot()  # t = 0 baseline
    rounds = 0
    idle_kicked = False
    while session.phase is not SessionPhase.TERMINATED:
        rounds += 1
        if rounds > max_rounds:
            session.terminate(UNRESOLVED)
            break
        progress = False

        if session.phase is SessionPhase.EXECUTING:
            act = session.robot_step()
            if act is not None:
                progress = True
                reaction = sim.observe_robot_action(act)
                if reaction is not None:
                    session.log_event("interruption", source=HUMAN, text=reaction.text)
                    dialogue(reaction)

        if session.phase is SessionPhase.EXECUTING:
            act = sim.next_action(session.world)
            if act is not None:
                progress = True
                violation = session.observe_human_action(act)
                if violation is not None:
                    session.interrupt(violation)
                    dialogue(sim.answer_clarification(violation))

        if session.phase is SessionPhase.AWAITING_CLARIFICATION:
            # Stuck notice (or an unresolved deviation) outside a dialogue.
            progress = True
            pending = session.pending_violation
            session.interrupt(pending.violation if pending else None)
            dialogue(sim.answer_clarification(pending.violation if pending else None))

        if session.phase is SessionPhase.EXECUTING and not progress:
            offer = sim.volunteer()
            if offer is not None:
                session.log_event("interruption", source=HUMAN, text=offer.text, volunteer=True)
                dialogue(offer)
                progress = True
            else:
                shared = session.share_untold()
                if shared is not None:
                    restatement_cycle()
                    sim.resync(session.world)
                    progress = True

        if progress:
            idle_kicked = False
            continue
        if session.phase is not SessionPhase.EXECUTING:
            continue
        report = snapshot()
        if check_termination(session, report, goal_met=gt_goal <= session.world):
            break
        if not idle_kicked:
            # One recovery attempt: re-derive both sides' plans in place.
            idle_kicked = True
            session.log_event("replan", reason="idle kick")
            session._replan("idle kick")
            sim.resync(session.world)
            continue
        session.terminate(UNRESOLVED)

    snapshot()
    outcome = session.termination_reason or UNRESOLVED
    return EpisodeLog(
        scenario=scenario.name,
        seed=seed,
        events=list(session.events),
        series=series,
        outcome=outcome,
        explanations_robot_to_human=session.explanations.n,
        explanations_human_to_robot=session.explanations.m,
        final_t=session.t,
        wall_seconds=time.perf_counter() - started,
    )


def export_metrics(log: EpisodeLog, path: str | Path) -> Path:
    """Write the per-iteration divergence series as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [CSV_HEADER] + [r.csv_row() for r in log.series]
    path.write_text("\n".join(rows) + "\n")
    return path


def export_events(log: EpisodeLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(log.events_jsonl())
    return path


def run_batch(
    scenarios: list[Scenario],
    repeats: int = 1,
    base_seed: int = 0,
    nlu: NluEngine | None = None,
) -> list[EpisodeLog]:
    logs = []
    for scenario in scenarios:
        for r in range(repeats):
            logs.append(run_episode(scenario, seed=base_seed + r, nlu=nlu))
    return logs


def scenario_with(scenario: Scenario, **overrides) -> Scenario:
    """Scenario copy with selected fields replaced (epsilon, flags, ...)."""
    return replace(scenario, **overrides)
