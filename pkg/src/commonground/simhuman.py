"""Scripted human teammate used for fully offline episodes.

The simulated human mirrors the robot's architecture: it keeps its own
fact context, compiles it into a planning model, follows its own plan
projection, and predicts the robot's actions from the same joint plan.
Information flows only through utterances and explanations; it never
reads the ground truth or the robot's context.

All utterances use the structured grammar, so episodes driven by this
agent are deterministic and replayable.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from .errors import ResourceLimit, Unsolvable
from .facts import (
    ContextModel,
    Fact,
    add_facts,
    compile_context,
    rank_explaining_facts,
    transfer_sorted,
    with_object_dependencies,
)
from .nlu import (
    Attribution,
    Utterance,
    render_facts_utterance,
    render_question_utterance,
)
from .pddl import GroundedAction
from .planning import Plan, split_plan, find_plan

if TYPE_CHECKING:  # pragma: no cover
    from .harness import Scenario
    from .session import Explanation, Violation

ROBOT = "robot"
HUMAN = "human"

DONT_KNOW = "I am not sure why; that was my plan."


class SimulatedHuman:
    """Plans with its own mental model and speaks the structured grammar."""

    def __init__(self, *, scenario: "Scenario", seed: int = 0):
        self.base_domain = scenario.domain
        self.base_problem = scenario.problem
        self.ctx: ContextModel = scenario.human_facts
        self.seed = seed
        self.compiled = compile_context(scenario.domain, scenario.problem, self.ctx)
        self.known_to_robot: set[str] = set()
        self.saw_misalignment = False
        self.plan_failed = False
        self.own_idx = 0
        self.robot_expected: list[GroundedAction] = []
        self.plans = None
        self.resync(self.compiled.task.init)

    # -- planning -----------------------------------------------------------

    def resync(self, world: frozenset[str]) -> None:
        """Re-derive own plan and robot prediction from the current world."""
        try:
            joint = find_plan(self.compiled.task, self.compiled.belief_state(world),
                              owner="human-joint")
            self.plan_failed = False
        except (Unsolvable, ResourceLimit):
            joint = Plan(steps=(), cost=0, owner="human-joint")
            self.plan_failed = True
        self.plans = split_plan(joint, ROBOT, HUMAN)
        self.own_idx = 0
        self.robot_expected = list(self.plans.robot_projection.steps)

    def goal_met(self, world: frozenset[str]) -> bool:
        return self.compiled.task.goal <= self.compiled.belief_state(world)

    def _untold(self) -> list[Fact]:
        return [f for f in self.ctx.facts if f.key not in self.known_to_robot]

    # -- execution ----------------------------------------------------------

    def next_action(self, world: frozenset[str]) -> GroundedAction | None:
        """Own next planned step, if ready; replans when blocked with the
        robot out of expected moves."""
        steps = self.plans.human_projection.steps
        if self.own_idx >= len(steps):
            if not self.goal_met(world) and not self.robot_expected and not self.plan_failed:
                self.resync(world)
                steps = self.plans.human_projection.steps
                if not steps:
                    return None
            else:
                return None
        step = steps[self.own_idx]
        if not step.pre <= self.compiled.belief_state(world):
            if not self.robot_expected:
                self.resync(world)
            return None
        self.own_idx += 1
        return step

    def observe_robot_action(self, action: GroundedAction) -> Utterance | None:
        """Interrupt when the robot deviates from this agent's prediction.

        Volunteers an explaining fact when it has one; otherwise asks a
        structured clarification question about the observed action.
        """
        expected = self.robot_expected[0] if self.robot_expected else None
        if expected is not None and expected.name == action.name:
            self.robot_expected.pop(0)
            return None
        self.saw_misalignment = True
        untold = self._untold()
        ranked = rank_explaining_facts(untold, expected, action)
        if ranked:
            batch = with_object_dependencies(ranked, untold)
            self.known_to_robot |= {f.key for f in batch}
            text = render_facts_utterance(batch, Attribution.MISSING_FROM_ROBOT)
            return Utterance(speaker=HUMAN, text=text)
        args = tuple(x for x in action.args if x != action.agent)
        text = render_question_utterance(action.agent, action.schema, args)
        return Utterance(speaker=HUMAN, text=text)

    # -- dialogue -----------------------------------------------------------

    def explain_deviation(self, violation: "Violation | None") -> list[Fact]:
        """Facts from own context that justify the behavior the robot queried."""
        untold = self._untold()
        expected = violation.expected if violation else None
        observed = violation.observed if violation else None
        ranked = rank_explaining_facts(untold, expected, observed)
        if ranked:
            return with_object_dependencies(ranked, untold)
        fallback = transfer_sorted(untold)
        if fallback:
            head = next((f for f in fallback if f.category != "object"), fallback[0])
            return with_object_dependencies([head], untold)
        return []

    def answer_clarification(self, violation: "Violation | None") -> Utterance:
        self.saw_misalignment = True
        facts = self.explain_deviation(violation)
        if not facts:
            return Utterance(speaker=HUMAN, text=DONT_KNOW)
        self.known_to_robot |= {f.key for f in facts}
        return Utterance(
            speaker=HUMAN, text=render_facts_utterance(facts, Attribution.MISSING_FROM_ROBOT)
        )

    def receive_explanation(self, explanation: "Explanation", world: frozenset[str]) -> Utterance:
        """Adopt the robot's facts, replan, and echo them back."""
        self.saw_misalignment = True
        self.ctx = add_facts(self.ctx, explanation.facts)
        if self.compiled.source_revision != self.ctx.revision:
            self.compiled = compile_context(self.base_domain, self.base_problem, self.ctx)
        self.known_to_robot |= {f.key for f in explanation.facts}
        self.resync(world)
        return Utterance(
            speaker=HUMAN,
            text=render_facts_utterance(explanation.facts, Attribution.MISSING_FROM_HUMAN),
        )

    def volunteer(self) -> Utterance | None:
        """Offer the next fact the robot has no evidence of (idle dialogue).

        Gated on observed misalignment: a session whose predictions all
        held gives no reason to double-check mutual knowledge.
        """
        if not self.saw_misalignment:
            return None
        untold = transfer_sorted(self._untold())
        if not untold:
            return None
        head = next((f for f in untold if f.category != "object"), untold[0])
        batch = with_object_dependencies([head], untold)
        self.known_to_robot |= {f.key for f in batch}
        return Utterance(
            speaker=HUMAN, text=render_facts_utterance(batch, Attribution.MISSING_FROM_ROBOT)
        )
