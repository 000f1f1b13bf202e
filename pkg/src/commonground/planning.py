"""Plan search, validation, and per-agent projection over grounded tasks.

``find_plan`` is A* with the additive heuristic; ties break on the
lexicographic order of action names via insertion order, so equal inputs
always return step-identical plans. ``optimal_plan_bfs`` is the slow,
provably minimal-cost reference search used as a test oracle.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import ResourceLimit, Unsolvable
from .pddl import GroundedAction, GroundedTask, WorldState

DEFAULT_NODE_CAP = 1_000_000
DEFAULT_BFS_STATE_CAP = 100_000

INF = float("inf")


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundedAction, ...]
    cost: int
    owner: str = ""

    @property
    def step_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.steps)

    def to_text(self) -> str:
        """Line-oriented format: one ``step_index agent action(args)`` per line."""
        return "\n".join(f"{i} {a.agent} {a.name}" for i, a in enumerate(self.steps))


@dataclass(frozen=True)
class AgentPlanPair:
    joint: Plan
    robot_projection: Plan
    human_projection: Plan


@dataclass(frozen=True)
class PlanValidation:
    valid: bool
    step_index: int | None = None
    reason: str | None = None


@dataclass
class _Node:
    state: frozenset[str]
    parent: "_Node | None" = None
    action: GroundedAction | None = None
    g: int = 0


def _as_state(start) -> frozenset[str]:
    if isinstance(start, WorldState):
        return start.true_atoms
    return frozenset(start)


def _additive_cost(task: GroundedTask, state: frozenset[str]) -> float:
    """Sum over goal atoms of relaxed cost-to-achieve from ``state``."""
    cost: dict[str, float] = {a: 0.0 for a in state}
    changed = True
    while changed:
        changed = False
        for action in task.actions:
            total = 0.0
            for p in action.pre:
                c = cost.get(p, INF)
                if c == INF:
                    total = INF
                    break
                total += c
            if total == INF:
                continue
            through = total + action.cost
            for q in action.add:
                if through < cost.get(q, INF):
                    cost[q] = through
                    changed = True
    return sum(cost.get(g, INF) for g in task.goal)


def _extract(node: _Node, owner: str) -> Plan:
    steps: list[GroundedAction] = []
    while node.parent is not None:
        steps.append(node.action)  # type: ignore[arg-type]
        node = node.parent
    steps.reverse()
    return Plan(steps=tuple(steps), cost=sum(a.cost for a in steps), owner=owner)


def find_plan(
    task: GroundedTask,
    start: WorldState | frozenset[str] | None = None,
    owner: str = "",
    node_cap: int = DEFAULT_NODE_CAP,
) -> Plan:
    """A* with the additive heuristic; deterministic tie-breaking.

    Raises ``Unsolvable`` when the goal is unreachable and
    ``ResourceLimit`` past ``node_cap`` expansions.
    """
    init = _as_state(start) if start is not None else task.init
    counter = 0
    h0 = _additive_cost(task, init)
    if h0 == INF:
        raise Unsolvable("goal unreachable from start state")
    open_heap: list[tuple[float, float, int, _Node]] = []
    heapq.heappush(open_heap, (h0, h0, counter, _Node(state=init)))
    best_g: dict[frozenset[str], int] = {init: 0}
    expansions = 0
    incumbent: _Node | None = None
    incumbent_cost = INF

    # The additive heuristic is inadmissible, so the first goal reached may
    # not be cheapest; keep searching while any open node could still beat
    # the incumbent on g alone.
    while open_heap:
        _, _, _, node = heapq.heappop(open_heap)
        if best_g.get(node.state, INF) < node.g or node.g >= incumbent_cost:
            continue
        if task.goal <= node.state:
            incumbent, incumbent_cost = node, node.g
            continue
        expansions += 1
        if expansions > node_cap:
            raise ResourceLimit(f"A* exceeded {node_cap} expansions")
        for action in task.actions:
            if not action.pre <= node.state:
                continue
            succ = (node.state - action.delete) | action.add
            g = node.g + action.cost
            if g >= best_g.get(succ, INF) or g >= incumbent_cost:
                continue
            best_g[succ] = g
            h = _additive_cost(task, succ)
            if h == INF:
                continue
            counter += 1
            heapq.heappush(open_heap, (g + h, h, counter, _Node(state=succ, parent=node, action=action, g=g)))
    if incumbent is None:
        raise Unsolvable("search space exhausted without reaching the goal")
    return _extract(incumbent, owner)


def optimal_plan_bfs(
    task: GroundedTask,
    start: WorldState | frozenset[str] | None = None,
    owner: str = "",
    state_cap: int = DEFAULT_BFS_STATE_CAP,
) -> Plan:
    """Uniform-cost reference search; guaranteed minimum-cost plan.

    Kept deliberately simple and independent of ``find_plan`` so the two
    can check each other.
    """
    init = _as_state(start) if start is not None else task.init
    counter = 0
    heap: list[tuple[int, int, _Node]] = [(0, counter, _Node(state=init))]
    seen: dict[frozenset[str], int] = {init: 0}
    expanded = 0
    while heap:
        g, _, node = heapq.heappop(heap)
        if seen.get(node.state, INF) < g:
            continue
        if task.goal <= node.state:
            return _extract(node, owner)
        expanded += 1
        if expanded > state_cap:
            raise ResourceLimit(f"reference search exceeded {state_cap} states")
        for action in task.actions:
            if not action.pre <= node.state:
                continue
            succ = (node.state - action.delete) | action.add
            g2 = g + action.cost
            if g2 >= seen.get(succ, INF):
                continue
            seen[succ] = g2
            counter += 1
            heapq.heappush(heap, (g2, counter, _Node(state=succ, parent=node, action=action, g=g2)))
    raise Unsolvable("goal unreachable from start state")


def validate_plan(
    task: GroundedTask,
    start: WorldState | frozenset[str] | None,
    plan: Plan,
) -> PlanValidation:
    """Check sequential applicability and that the final state meets the goal."""
    state = _as_state(start) if start is not None else task.init
    for i, action in enumerate(plan.steps):
        if not action.pre <= state:
            missing = sorted(action.pre - state)
            return PlanValidation(False, i, f"{action.name} requires {missing}")
        state = (state - action.delete) | action.add
    if not task.goal <= state:
        missing = sorted(task.goal - state)
        return PlanValidation(False, len(plan.steps), f"goal atoms unsatisfied: {missing}")
    return PlanValidation(True)


def project_plan(joint: Plan, agent: str, owner: str = "") -> Plan:
    """Order-preserving subsequence of the joint plan owned by one agent."""
    steps = tuple(a for a in joint.steps if a.agent == agent)
    return Plan(steps=steps, cost=sum(a.cost for a in steps), owner=owner or f"{joint.owner}/{agent}")


def split_plan(joint: Plan, robot: str, human: str) -> AgentPlanPair:
    return AgentPlanPair(
        joint=joint,
        robot_projection=project_plan(joint, robot),
        human_projection=project_plan(joint, human),
    )
