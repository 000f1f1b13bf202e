from __future__ import annotations

import random

import pytest

from commonground import find_plan, optimal_plan_bfs, project_plan, validate_plan
from commonground.errors import ResourceLimit, Unsolvable
from commonground.pddl import GroundedAction, GroundedTask
from commonground.planning import split_plan

from .conftest import make_task


def random_task(rng: random.Random, n_atoms=8, n_actions=10) -> GroundedTask:
    """Random small STRIPS task; state space at most 2^n_atoms."""
    atoms = [f"a{i}" for i in range(n_atoms)]
    actions = []
    for i in range(n_actions):
        pre = frozenset(rng.sample(atoms, rng.randint(0, 2)))
        add = frozenset(rng.sample(atoms, rng.randint(1, 3)))
        delete = frozenset(rng.sample(atoms, rng.randint(0, 2))) - add
        agent = rng.choice(["human", "robot"])
        actions.append(GroundedAction(
            name=f"op{i}({agent})", schema=f"op{i}", args=(agent,), agent=agent,
            pre=pre, add=add, delete=delete,
        ))
    init = frozenset(rng.sample(atoms, rng.randint(0, 3)))
    goal = frozenset(rng.sample(atoms, rng.randint(1, 3)))
    return GroundedTask(
        atoms=tuple(atoms),
        actions=tuple(sorted(actions, key=lambda a: a.name)),
        init=init,
        goal=goal,
        agents=("human", "robot"),
    )


def test_goal_already_satisfied_empty_plan(mini_task):
    start = mini_task.goal | mini_task.init
    plan = find_plan(mini_task, start)
    assert plan.steps == ()
    assert plan.cost == 0
    assert optimal_plan_bfs(mini_task, start).steps == ()


def test_single_action_plan():
    task = make_task(
        atoms=["p"],
        actions=[("hit(r)", "r", [], ["p"], [])],
        init=[],
        goal=["p"],
    )
    plan = find_plan(task)
    assert plan.step_names == ("hit(r)",)
    assert plan.cost == 1


def test_two_action_chain_bfs():
    task = make_task(
        atoms=["p", "q", "goal"],
        actions=[
            ("first(r)", "r", [], ["p"], []),
            ("second(r)", "r", ["p"], ["q"], []),
            ("third(r)", "r", ["q"], ["goal"], []),
        ],
        init=[],
        goal=["goal"],
    )
    assert optimal_plan_bfs(task).step_names == ("first(r)", "second(r)", "third(r)")


def test_unsolvable_raises():
    task = make_task(
        atoms=["p", "q"],
        actions=[("hit(r)", "r", ["q"], ["p"], [])],
        init=[],
        goal=["p"],
    )
    with pytest.raises(Unsolvable):
        find_plan(task)
    with pytest.raises(Unsolvable):
        optimal_plan_bfs(task)


def test_resource_limit():
    rng = random.Random(3)
    task = random_task(rng, n_atoms=10, n_actions=14)
    with pytest.raises((ResourceLimit, Unsolvable)):
        find_plan(task, node_cap=1)


def test_dinner_plan_matches_bfs_cost(dinner_task):
    assert find_plan(dinner_task).cost == optimal_plan_bfs(dinner_task).cost


def test_oracle_equivalence_on_random_tasks():
    rng = random.Random(20240817)
    solvable = 0
    attempts = 0
    while solvable < 60 and attempts < 400:
        attempts += 1
        task = random_task(rng)
        try:
            reference = optimal_plan_bfs(task)
        except Unsolvable:
            with pytest.raises(Unsolvable):
                find_plan(task)
            continue
        plan = find_plan(task)
        assert plan.cost == reference.cost, f"suboptimal plan on attempt {attempts}"
        assert validate_plan(task, task.init, plan).valid
        solvable += 1
    assert solvable >= 60


def test_find_plan_deterministic(dinner_task):
    first = find_plan(dinner_task)
    second = find_plan(dinner_task)
    assert first.step_names == second.step_names


def test_validate_plan_cases(mini_task):
    plan = find_plan(mini_task)
    assert validate_plan(mini_task, mini_task.init, plan).valid
    if len(plan.steps) >= 2:
        from commonground import Plan

        swapped = Plan(steps=(plan.steps[1], plan.steps[0]) + plan.steps[2:],
                       cost=plan.cost, owner=plan.owner)
        result = validate_plan(mini_task, mini_task.init, swapped)
        assert not result.valid
        assert result.step_index == 0
        assert "requires" in result.reason


def test_validate_empty_plan_goal_unmet(mini_task):
    from commonground import Plan

    result = validate_plan(mini_task, mini_task.init, Plan(steps=(), cost=0))
    assert not result.valid
    assert result.step_index == 0
    assert "goal" in result.reason


def test_projection_partition(dinner_task):
    joint = find_plan(dinner_task)
    pair = split_plan(joint, "robot", "human")
    assert all(a.agent == "robot" for a in pair.robot_projection.steps)
    assert all(a.agent == "human" for a in pair.human_projection.steps)
    # Order-preserving partition: merging the projections by joint order
    # must reproduce the joint step sequence.
    merged = sorted(
        [(i, a) for i, a in enumerate(joint.steps)],
        key=lambda pair: pair[0],
    )
    assert [a.name for _, a in merged] == list(joint.step_names)
    robot_names = [a.name for a in joint.steps if a.agent == "robot"]
    human_names = [a.name for a in joint.steps if a.agent == "human"]
    assert list(pair.robot_projection.step_names) == robot_names
    assert list(pair.human_projection.step_names) == human_names
    assert len(pair.robot_projection.steps) + len(pair.human_projection.steps) == len(joint.steps)


def test_project_all_robot_gives_empty_human():
    task = make_task(
        atoms=["p", "q"],
        actions=[("one(robot)", "robot", [], ["p"], []),
                 ("two(robot)", "robot", ["p"], ["q"], [])],
        init=[],
        goal=["q"],
    )
    joint = find_plan(task)
    assert project_plan(joint, "human").steps == ()
    assert project_plan(joint, "robot").step_names == joint.step_names


def test_dinner_human_projection_contains_table_setting(dinner_task):
    joint = find_plan(dinner_task)
    pair = split_plan(joint, "robot", "human")
    assert "set-table(human)" in pair.human_projection.step_names


def test_plan_text_format(dinner_task):
    plan = find_plan(dinner_task)
    lines = plan.to_text().splitlines()
    assert len(lines) == len(plan.steps)
    for i, line in enumerate(lines):
        index, agent, name = line.split(" ", 2)
        assert int(index) == i
        assert name == plan.steps[i].name
        assert agent == plan.steps[i].agent


def test_random_plans_always_validate():
    rng = random.Random(99)
    checked = 0
    for _ in range(120):
        task = random_task(rng)
        try:
            plan = find_plan(task)
        except Unsolvable:
            continue
        assert validate_plan(task, task.init, plan).valid
        checked += 1
    assert checked >= 30
