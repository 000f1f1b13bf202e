from __future__ import annotations

import pytest

from commonground import (
    ContextModel,
    Fact,
    bundled_scenarios,
    ground_task,
    load_scenario,
    parse_domain,
    parse_problem,
)
from commonground.pddl import GroundedAction, GroundedTask

MINI_DOMAIN = """
(define (domain mini)
  (:requirements :strips :typing)
  (:types agent block - object)
  (:predicates (clear ?b - block) (done ?b - block) (ready))
  (:action prep
    :parameters (?a - agent)
    :precondition (and)
    :effect (and (ready)))
  (:action finish
    :parameters (?a - agent ?b - block)
    :precondition (and (ready) (clear ?b))
    :effect (and (done ?b)))
)
"""

MINI_PROBLEM = """
(define (problem mini-1)
  (:domain mini)
  (:objects robot human - agent b1 b2 - block)
  (:init (clear b1) (clear b2))
  (:goal (and (done b1) (done b2)))
)
"""


@pytest.fixture(scope="session")
def mini_domain():
    return parse_domain(MINI_DOMAIN)


@pytest.fixture(scope="session")
def mini_problem(mini_domain):
    return parse_problem(MINI_PROBLEM, mini_domain)


@pytest.fixture(scope="session")
def mini_task(mini_domain, mini_problem):
    return ground_task(mini_domain, mini_problem)


@pytest.fixture(scope="session")
def scenario_paths():
    return bundled_scenarios()


@pytest.fixture(scope="session")
def dinner_scenarios(scenario_paths):
    return {name: load_scenario(path) for name, path in scenario_paths.items()}


@pytest.fixture(scope="session")
def dinner_domain(dinner_scenarios):
    return dinner_scenarios["dinner-neither-incomplete"].domain


@pytest.fixture(scope="session")
def dinner_problem(dinner_scenarios):
    return dinner_scenarios["dinner-neither-incomplete"].problem


@pytest.fixture(scope="session")
def dinner_task(dinner_domain, dinner_problem):
    return ground_task(dinner_domain, dinner_problem)


def make_task(atoms, actions, init, goal, agents=("human", "robot")) -> GroundedTask:
    """Hand-build a grounded task for planner tests."""
    ground = tuple(
        GroundedAction(
            name=name,
            schema=name.split("(")[0],
            args=tuple(name.split("(")[1].rstrip(")").split(",")) if "(" in name else (),
            agent=agent,
            pre=frozenset(pre),
            add=frozenset(add),
            delete=frozenset(delete),
        )
        for name, agent, pre, add, delete in actions
    )
    return GroundedTask(
        atoms=tuple(sorted(atoms)),
        actions=tuple(sorted(ground, key=lambda a: a.name)),
        init=frozenset(init),
        goal=frozenset(goal),
        agents=tuple(sorted(agents)),
    )


def fact(category, subject, relation, *args, polarity="positive", gloss="") -> Fact:
    return Fact(category=category, subject=subject, relation=relation,
                args=tuple(args), polarity=polarity, gloss=gloss)


def ctx(owner, *facts, revision=0) -> ContextModel:
    return ContextModel(owner=owner, revision=revision, facts=tuple(facts))
