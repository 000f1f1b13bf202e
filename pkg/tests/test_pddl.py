from __future__ import annotations

from itertools import product

import pytest

from commonground import (
    apply_action,
    ground_task,
    parse_domain,
    parse_problem,
    print_domain,
    print_problem,
)
from commonground.errors import (
    ArityMismatch,
    GoalIllTyped,
    GroundingExplosion,
    ParseError,
    PreconditionViolated,
    UnboundVariable,
    UnknownObject,
    UnknownPredicate,
    UnknownType,
)
from commonground.pddl import WorldState

from .conftest import MINI_DOMAIN, MINI_PROBLEM


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def enumerate_instantiations(domain, problem):
    """Brute-force count of type-consistent schema instantiations."""
    def objects_of(t):
        return sorted(n for n, ot in problem.objects if domain.is_subtype(ot, t))

    count = 0
    per_schema = {}
    for schema in domain.actions:
        pools = [objects_of(t) for _, t in schema.params]
        n = 1
        for pool in pools:
            n *= len(pool)
        per_schema[schema.name] = n
        count += n
    return count, per_schema


def reachability_oracle(init, actions):
    """Naive fixpoint: atoms achievable ignoring deletes; applicable actions."""
    reached = set(init)
    while True:
        added = False
        for a in actions:
            if a.pre <= reached and not a.add <= reached:
                reached |= a.add
                added = True
        if not added:
            break
    return {a.name for a in actions if a.pre <= reached}


def enumerate_pruned_count(domain, problem):
    """Fully independent grounding + pruning pipeline over raw structures."""
    def objects_of(t):
        return sorted(n for n, ot in problem.objects if domain.is_subtype(ot, t))

    candidates = []
    for schema in domain.actions:
        pools = [objects_of(t) for _, t in schema.params]
        index = {var: i for i, (var, _) in enumerate(schema.params)}
        for combo in product(*pools):
            def g(lit):
                pred, args = lit
                return (pred, tuple(combo[index[a]] for a in args))

            candidates.append(
                (f"{schema.name}({','.join(combo)})",
                 frozenset(g(l) for l in schema.pre),
                 frozenset(g(l) for l in schema.add))
            )
    reached = {(p, a) for p, a in problem.init}
    while True:
        added = False
        for _, pre, add in candidates:
            if pre <= reached and not add <= reached:
                reached |= add
                added = True
        if not added:
            break
    return sum(1 for _, pre, _ in candidates if pre <= reached)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def test_minimal_domain_parses():
    text = """
    (define (domain tiny)
      (:requirements :strips :typing)
      (:predicates (p))
      (:action go
        :parameters (?a - agent)
        :precondition (and)
        :effect (and (p))))
    """
    domain = parse_domain(text)
    assert domain.name == "tiny"
    assert len(domain.actions) == 1
    assert domain.actions[0].agent_param == "?a"


def test_undeclared_predicate_rejected():
    text = """
    (define (domain bad)
      (:predicates (p))
      (:action go
        :parameters (?a - agent)
        :precondition (and (q))
        :effect (and (p))))
    """
    with pytest.raises(UnknownPredicate):
        parse_domain(text)


def test_arity_mismatch_rejected():
    text = """
    (define (domain bad)
      (:types thing)
      (:predicates (p ?x - thing))
      (:action go
        :parameters (?a - agent ?x - thing)
        :precondition (and)
        :effect (and (p ?x ?x))))
    """
    with pytest.raises(ArityMismatch):
        parse_domain(text)


def test_unbound_variable_rejected():
    text = """
    (define (domain bad)
      (:types thing)
      (:predicates (p ?x - thing))
      (:action go
        :parameters (?a - agent)
        :precondition (and)
        :effect (and (p ?x))))
    """
    with pytest.raises(UnboundVariable):
        parse_domain(text)


def test_action_requires_agent_parameter():
    text = """
    (define (domain bad)
      (:types thing)
      (:predicates (p ?x - thing))
      (:action go
        :parameters (?x - thing)
        :precondition (and)
        :effect (and (p ?x))))
    """
    with pytest.raises(ParseError, match="agent"):
        parse_domain(text)


def test_type_cycle_rejected():
    text = """
    (define (domain bad)
      (:types a - b b - a)
      (:predicates (p))
      (:action go
        :parameters (?x - agent)
        :precondition (and)
        :effect (and (p))))
    """
    with pytest.raises(ParseError, match="cycle"):
        parse_domain(text)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_domain("(define (domain x) (:bogus))")
    assert err.value.line is not None


def test_dinner_domain_has_party_tasks(dinner_domain):
    names = {s.name for s in dinner_domain.actions}
    assert len(names) >= 4
    assert {"pick-dish", "cook", "set-table", "load-dishwasher"} <= names


def test_problem_empty_init_goal(mini_domain):
    problem = parse_problem(
        "(define (problem empty) (:domain mini) (:objects r - agent) (:init) (:goal (and)))",
        mini_domain,
    )
    assert problem.init == ()
    assert problem.goal == ()
    task = ground_task(mini_domain, problem)
    assert task.goal <= task.init  # trivially satisfied


def test_problem_unknown_object_in_goal(mini_domain):
    text = """
    (define (problem bad) (:domain mini)
      (:objects r - agent b - block)
      (:init)
      (:goal (and (done ghost))))
    """
    with pytest.raises(UnknownObject):
        parse_problem(text, mini_domain)


def test_problem_ill_typed_goal(mini_domain):
    text = """
    (define (problem bad) (:domain mini)
      (:objects r - agent b - block)
      (:init)
      (:goal (and (done r))))
    """
    with pytest.raises(GoalIllTyped):
        parse_problem(text, mini_domain)


def test_problem_undeclared_object_type(mini_domain):
    text = "(define (problem bad) (:domain mini) (:objects x - widget) (:init) (:goal (and)))"
    with pytest.raises(UnknownType):
        parse_problem(text, mini_domain)


def test_dinner_problem_has_both_agents(dinner_problem):
    objs = dict(dinner_problem.objects)
    assert objs.get("robot") == "agent"
    assert objs.get("human") == "agent"


# ---------------------------------------------------------------------------
# Pretty-printing round trip
# ---------------------------------------------------------------------------


def test_domain_print_parse_fixpoint(mini_domain, dinner_domain):
    for domain in (mini_domain, dinner_domain):
        reparsed = parse_domain(print_domain(domain))
        assert reparsed == domain
        assert print_domain(reparsed) == print_domain(domain)


def test_problem_print_parse_fixpoint(mini_domain, mini_problem, dinner_domain, dinner_problem):
    for domain, problem in ((mini_domain, mini_problem), (dinner_domain, dinner_problem)):
        reparsed = parse_problem(print_problem(problem), domain)
        assert reparsed == problem


# ---------------------------------------------------------------------------
# Grounding
# ---------------------------------------------------------------------------


def test_grounding_counts_small(mini_domain, mini_problem, mini_task):
    # prep: 2 agents; finish: 2 agents x 2 blocks.
    total, per_schema = enumerate_instantiations(mini_domain, mini_problem)
    assert per_schema == {"prep": 2, "finish": 4}
    assert len(mini_task.actions) == total  # all reachable here


def test_one_schema_two_objects_one_agent():
    domain = parse_domain("""
    (define (domain two)
      (:types thing)
      (:predicates (p ?x - thing))
      (:action go
        :parameters (?a - agent ?x - thing)
        :precondition (and)
        :effect (and (p ?x))))
    """)
    problem = parse_problem(
        "(define (problem t) (:domain two) (:objects r - agent x y - thing) (:init) (:goal (and)))",
        domain,
    )
    task = ground_task(domain, problem)
    assert len(task.actions) == 2
    assert [a.name for a in task.actions] == ["go(r,x)", "go(r,y)"]
    assert task.agent_of == {"go(r,x)": "r", "go(r,y)": "r"}


def test_unreachable_action_pruned():
    domain = parse_domain("""
    (define (domain gap)
      (:predicates (a) (b) (c))
      (:action step1
        :parameters (?x - agent)
        :precondition (and (a))
        :effect (and (b)))
      (:action step2
        :parameters (?x - agent)
        :precondition (and (c))
        :effect (and (a))))
    """)
    problem = parse_problem(
        "(define (problem g) (:domain gap) (:objects r - agent) (:init) (:goal (and)))",
        domain,
    )
    task = ground_task(domain, problem)
    # Nothing achieves (a) or (c) from an empty init; both actions prune.
    assert reachability_oracle(task.init, task.actions) == set()
    assert task.actions == ()
    # With (a) initially true, step1 survives, step2 still prunes.
    problem2 = parse_problem(
        "(define (problem g2) (:domain gap) (:objects r - agent) (:init (a)) (:goal (and)))",
        domain,
    )
    task2 = ground_task(domain, problem2)
    assert {a.name for a in task2.actions} == {"step1(r)"}


def test_dinner_grounding_matches_enumeration(dinner_domain, dinner_problem, dinner_task):
    assert len(dinner_task.actions) == enumerate_pruned_count(dinner_domain, dinner_problem)
    oracle_names = reachability_oracle(dinner_task.init, dinner_task.actions)
    assert {a.name for a in dinner_task.actions} == oracle_names


def test_grounding_cap():
    with pytest.raises(GroundingExplosion):
        ground_task(
            parse_domain(MINI_DOMAIN), parse_problem(MINI_PROBLEM, parse_domain(MINI_DOMAIN)),
            max_actions=3,
        )


def test_grounding_deterministic(dinner_domain, dinner_problem):
    a = ground_task(dinner_domain, dinner_problem)
    b = ground_task(dinner_domain, dinner_problem)
    assert a.to_json() == b.to_json()
    assert a.to_json().encode() == b.to_json().encode()


def test_atom_universe_is_full_typed_base(dinner_task):
    # three dishes, two of them servable to one base guest
    assert "picked(steak)" in dinner_task.atoms
    assert "served(bob,paella)" in dinner_task.atoms
    assert "table-set" in dinner_task.atoms


# ---------------------------------------------------------------------------
# apply_action
# ---------------------------------------------------------------------------


def test_apply_empty_effects_identity(mini_task):
    state = WorldState(frozenset({"ready"}))
    noop = mini_task.actions[0]
    if noop.add or noop.delete:
        from dataclasses import replace

        noop = replace(noop, pre=frozenset(), add=frozenset(), delete=frozenset())
    assert apply_action(state, noop).true_atoms == state.true_atoms


def test_apply_add_delete():
    from .conftest import make_task

    task = make_task(
        atoms=["p", "q"],
        actions=[("swap(r)", "r", ["q"], ["p"], ["q"])],
        init=["q"],
        goal=["p"],
    )
    out = apply_action(task.initial_state(), task.actions[0])
    assert out.true_atoms == frozenset({"p"})


def test_apply_violated_precondition():
    from .conftest import make_task

    task = make_task(
        atoms=["p", "q"],
        actions=[("swap(r)", "r", ["q"], ["p"], ["q"])],
        init=[],
        goal=[],
    )
    with pytest.raises(PreconditionViolated):
        apply_action(WorldState(frozenset()), task.actions[0])


def test_apply_full_plan_reaches_goal(dinner_task):
    from commonground import find_plan, validate_plan

    plan = find_plan(dinner_task)
    state = dinner_task.initial_state()
    for step in plan.steps:
        state = apply_action(state, step)
    assert dinner_task.goal <= state.true_atoms
    assert validate_plan(dinner_task, dinner_task.init, plan).valid


def test_apply_never_leaves_universe(dinner_task):
    state = dinner_task.initial_state()
    universe = set(dinner_task.atoms)
    assert state.true_atoms <= universe
    for action in dinner_task.actions:
        if action.pre <= state.true_atoms:
            state = apply_action(state, action)
            assert state.true_atoms <= universe
