"""Fact-set contexts and their compilation into planning models.

An agent's context is a set of structured facts; its identity-relevant
part is the canonical key (category, subject, relation, args, polarity),
so two agents agree on a fact even when their natural-language glosses
differ. Edit distance between contexts is symmetric-difference
cardinality over keys.

``compile_context`` deterministically rewrites a base PDDL model with a
context's facts and grounds the result: object facts add objects, init
facts add or remove initial literals, goal and preference facts extend
the goal, and negative capability facts forbid all grounded actions of a
schema for an agent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import CompileConflict, UnknownVocabulary
from .pddl import (
    GroundedAction,
    PddlDomain,
    PddlProblem,
    atom_str,
    ground_task,
    prune_unreachable,
)

CATEGORIES = ("object", "init", "goal", "capability", "preference")
POSITIVE = "positive"
NEGATIVE = "negative"

# Categories whose facts may depend on objects introduced by object facts;
# transferring in this order never breaks vocabulary closure.
TRANSFER_ORDER = {"object": 0, "init": 1, "capability": 2, "goal": 3, "preference": 4}

# Who most plausibly explains a deviation first: hard action bans beat
# goals, goals beat world description.
RELEVANCE_ORDER = {"capability": 0, "goal": 1, "preference": 1, "init": 2, "object": 3}


@dataclass(frozen=True)
class Fact:
    category: str
    subject: str
    relation: str
    args: tuple[str, ...] = ()
    polarity: str = POSITIVE
    gloss: str = ""

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown fact category {self.category!r}")
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"polarity must be positive or negative, got {self.polarity!r}")
        object.__setattr__(self, "subject", self.subject.strip().lower())
        object.__setattr__(self, "relation", self.relation.strip().lower())
        object.__setattr__(self, "args", tuple(a.strip().lower() for a in self.args))
        if not self.gloss:
            object.__setattr__(self, "gloss", default_gloss(self))

    @property
    def key(self) -> str:
        sign = "+" if self.polarity == POSITIVE else "-"
        return " ".join((self.category, self.subject, self.relation, *self.args, sign))

    @property
    def body(self) -> str:
        """Key without polarity; positive/negative twins share a body."""
        return " ".join((self.category, self.subject, self.relation, *self.args))

    def literal(self) -> str:
        """Ground atom this fact compiles to (init/goal/preference facts)."""
        return atom_str(self.relation, (self.subject, *self.args))

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "subject": self.subject,
            "relation": self.relation,
            "args": list(self.args),
            "polarity": self.polarity,
            "gloss": self.gloss,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Fact":
        return cls(
            category=record["category"],
            subject=record["subject"],
            relation=record["relation"],
            args=tuple(record.get("args", ())),
            polarity=record.get("polarity", POSITIVE),
            gloss=record.get("gloss", ""),
        )


def default_gloss(fact: Fact) -> str:
    """Deterministic readable sentence for facts that arrive without one."""
    extra = f" {' '.join(fact.args)}" if fact.args else ""
    if fact.category == "object":
        return f"{fact.subject} is a {fact.relation}"
    if fact.category == "capability":
        verb = "can" if fact.polarity == POSITIVE else "cannot"
        return f"{fact.subject} {verb} {fact.relation}{extra}"
    if fact.category in ("goal", "preference"):
        return f"{fact.subject} should be {fact.relation}{extra}"
    if fact.polarity == NEGATIVE:
        return f"{fact.subject} is not {fact.relation}{extra}"
    return f"{fact.subject} is {fact.relation}{extra}"


@dataclass(frozen=True)
class ContextModel:
    owner: str
    revision: int = 0
    facts: tuple[Fact, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.facts, key=lambda f: f.key))
        deduped = []
        seen = set()
        for f in ordered:
            if f.key not in seen:
                seen.add(f.key)
                deduped.append(f)
        object.__setattr__(self, "facts", tuple(deduped))

    @property
    def keys(self) -> frozenset[str]:
        return frozenset(f.key for f in self.facts)

    def get(self, key: str) -> Fact | None:
        for f in self.facts:
            if f.key == key:
                return f
        return None

    def __contains__(self, fact: Fact) -> bool:
        return fact.key in self.keys

    def __len__(self) -> int:
        return len(self.facts)


def edit_distance(a: ContextModel, b: ContextModel) -> int:
    """Facts to add or drop to make the two contexts agree (|A Δ B|)."""
    return len(a.keys ^ b.keys)


def union(a: ContextModel, b: ContextModel, owner: str | None = None) -> ContextModel:
    """Key-union of two contexts; twin keys are identical facts by construction."""
    merged = {f.key: f for f in b.facts}
    merged.update({f.key: f for f in a.facts})
    return ContextModel(owner=owner or a.owner, revision=0, facts=tuple(merged.values()))


def add_facts(c: ContextModel, new_facts) -> ContextModel:
    """Context with the facts added; revision bumps only if anything changed."""
    additions = [f for f in new_facts if f.key not in c.keys]
    if not additions:
        return c
    return replace(c, revision=c.revision + 1, facts=c.facts + tuple(additions))


# ---------------------------------------------------------------------------
# Vocabulary closure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Names legal in facts against a base model (plus context-added objects)."""

    types: frozenset[str]
    predicates: dict[str, int]  # name -> arity
    schemas: frozenset[str]
    objects: dict[str, str]  # name -> type

    @classmethod
    def from_model(cls, domain: PddlDomain, problem: PddlProblem) -> "Vocabulary":
        return cls(
            types=frozenset(dict(domain.types)) | {"object"},
            predicates={name: len(params) for name, params in domain.predicates},
            schemas=frozenset(s.name for s in domain.actions),
            objects=dict(problem.objects),
        )

    def extended_with(self, facts) -> "Vocabulary":
        objects = dict(self.objects)
        for f in facts:
            if f.category == "object" and f.relation in self.types:
                objects.setdefault(f.subject, f.relation)
        return replace(self, objects=objects)

    def fact_errors(self, fact: Fact) -> list[str]:
        errors = []
        if fact.category == "object":
            if fact.relation not in self.types:
                errors.append(f"unknown type {fact.relation}")
            if fact.args:
                errors.append("object facts take no extra arguments")
            if fact.subject in self.objects and fact.relation != self.objects[fact.subject]:
                errors.append(
                    f"{fact.subject} already declared with type {self.objects[fact.subject]}"
                )
            return errors
        if fact.category == "capability":
            if fact.relation not in self.schemas:
                errors.append(f"unknown action {fact.relation}")
            if fact.subject not in self.objects:
                errors.append(f"unknown agent {fact.subject}")
            return errors
        arity = self.predicates.get(fact.relation)
        if arity is None:
            errors.append(f"unknown predicate {fact.relation}")
        elif arity != 1 + len(fact.args):
            errors.append(f"{fact.relation} expects {arity} arguments, got {1 + len(fact.args)}")
        for name in (fact.subject, *fact.args):
            if name not in self.objects:
                errors.append(f"unknown object {name}")
        return errors


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompiledModel:
    domain: PddlDomain
    problem: PddlProblem
    task: GroundedTask
    source_revision: int

    def belief_state(self, world: frozenset[str]) -> frozenset[str]:
        """What this model takes to be true now.

        Dynamic atoms (touched by some action effect) come from the
        observed world; static atoms come from the model's own initial
        beliefs. Atoms outside the model's vocabulary are invisible.
        """
        universe = frozenset(self.task.atoms)
        static = self.task.static_atoms
        return (self.task.init & static) | (world & (universe - static))


def compile_context(
    base_domain: PddlDomain,
    base_problem: PddlProblem,
    context: ContextModel,
    max_actions: int | None = None,
) -> CompiledModel:
    """Deterministically rebuild and ground the model implied by a context."""
    vocab = Vocabulary.from_model(base_domain, base_problem).extended_with(context.facts)

    bodies: dict[str, Fact] = {}
    for f in context.facts:
        twin = bodies.get(f.body)
        if twin is not None and twin.polarity != f.polarity:
            raise CompileConflict(f"context holds both polarities of: {f.body}")
        bodies[f.body] = f
        problems = vocab.fact_errors(f)
        if problems:
            raise UnknownVocabulary(f"fact '{f.key}': {'; '.join(problems)}")

    objects = dict(base_problem.objects)
    init = set(base_problem.init)
    goal = set(base_problem.goal)
    forbidden: set[tuple[str, str]] = set()  # (schema, agent)

    for f in sorted(context.facts, key=lambda f: f.key):
        lit = (f.relation, (f.subject, *f.args))
        if f.category == "object":
            objects[f.subject] = f.relation
        elif f.category == "init":
            if f.polarity == POSITIVE:
                init.add(lit)
            else:
                init.discard(lit)
        elif f.category in ("goal", "preference"):
            if f.polarity == POSITIVE:
                goal.add(lit)
            else:
                goal.discard(lit)
        elif f.category == "capability" and f.polarity == NEGATIVE:
            forbidden.add((f.relation, f.subject))

    problem = PddlProblem(
        name=base_problem.name,
        domain_name=base_problem.domain_name,
        objects=tuple(sorted(objects.items())),
        init=tuple(sorted(init)),
        goal=tuple(sorted(goal)),
    )
    kwargs = {"max_actions": max_actions} if max_actions is not None else {}
    task = ground_task(base_domain, problem, **kwargs)
    if forbidden:
        kept = tuple(a for a in task.actions if (a.schema, a.agent) not in forbidden)
        task = prune_unreachable(replace(task, actions=kept, _by_name={}))
    return CompiledModel(
        domain=base_domain,
        problem=problem,
        task=task,
        source_revision=context.revision,
    )


# ---------------------------------------------------------------------------
# Deviation relevance
# ---------------------------------------------------------------------------


def rank_explaining_facts(
    candidates,
    expected: GroundedAction | None,
    observed: GroundedAction | None,
) -> list[Fact]:
    """Facts that plausibly explain why ``observed`` happened instead of
    ``expected``: capability facts banning either action, goal or
    preference facts an action serves, init facts in an action's
    precondition, and object facts naming an argument. Ranked by
    category priority then key; deterministic for equal inputs.
    """
    actions = [a for a in (expected, observed) if a is not None]

    def non_agent_args(a: GroundedAction) -> set[str]:
        return {x for x in a.args if x != a.agent}

    def relevant(f: Fact) -> bool:
        if f.category == "capability":
            # Same schema for either agent: "I did it because you must not"
            # is as explanatory as a ban on the observed action itself.
            return any(f.relation == a.schema for a in actions)
        if f.category in ("goal", "preference"):
            lit = f.literal()
            names = {f.subject, *f.args}
            return any(lit in a.add or names & non_agent_args(a) for a in actions)
        if f.category == "init":
            lit = f.literal()
            return any(lit in a.pre for a in actions)
        if f.category == "object":
            return any(f.subject in a.args for a in actions)
        return False

    hits = [f for f in candidates if relevant(f)]
    hits.sort(key=lambda f: (RELEVANCE_ORDER[f.category], f.key))
    return hits


def with_object_dependencies(batch: list[Fact], candidates) -> list[Fact]:
    """Prepend object facts the batch's names depend on (one utterance must
    stay vocabulary-closed on the receiving side)."""
    by_subject = {f.subject: f for f in candidates if f.category == "object"}
    names: set[str] = set()
    for f in batch:
        names.add(f.subject)
        names.update(f.args)
    deps = [by_subject[n] for n in sorted(names) if n in by_subject]
    out = [f for f in deps if f.key not in {b.key for b in batch}]
    return out + batch


def transfer_sorted(facts) -> list[Fact]:
    """Dependency-safe order for one-at-a-time transfer: objects first."""
    return sorted(facts, key=lambda f: (TRANSFER_ORDER[f.category], f.key))
