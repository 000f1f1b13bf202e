"""STRIPS+typing PDDL: parsing, pretty-printing, and grounding.

Supported fragment: typed objects, positive conjunctive preconditions,
add/delete effects. Every action schema must carry exactly one parameter
of type ``agent`` (or a subtype); grounding tags each grounded action
with the object bound to that parameter so one joint model can be
projected into per-agent plans.

Atoms and grounded actions are plain canonical strings
(``pred(a,b)`` / ``schema(a,b)``), ordered lexicographically everywhere,
so identical inputs always ground to byte-identical tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
import json

from .errors import (
    ArityMismatch,
    GoalIllTyped,
    GroundingExplosion,
    LexError,
    ParseError,
    PreconditionViolated,
    UnboundVariable,
    UnknownObject,
    UnknownPredicate,
    UnknownType,
)

ROOT_TYPE = "object"
AGENT_TYPE = "agent"
SUPPORTED_REQUIREMENTS = {":strips", ":typing"}

DEFAULT_MAX_ACTIONS = 200_000


def atom_str(predicate: str, args: tuple[str, ...]) -> str:
    """Canonical ground atom rendering, e.g. ``served(alice,paella)``."""
    return f"{predicate}({','.join(args)})" if args else predicate


# ---------------------------------------------------------------------------
# Lexing / s-expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(Token(ch, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            word = text[start:i].lower()
            if any(c in word for c in "\"'`"):
                raise LexError(f"illegal character in token {word!r}", line, start_col)
            tokens.append(Token(word, line, start_col))
    return tokens


def _parse_sexpr(tokens: list[Token]) -> list:
    """One top-level s-expression; nested lists of Tokens."""

    def parse(pos: int):
        tok = tokens[pos]
        if tok.text == "(":
            items = []
            pos += 1
            while pos < len(tokens) and tokens[pos].text != ")":
                node, pos = parse(pos)
                items.append(node)
            if pos >= len(tokens):
                raise ParseError("unbalanced parenthesis", tok.line, tok.column)
            return items, pos + 1
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.column)
        return tok, pos + 1

    if not tokens:
        raise ParseError("empty input")
    node, end = parse(0)
    if end != len(tokens):
        trailing = tokens[end]
        raise ParseError("trailing content after expression", trailing.line, trailing.column)
    if not isinstance(node, list):
        raise ParseError("expected a parenthesized expression", tokens[0].line, tokens[0].column)
    return node


def _sym(node, what: str) -> Token:
    if not isinstance(node, Token):
        first = node[0] if node else None
        line = first.line if isinstance(first, Token) else None
        col = first.column if isinstance(first, Token) else None
        raise ParseError(f"expected {what}, got a list", line, col)
    return node


def _typed_pairs(nodes: list, what: str) -> list[tuple[str, str]]:
    """Parse a PDDL typed list ``a b - t c - s d`` into (name, type) pairs.

    Trailing names without a ``- type`` marker default to ``object``.
    """
    pairs: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(nodes):
        tok = _sym(nodes[i], what)
        if tok.text == "-":
            if i + 1 >= len(nodes):
                raise ParseError("dangling '-' in typed list", tok.line, tok.column)
            type_tok = _sym(nodes[i + 1], "type name")
            if not pending:
                raise ParseError("type without names in typed list", tok.line, tok.column)
            pairs.extend((name, type_tok.text) for name in pending)
            pending = []
            i += 2
        else:
            pending.append(tok.text)
            i += 1
    pairs.extend((name, ROOT_TYPE) for name in pending)
    return pairs


# ---------------------------------------------------------------------------
# Domain / problem model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]  # (?var, type), declaration order
    agent_param: str
    pre: tuple[tuple[str, tuple[str, ...]], ...]
    add: tuple[tuple[str, tuple[str, ...]], ...]
    delete: tuple[tuple[str, tuple[str, ...]], ...]


@dataclass(frozen=True)
class PddlDomain:
    name: str
    types: tuple[tuple[str, str], ...]  # (type, parent), sorted
    predicates: tuple[tuple[str, tuple[str, ...]], ...]  # (name, param types), sorted
    actions: tuple[ActionSchema, ...]  # sorted by name

    @property
    def type_parent(self) -> dict[str, str]:
        return dict(self.types)

    @property
    def predicate_arity(self) -> dict[str, tuple[str, ...]]:
        return dict(self.predicates)

    def is_subtype(self, t: str, ancestor: str) -> bool:
        if ancestor == ROOT_TYPE:
            return True
        parents = self.type_parent
        while True:
            if t == ancestor:
                return True
            if t == ROOT_TYPE or t not in parents:
                return False
            t = parents[t]

    def schema(self, name: str) -> ActionSchema | None:
        for schema in self.actions:
            if schema.name == name:
                return schema
        return None


@dataclass(frozen=True)
class PddlProblem:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]  # (name, type), sorted
    init: tuple[tuple[str, tuple[str, ...]], ...]  # ground literals, sorted
    goal: tuple[tuple[str, tuple[str, ...]], ...]

    @property
    def object_type(self) -> dict[str, str]:
        return dict(self.objects)


@dataclass(frozen=True)
class GroundedAction:
    name: str  # schema(arg,...)
    schema: str
    args: tuple[str, ...]
    agent: str
    pre: frozenset[str]
    add: frozenset[str]
    delete: frozenset[str]
    cost: int = 1

    def gloss(self) -> str:
        """Readable rendering used in dialogue templates, e.g. ``cook the steak``."""
        rest = [a for a in self.args if a != self.agent]
        return f"{self.schema} {' '.join(rest)}".strip()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "agent": self.agent,
            "pre": sorted(self.pre),
            "add": sorted(self.add),
            "del": sorted(self.delete),
            "cost": self.cost,
        }


@dataclass(frozen=True)
class WorldState:
    true_atoms: frozenset[str]

    def satisfies(self, atoms) -> bool:
        return set(atoms) <= self.true_atoms


@dataclass(frozen=True)
class GroundedTask:
    atoms: tuple[str, ...]  # full typed universe, sorted
    actions: tuple[GroundedAction, ...]  # reachability-pruned, sorted by name
    init: frozenset[str]
    goal: frozenset[str]
    agents: tuple[str, ...]
    _by_name: dict = field(default_factory=dict, compare=False, repr=False)

    def action(self, name: str) -> GroundedAction | None:
        if not self._by_name:
            self._by_name.update({a.name: a for a in self.actions})
        return self._by_name.get(name)

    @property
    def agent_of(self) -> dict[str, str]:
        return {a.name: a.agent for a in self.actions}

    @property
    def static_atoms(self) -> frozenset[str]:
        touched: set[str] = set()
        for a in self.actions:
            touched |= a.add | a.delete
        return frozenset(self.atoms) - touched

    def initial_state(self) -> WorldState:
        return WorldState(self.init)

    def to_json(self) -> str:
        payload = {
            "atoms": list(self.atoms),
            "actions": [a.to_dict() for a in self.actions],
            "init": sorted(self.init),
            "goal": sorted(self.goal),
            "agents": list(self.agents),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Domain parsing
# ---------------------------------------------------------------------------


def parse_domain(text: str) -> PddlDomain:
    """Parse PDDL domain text into a validated, canonically ordered domain."""
    root = _parse_sexpr(_tokenize(text))
    if not root or _sym(root[0], "define").text != "define":
        raise ParseError("domain must start with (define ...)")
    head = root[1]
    if not isinstance(head, list) or len(head) != 2 or _sym(head[0], "domain").text != "domain":
        raise ParseError("expected (domain <name>)")
    name = _sym(head[1], "domain name").text

    types: dict[str, str] = {}
    predicates: dict[str, tuple[str, ...]] = {}
    schemas: list[ActionSchema] = []

    for section in root[2:]:
        if not isinstance(section, list) or not section:
            raise ParseError("malformed domain section")
        key = _sym(section[0], "section keyword")
        if key.text == ":requirements":
            for req in section[1:]:
                tok = _sym(req, "requirement")
                if tok.text not in SUPPORTED_REQUIREMENTS:
                    raise ParseError(f"unsupported requirement {tok.text}", tok.line, tok.column)
        elif key.text == ":types":
            for type_name, parent in _typed_pairs(section[1:], "type name"):
                if type_name in types and types[type_name] != parent:
                    raise ParseError(f"type {type_name} declared twice with different parents",
                                     key.line, key.column)
                types[type_name] = parent
        elif key.text == ":predicates":
            for decl in section[1:]:
                if not isinstance(decl, list) or not decl:
                    raise ParseError("malformed predicate declaration", key.line, key.column)
                pred = _sym(decl[0], "predicate name")
                if pred.text in predicates:
                    raise ParseError(f"duplicate predicate {pred.text}", pred.line, pred.column)
                params = _typed_pairs(decl[1:], "predicate parameter")
                for var, _ in params:
                    if not var.startswith("?"):
                        raise ParseError(f"predicate parameter {var} must be a ?variable",
                                         pred.line, pred.column)
                predicates[pred.text] = tuple(t for _, t in params)
        elif key.text == ":action":
            schemas.append(_parse_action(section, key))
        else:
            raise ParseError(f"unsupported domain section {key.text}", key.line, key.column)

    # Parent types are implicitly declared; agent and the root always exist.
    for parent in list(types.values()):
        types.setdefault(parent, ROOT_TYPE)
    types.setdefault(AGENT_TYPE, ROOT_TYPE)
    types.pop(ROOT_TYPE, None)
    _check_acyclic(types)

    domain = PddlDomain(
        name=name,
        types=tuple(sorted(types.items())),
        predicates=tuple(sorted(predicates.items())),
        actions=tuple(sorted(_validate_schemas(schemas, types, predicates), key=lambda s: s.name)),
    )
    return domain


def _check_acyclic(types: dict[str, str]) -> None:
    for start in types:
        seen = {start}
        t = types[start]
        while t != ROOT_TYPE:
            if t in seen:
                raise ParseError(f"type hierarchy cycle through {t}")
            seen.add(t)
            t = types.get(t, ROOT_TYPE)


def _parse_literal_list(node, what: str) -> list[tuple[Token, list]]:
    """Flatten () | <literal> | (and <literal>...) into a literal list."""
    if not isinstance(node, list):
        raise ParseError(f"malformed {what}")
    if not node:
        return []
    head = node[0]
    if isinstance(head, Token) and head.text == "and":
        items = node[1:]
    else:
        items = [node]
    out = []
    for item in items:
        if not isinstance(item, list) or not item:
            raise ParseError(f"malformed literal in {what}")
        out.append((_sym(item[0], "predicate name"), item[1:]))
    return out


def _parse_action(section: list, key: Token) -> ActionSchema:
    if len(section) < 2:
        raise ParseError("action missing name", key.line, key.column)
    name = _sym(section[1], "action name").text
    fields: dict[str, object] = {}
    i = 2
    while i < len(section):
        tag = _sym(section[i], "action keyword")
        if tag.text not in (":parameters", ":precondition", ":effect"):
            raise ParseError(f"unsupported action field {tag.text}", tag.line, tag.column)
        if i + 1 >= len(section):
            raise ParseError(f"{tag.text} missing value", tag.line, tag.column)
        fields[tag.text] = section[i + 1]
        i += 2
    if ":parameters" not in fields or not isinstance(fields[":parameters"], list):
        raise ParseError(f"action {name} missing :parameters list", key.line, key.column)

    params = _typed_pairs(fields[":parameters"], "action parameter")  # type: ignore[arg-type]
    for var, _ in params:
        if not var.startswith("?"):
            raise ParseError(f"action parameter {var} must be a ?variable", key.line, key.column)

    pre: list[tuple[str, tuple[str, ...]]] = []
    add: list[tuple[str, tuple[str, ...]]] = []
    delete: list[tuple[str, tuple[str, ...]]] = []

    for tok, args in _parse_literal_list(fields.get(":precondition", []), "precondition"):
        if tok.text == "not":
            raise ParseError("negative preconditions are not supported", tok.line, tok.column)
        pre.append((tok.text, tuple(_sym(a, "argument").text for a in args)))
    for tok, args in _parse_literal_list(fields.get(":effect", []), "effect"):
        if tok.text == "not":
            if len(args) != 1 or not isinstance(args[0], list) or not args[0]:
                raise ParseError("malformed (not ...) effect", tok.line, tok.column)
            inner = args[0]
            pred = _sym(inner[0], "predicate name")
            delete.append((pred.text, tuple(_sym(a, "argument").text for a in inner[1:])))
        else:
            add.append((tok.text, tuple(_sym(a, "argument").text for a in args)))

    if set(add) & set(delete):
        raise ParseError(f"action {name} adds and deletes the same literal", key.line, key.column)

    return ActionSchema(
        name=name,
        params=tuple(params),
        agent_param="",  # filled during validation
        pre=tuple(sorted(pre)),
        add=tuple(sorted(add)),
        delete=tuple(sorted(delete)),
    )


def _validate_schemas(
    schemas: list[ActionSchema],
    types: dict[str, str],
    predicates: dict[str, tuple[str, ...]],
) -> list[ActionSchema]:
    def subtype(t: str, ancestor: str) -> bool:
        while True:
            if t == ancestor or ancestor == ROOT_TYPE:
                return True
            if t == ROOT_TYPE:
                return False
            t = types.get(t, ROOT_TYPE)

    seen_names: set[str] = set()
    validated = []
    for schema in schemas:
        if schema.name in seen_names:
            raise ParseError(f"duplicate action {schema.name}")
        seen_names.add(schema.name)
        bound = {}
        for var, t in schema.params:
            if var in bound:
                raise ParseError(f"duplicate parameter {var} in action {schema.name}")
            if t != ROOT_TYPE and t not in types:
                raise UnknownType(f"action {schema.name}: unknown type {t}")
            bound[var] = t
        agent_vars = [var for var, t in schema.params if subtype(t, AGENT_TYPE)]
        if len(agent_vars) != 1:
            raise ParseError(
                f"action {schema.name} must have exactly one agent-typed parameter, found {len(agent_vars)}"
            )
        for group in (schema.pre, schema.add, schema.delete):
            for pred, args in group:
                if pred not in predicates:
                    raise UnknownPredicate(f"action {schema.name}: unknown predicate {pred}")
                if len(args) != len(predicates[pred]):
                    raise ArityMismatch(
                        f"action {schema.name}: {pred} expects {len(predicates[pred])} arguments, got {len(args)}"
                    )
                for arg in args:
                    if not arg.startswith("?"):
                        raise UnboundVariable(
                            f"action {schema.name}: constant {arg} not allowed; use a parameter"
                        )
                    if arg not in bound:
                        raise UnboundVariable(f"action {schema.name}: unbound variable {arg}")
        validated.append(
            ActionSchema(
                name=schema.name,
                params=schema.params,
                agent_param=agent_vars[0],
                pre=schema.pre,
                add=schema.add,
                delete=schema.delete,
            )
        )
    return validated


# ---------------------------------------------------------------------------
# Problem parsing
# ---------------------------------------------------------------------------


def parse_problem(text: str, domain: PddlDomain) -> PddlProblem:
    """Parse problem text and validate it against an already parsed domain."""
    root = _parse_sexpr(_tokenize(text))
    if not root or _sym(root[0], "define").text != "define":
        raise ParseError("problem must start with (define ...)")
    head = root[1]
    if not isinstance(head, list) or len(head) != 2 or _sym(head[0], "problem").text != "problem":
        raise ParseError("expected (problem <name>)")
    name = _sym(head[1], "problem name").text

    domain_name = ""
    objects: dict[str, str] = {}
    init: list[tuple[str, tuple[str, ...]]] = []
    goal: list[tuple[str, tuple[str, ...]]] = []

    for section in root[2:]:
        if not isinstance(section, list) or not section:
            raise ParseError("malformed problem section")
        key = _sym(section[0], "section keyword")
        if key.text == ":domain":
            domain_name = _sym(section[1], "domain name").text
        elif key.text == ":objects":
            for obj, t in _typed_pairs(section[1:], "object"):
                if obj in objects:
                    raise ParseError(f"duplicate object {obj}", key.line, key.column)
                objects[obj] = t
        elif key.text == ":init":
            for item in section[1:]:
                if not isinstance(item, list) or not item:
                    raise ParseError("malformed init literal", key.line, key.column)
                pred = _sym(item[0], "predicate name")
                init.append((pred.text, tuple(_sym(a, "object").text for a in item[1:])))
        elif key.text == ":goal":
            if len(section) != 2:
                raise ParseError("goal must be a single expression", key.line, key.column)
            for tok, args in _parse_literal_list(section[1], "goal"):
                if tok.text == "not":
                    raise ParseError("negative goals are not supported", tok.line, tok.column)
                goal.append((tok.text, tuple(_sym(a, "object").text for a in args)))
        else:
            raise ParseError(f"unsupported problem section {key.text}", key.line, key.column)

    if domain_name and domain_name != domain.name:
        raise ParseError(f"problem targets domain {domain_name}, expected {domain.name}")

    known_types = dict(domain.types)
    for obj, t in objects.items():
        if t != ROOT_TYPE and t not in known_types:
            raise UnknownType(f"object {obj} has undeclared type {t}")

    problem = PddlProblem(
        name=name,
        domain_name=domain.name,
        objects=tuple(sorted(objects.items())),
        init=tuple(sorted(set(init))),
        goal=tuple(sorted(set(goal))),
    )
    _validate_ground_literals(domain, problem, problem.init, "init")
    _validate_ground_literals(domain, problem, problem.goal, "goal")
    return problem


def _validate_ground_literals(domain, problem, literals, where: str) -> None:
    arity = domain.predicate_arity
    obj_type = problem.object_type
    for pred, args in literals:
        if pred not in arity:
            raise UnknownPredicate(f"{where}: unknown predicate {pred}")
        if len(args) != len(arity[pred]):
            raise ArityMismatch(f"{where}: {pred} expects {len(arity[pred])} arguments, got {len(args)}")
        for arg, want in zip(args, arity[pred]):
            if arg not in obj_type:
                raise UnknownObject(f"{where}: unknown object {arg}")
            if not domain.is_subtype(obj_type[arg], want):
                raise GoalIllTyped(f"{where}: {arg} has type {obj_type[arg]}, {pred} expects {want}")


# ---------------------------------------------------------------------------
# Pretty-printing (canonical whitespace; parse -> print -> parse fixpoint)
# ---------------------------------------------------------------------------


def print_domain(domain: PddlDomain) -> str:
    lines = [f"(define (domain {domain.name})", "  (:requirements :strips :typing)"]
    if domain.types:
        typed = " ".join(f"{t} - {parent}" for t, parent in domain.types)
        lines.append(f"  (:types {typed})")
    if domain.predicates:
        lines.append("  (:predicates")
        for pred, param_types in domain.predicates:
            params = " ".join(f"?x{i} - {t}" for i, t in enumerate(param_types))
            lines.append(f"    ({pred} {params})" if params else f"    ({pred})")
        lines.append("  )")
    for schema in domain.actions:
        params = " ".join(f"{var} - {t}" for var, t in schema.params)
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({params})")
        lines.append(f"    :precondition (and {_print_literals(schema.pre)})")
        effects = _print_literals(schema.add)
        deletes = " ".join(f"(not {_print_literal(lit)})" for lit in schema.delete)
        combined = " ".join(x for x in (effects, deletes) if x)
        lines.append(f"    :effect (and {combined})")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def _print_literal(lit: tuple[str, tuple[str, ...]]) -> str:
    pred, args = lit
    return f"({pred} {' '.join(args)})" if args else f"({pred})"


def _print_literals(lits) -> str:
    return " ".join(_print_literal(lit) for lit in lits)


def print_problem(problem: PddlProblem) -> str:
    lines = [f"(define (problem {problem.name})", f"  (:domain {problem.domain_name})"]
    if problem.objects:
        objs = " ".join(f"{name} - {t}" for name, t in problem.objects)
        lines.append(f"  (:objects {objs})")
    lines.append("  (:init " + _print_literals(problem.init) + ")")
    lines.append("  (:goal (and " + _print_literals(problem.goal) + "))")
    lines.append(")")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Grounding
# ---------------------------------------------------------------------------


def ground_task(
    domain: PddlDomain,
    problem: PddlProblem,
    max_actions: int = DEFAULT_MAX_ACTIONS,
) -> GroundedTask:
    """Instantiate schemas over typed objects and prune unreachable actions.

    The atom universe is the full typed Herbrand base, so states produced
    by other agents' models remain representable; actions whose
    preconditions can never hold (delete-relaxed reachability from init)
    are dropped.
    """
    objects_by_type: dict[str, list[str]] = {}

    def objects_of(t: str) -> list[str]:
        if t not in objects_by_type:
            objects_by_type[t] = sorted(
                name for name, ot in problem.objects if domain.is_subtype(ot, t)
            )
        return objects_by_type[t]

    atoms: set[str] = set()
    for pred, param_types in domain.predicates:
        pools = [objects_of(t) for t in param_types]
        for combo in product(*pools):
            atoms.add(atom_str(pred, combo))

    candidate_count = 0
    for schema in domain.actions:
        count = 1
        for _, t in schema.params:
            count *= len(objects_of(t))
        candidate_count += count
    if candidate_count > max_actions:
        raise GroundingExplosion(
            f"{candidate_count} candidate actions exceed the cap of {max_actions}"
        )

    grounded: list[GroundedAction] = []
    for schema in domain.actions:
        pools = [objects_of(t) for _, t in schema.params]
        var_index = {var: i for i, (var, _) in enumerate(schema.params)}
        for combo in product(*pools):
            def bind(lit):
                pred, args = lit
                return atom_str(pred, tuple(combo[var_index[a]] for a in args))

            grounded.append(
                GroundedAction(
                    name=atom_str(schema.name, combo),
                    schema=schema.name,
                    args=combo,
                    agent=combo[var_index[schema.agent_param]],
                    pre=frozenset(bind(lit) for lit in schema.pre),
                    add=frozenset(bind(lit) for lit in schema.add),
                    delete=frozenset(bind(lit) for lit in schema.delete),
                )
            )

    init_atoms = frozenset(atom_str(p, a) for p, a in problem.init)
    reachable = _relaxed_reachable(init_atoms, grounded)
    kept = sorted((a for a in grounded if a.pre <= reachable), key=lambda a: a.name)

    return GroundedTask(
        atoms=tuple(sorted(atoms)),
        actions=tuple(kept),
        init=init_atoms,
        goal=frozenset(atom_str(p, a) for p, a in problem.goal),
        agents=tuple(objects_of(AGENT_TYPE)),
    )


def _relaxed_reachable(init: frozenset[str], actions: list[GroundedAction]) -> set[str]:
    reached = set(init)
    remaining = list(actions)
    changed = True
    while changed:
        changed = False
        still = []
        for a in remaining:
            if a.pre <= reached:
                if not a.add <= reached:
                    reached |= a.add
                    changed = True
            else:
                still.append(a)
        remaining = still
    return reached


def prune_unreachable(task: GroundedTask) -> GroundedTask:
    """Re-run reachability pruning, e.g. after actions were removed."""
    reachable = _relaxed_reachable(task.init, list(task.actions))
    kept = tuple(a for a in task.actions if a.pre <= reachable)
    if len(kept) == len(task.actions):
        return task
    return GroundedTask(
        atoms=task.atoms,
        actions=kept,
        init=task.init,
        goal=task.goal,
        agents=task.agents,
    )


def apply_action(state: WorldState, action: GroundedAction) -> WorldState:
    """Apply a grounded action; raises if the precondition does not hold."""
    if not action.pre <= state.true_atoms:
        missing = sorted(action.pre - state.true_atoms)
        raise PreconditionViolated(f"{action.name} requires {missing}")
    return WorldState((state.true_atoms - action.delete) | action.add)
