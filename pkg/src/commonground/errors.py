"""Exception hierarchy shared across the package.

Parse and grounding errors carry source positions where one is known.
Protocol-level problems (NLU failures, scenario defects) get their own
branches so callers can react per class instead of string-matching.
"""

from __future__ import annotations


class CommonGroundError(Exception):
    """Base class for every error raised by this package."""


class PddlError(CommonGroundError):
    """Problem in PDDL text or its validation."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class LexError(PddlError):
    pass


class ParseError(PddlError):
    pass


class UnknownType(PddlError):
    pass


class UnknownPredicate(PddlError):
    pass


class ArityMismatch(PddlError):
    pass


class UnboundVariable(PddlError):
    pass


class UnknownObject(PddlError):
    pass


class GoalIllTyped(PddlError):
    pass


class GroundingExplosion(CommonGroundError):
    """Grounded action count would exceed the configured cap."""


class PreconditionViolated(CommonGroundError):
    """Action applied in a state that does not satisfy its precondition."""


class Unsolvable(CommonGroundError):
    """No plan reaches the goal from the given state."""


class ResourceLimit(CommonGroundError):
    """Search exceeded its node or state budget."""


class CompileError(CommonGroundError):
    """Problem while compiling a fact context into a planning model."""


class UnknownVocabulary(CompileError):
    """A fact references a name outside the base model's vocabulary.

    Usually signals a bad NLU extraction rather than a scenario defect.
    """


class CompileConflict(CompileError):
    """A context holds a positive and a negative fact with the same body."""


class NluError(CommonGroundError):
    """Problem turning an utterance into facts."""


class EndpointUnavailable(NluError):
    """The language-model endpoint could not be reached."""


class SchemaViolation(NluError):
    """The language model returned a non-conforming structure twice."""


class VocabularyViolation(NluError):
    """Extracted facts reference names outside the scenario vocabulary."""


class PhaseError(CommonGroundError):
    """Operation invoked outside its legal session phase."""


class ScenarioInvalid(CommonGroundError):
    """Scenario manifest or fixture files violate a scenario invariant."""
