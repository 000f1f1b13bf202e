"""Bi-directional mental model reconciliation for human-robot task teams.

A robot and a human (simulated or live) each hold a fact-set context
compiled into a STRIPS planning model. They execute a shared task
concurrently; deviations and verbal interruptions trigger structured
dialogue that transfers the missing facts in both directions until their
policies agree and the task is done.
"""

from .divergence import (
    DivergenceReport,
    levenshtein,
    objective,
    plan_divergence,
    reconciliation_complete,
)
from .facts import (
    CompiledModel,
    ContextModel,
    Fact,
    Vocabulary,
    add_facts,
    compile_context,
    edit_distance,
    union,
)
from .harness import (
    EpisodeLog,
    Scenario,
    bundled_scenarios,
    export_events,
    export_metrics,
    load_scenario,
    run_batch,
    run_episode,
)
from .nlu import (
    Attribution,
    FactExtraction,
    LlmClient,
    LlmEndpointConfig,
    NluEngine,
    Utterance,
    parse_structured,
    render_fact_utterance,
)
from .pddl import (
    GroundedAction,
    GroundedTask,
    PddlDomain,
    PddlProblem,
    WorldState,
    apply_action,
    ground_task,
    parse_domain,
    parse_problem,
    print_domain,
    print_problem,
)
from .planning import (
    AgentPlanPair,
    Plan,
    PlanValidation,
    find_plan,
    optimal_plan_bfs,
    project_plan,
    validate_plan,
)
from .session import (
    Explanation,
    ExplanationLog,
    Session,
    SessionPhase,
    Violation,
    check_termination,
    make_interruption,
)
from .simhuman import SimulatedHuman

__version__ = "0.1.0"

__all__ = [
    "AgentPlanPair",
    "Attribution",
    "CompiledModel",
    "ContextModel",
    "DivergenceReport",
    "EpisodeLog",
    "Explanation",
    "ExplanationLog",
    "Fact",
    "FactExtraction",
    "GroundedAction",
    "GroundedTask",
    "LlmClient",
    "LlmEndpointConfig",
    "NluEngine",
    "PddlDomain",
    "PddlProblem",
    "Plan",
    "PlanValidation",
    "Scenario",
    "Session",
    "SessionPhase",
    "SimulatedHuman",
    "Utterance",
    "Violation",
    "Vocabulary",
    "WorldState",
    "add_facts",
    "apply_action",
    "bundled_scenarios",
    "check_termination",
    "compile_context",
    "edit_distance",
    "export_events",
    "export_metrics",
    "find_plan",
    "ground_task",
    "levenshtein",
    "load_scenario",
    "make_interruption",
    "objective",
    "optimal_plan_bfs",
    "parse_domain",
    "parse_problem",
    "parse_structured",
    "plan_divergence",
    "print_domain",
    "print_problem",
    "project_plan",
    "reconciliation_complete",
    "render_fact_utterance",
    "run_batch",
    "run_episode",
    "union",
    "validate_plan",
]
