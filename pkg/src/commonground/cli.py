"""Command-line entry point.

Subcommands:

* ``run``      one simulated episode; exit code 0 only on convergence
* ``batch``    several scenarios and repeats; summary CSV per episode
* ``validate`` scenario invariants only; exit code 0 when valid
* ``serve``    HTTP session service for live sessions
"""

from __future__ import annotations

import argparse
import glob as globlib
import sys
from pathlib import Path

from .errors import CommonGroundError, ScenarioInvalid
from .harness import (
    EpisodeLog,
    Scenario,
    bundled_scenarios,
    export_events,
    export_metrics,
    load_scenario,
    run_episode,
    scenario_with,
)
from .nlu import DEFAULT_NLU_MODE, NLU_MODES, LlmClient, LlmEndpointConfig, NluEngine
from .session import CONVERGED


def resolve_scenario(ref: str) -> Scenario:
    """Accept a scenario directory, manifest path, or bundled scenario name."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    bundled = bundled_scenarios()
    if ref in bundled:
        return load_scenario(bundled[ref])
    raise ScenarioInvalid(
        f"no scenario at {ref!r}; bundled scenarios: {', '.join(sorted(bundled))}"
    )


def build_nlu(mode: str) -> NluEngine:
    if mode == "grammar":
        return NluEngine(mode="grammar")
    config = LlmEndpointConfig.from_env()
    return NluEngine(mode=mode, client=LlmClient(config))


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    overrides = {}
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if getattr(args, "tolerate_reordering", False):
        overrides["flags"] = {**scenario.flags, "tolerate_reordering": True}
    return scenario_with(scenario, **overrides) if overrides else scenario


def _write_outputs(log: EpisodeLog, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    export_events(log, out / "events.jsonl")
    export_metrics(log, out / "metrics.csv")


def cmd_run(args) -> int:
    if args.mode != "simulated":
        print("live sessions run through the service: use `commonground serve`", file=sys.stderr)
        return 2
    try:
        scenario = _apply_overrides(resolve_scenario(args.scenario), args)
        log = run_episode(scenario, seed=args.seed, nlu=build_nlu(args.nlu),
                          max_rounds=args.max_rounds)
    except CommonGroundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        _write_outputs(log, Path(args.out))
    final = log.series[-1]
    print(
        f"{log.scenario}: outcome={log.outcome} iterations={log.final_t} "
        f"explanations={log.explanations_robot_to_human}+{log.explanations_human_to_robot} "
        f"ed_r_gt={final.ed_r_gt} ed_h_gt={final.ed_h_gt} "
        f"wall={log.wall_seconds:.2f}s"
    )
    return 0 if log.outcome == CONVERGED else 1


def cmd_batch(args) -> int:
    refs = sorted(globlib.glob(args.scenarios)) or [args.scenarios]
    exit_code = 0
    rows = ["scenario,seed,outcome,iterations,n,m,ed_r_gt,ed_h_gt"]
    try:
        nlu_mode = args.nlu
        for ref in refs:
            scenario = _apply_overrides(resolve_scenario(ref), args)
            for repeat in range(args.repeats):
                seed = args.seed + repeat
                log = run_episode(scenario, seed=seed, nlu=build_nlu(nlu_mode),
                                  max_rounds=args.max_rounds)
                final = log.series[-1]
                rows.append(
                    f"{log.scenario},{seed},{log.outcome},{log.final_t},"
                    f"{log.explanations_robot_to_human},{log.explanations_human_to_robot},"
                    f"{final.ed_r_gt},{final.ed_h_gt}"
                )
                if args.out:
                    _write_outputs(log, Path(args.out) / f"{log.scenario}-seed{seed}")
                if log.outcome != CONVERGED:
                    exit_code = 1
    except CommonGroundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = "\n".join(rows)
    print(summary)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(summary + "\n")
    return exit_code


def cmd_validate(args) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
    except CommonGroundError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(
        f"{scenario.name}: ok condition={scenario.condition} "
        f"facts gt={len(scenario.ground_truth_facts)} "
        f"robot={len(scenario.robot_facts)} human={len(scenario.human_facts)}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(session_dir=args.session_dir, nlu_mode=args.nlu)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="commonground",
                                     description="bi-directional mental model reconciliation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, nlu_default=DEFAULT_NLU_MODE):
        p.add_argument("--nlu", choices=NLU_MODES, default=nlu_default)
        p.add_argument("--epsilon", type=float, default=None,
                       help="policy divergence threshold (default from scenario)")
        p.add_argument("--tolerate-reordering", action="store_true",
                       help="accept expected human actions arriving out of order")
        p.add_argument("--max-rounds", type=int, default=10_000)

    run_p = sub.add_parser("run", help="run one simulated episode")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--mode", choices=["simulated", "live"], default="simulated")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", default=None, help="directory for events.jsonl and metrics.csv")
    common(run_p)
    run_p.set_defaults(func=cmd_run)

    batch_p = sub.add_parser("batch", help="run several scenarios/repeats")
    batch_p.add_argument("--scenarios", required=True,
                         help="glob over scenario directories, or a bundled name")
    batch_p.add_argument("--repeats", type=int, default=1)
    batch_p.add_argument("--seed", type=int, default=0)
    batch_p.add_argument("--out", default=None)
    common(batch_p)
    batch_p.set_defaults(func=cmd_batch)

    val_p = sub.add_parser("validate", help="check scenario invariants")
    val_p.add_argument("--scenario", required=True)
    val_p.set_defaults(func=cmd_validate)

    serve_p = sub.add_parser("serve", help="HTTP service for live sessions")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8723)
    serve_p.add_argument("--session-dir", default="live-sessions",
                         help="where terminated session logs are flushed")
    serve_p.add_argument("--nlu", choices=NLU_MODES, default=DEFAULT_NLU_MODE)
    serve_p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
