"""Command-line front end.

Subcommands: validate, run, golden, compare, train. Exit codes are fixed
for scripting: 0 success, 1 bad input (flags, parse or semantic errors),
2 I/O failure, 3 golden-trace divergence.
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources

from .engine import Model
from .errors import BamError, ParseError, SemanticError
from .manager import Hyperparams, QLearningManager, QTable, RandomManager, StaticManager
from .scenario import load_scenario, load_scenario_file
from .simulator import TraceLog, run, verify_golden
from .training import learning_curve_csv, train

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_IO = 2
EXIT_DIVERGENCE = 3

GOLDEN_SCENARIO = "golden.scn"
GOLDEN_FIXTURES = {
    "preemption": ("golden_preemption.trace", True),
    "nopreemption": ("golden_nopreemption.trace", False),
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the CLI contract reserves 2 for I/O
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> _Parser:
    parser = _Parser(prog="bamsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario(p):
        p.add_argument("--scenario", required=True, help="scenario file path")

    p = sub.add_parser("validate", help="parse and semantically check a scenario")
    add_scenario(p)

    p = sub.add_parser("run", help="simulate a scenario, write trace and metrics")
    add_scenario(p)
    p.add_argument("--policy", choices=[m.value for m in Model], help="override the scenario's sharing model")
    p.add_argument("--preemption", choices=["on", "off"], help="override the scenario's preemption flag")
    p.add_argument("--manager", choices=["static", "random", "rl"], default="static")
    p.add_argument("--qtable", help="Q-table file for --manager rl (evaluated greedily)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trace-out", default="trace.txt")
    p.add_argument("--metrics-out", default="metrics.csv")

    p = sub.add_parser("golden", help="re-run the bundled golden scenario and compare traces")
    p.add_argument(
        "--variant", choices=["preemption", "nopreemption", "both"], default="both"
    )

    p = sub.add_parser("compare", help="run MAM, RDM and ATCS on one workload")
    add_scenario(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="compare.csv")

    p = sub.add_parser("train", help="train the Q-learning manager on a generator scenario")
    add_scenario(p)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--epsilon-decay", type=float, default=None)
    p.add_argument("--epsilon-min", type=float, default=None)
    p.add_argument("--delta", type=int, default=None)
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--qtable-out", default="qtable.txt")
    p.add_argument("--curve-out", default="curve.csv")
    return parser


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _make_manager(args, scenario):
    if args.manager == "static":
        return StaticManager()
    hyper = scenario.manager_params
    if args.manager == "random":
        return RandomManager(seed=hyper.seed or 0, delta=hyper.delta)
    qtable = QTable(alpha=hyper.alpha, gamma=hyper.gamma, epsilon=0.0, seed=hyper.seed or 0)
    if args.qtable:
        qtable = QTable.load(args.qtable, alpha=hyper.alpha, gamma=hyper.gamma, epsilon=0.0, seed=hyper.seed or 0)
    return QLearningManager(qtable, hyper, learn=False)


def _cmd_validate(args) -> int:
    load_scenario_file(args.scenario)
    print(f"ok: {args.scenario}")
    return EXIT_OK


def _cmd_run(args) -> int:
    scenario = load_scenario_file(args.scenario)
    manager = _make_manager(args, scenario)
    trace, metrics = run(
        scenario,
        manager=manager,
        seed=args.seed,
        model_override=Model(args.policy) if args.policy else None,
        preemption_override={"on": True, "off": False}[args.preemption] if args.preemption else None,
    )
    _write(args.trace_out, trace.to_text())
    _write(args.metrics_out, metrics.to_csv())
    print(
        f"{metrics.arrivals} arrivals, {metrics.grants} grants, {metrics.denials} denials, "
        f"blocking {metrics.blocking_ratio:.6f}, offload {metrics.offload_ratio:.6f}"
    )
    return EXIT_OK


def _golden_text(name: str) -> str:
    return resources.files("bamsim.data").joinpath(name).read_text(encoding="utf-8")


def _cmd_golden(args) -> int:
    scenario = load_scenario(_golden_text(GOLDEN_SCENARIO), name=GOLDEN_SCENARIO)
    variants = [args.variant] if args.variant != "both" else ["preemption", "nopreemption"]
    for variant in variants:
        fixture_name, preemption = GOLDEN_FIXTURES[variant]
        expected_text = _golden_text(fixture_name)
        trace, _metrics = run(scenario, preemption_override=preemption)
        if trace.to_text() != expected_text:
            divergence = verify_golden(trace, TraceLog.from_text(expected_text))
            print(f"golden divergence ({variant}): {divergence}", file=sys.stderr)
            return EXIT_DIVERGENCE
        print(f"golden ok: {variant}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    scenario = load_scenario_file(args.scenario)
    class_indices = sorted(c.index for c in scenario.classes)
    header = (
        "policy,arrivals,grants,denials,blocking_ratio,preempted_requests,"
        "exhaustion_events,agent_invocations,offload_ratio,"
        + ",".join(f"blocking_c{k}" for k in class_indices)
    )
    lines = [header]
    for model in (Model.MAM, Model.RDM, Model.ATCS):
        _trace, m = run(scenario, seed=args.seed, model_override=model)
        per_class = ",".join(f"{m.per_class[k].blocking_ratio:.6f}" for k in class_indices)
        lines.append(
            f"{model.value},{m.arrivals},{m.grants},{m.denials},{m.blocking_ratio:.6f},"
            f"{m.preempted_requests},{m.exhaustion_events},{m.agent_invocations},"
            f"{m.offload_ratio:.6f},{per_class}"
        )
        print(f"{model.value}: grants {m.grants}, denials {m.denials}, blocking {m.blocking_ratio:.6f}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_train(args) -> int:
    scenario = load_scenario_file(args.scenario)
    if args.episodes < 1:
        raise SemanticError("--episodes must be >= 1")
    base = scenario.manager_params
    overrides = {
        "alpha": args.alpha,
        "gamma": args.gamma,
        "epsilon": args.epsilon,
        "epsilon_decay": args.epsilon_decay,
        "epsilon_min": args.epsilon_min,
        "delta": args.delta,
        "buckets": args.buckets,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(base, key, value)
    try:
        result = train(scenario, episodes=args.episodes, hyper=base, seed=args.seed)
    except ValueError as exc:
        raise SemanticError(str(exc)) from None
    result.qtable.save(args.qtable_out)
    _write(args.curve_out, learning_curve_csv(result.blocking_curve))
    final = result.blocking_curve[-1] if result.blocking_curve else 0.0
    print(
        f"trained {args.episodes} episodes, visited {result.visited_states} states, "
        f"final blocking {final:.6f}"
    )
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "golden": _cmd_golden,
    "compare": _cmd_compare,
    "train": _cmd_train,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, SemanticError, BamError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
