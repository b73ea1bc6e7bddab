"""Command-line entry point.

Subcommands: gen-data, train, experiment, sweep, histogram. Every flag has a
documented default; training hyperparameter defaults are the standard fixed
settings (see UcsConfig). A flat `key = value` config file can supply any
flag of a subcommand; explicit flags override the file.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .engine import parse_population_snapshot
from .errors import ContractViolationError, DataFormatError, EnumerationLimitError
from .experiments import (
    ExperimentPlan,
    aggregate_runs,
    coverage_histogram,
    parameter_sweep,
    run_experiment,
    run_trial,
    write_aggregate_csv,
    write_histogram_csv,
    write_metrics_csv,
    write_sweep_csv,
)
from .model import UcsConfig
from .problems import ProblemKind, ProblemSpec, save_dataset, load_dataset
from .selection import SelectionStrategy

__all__ = ["run_command", "main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit code 1
        raise UsageError(message)


_DEFAULTS = UcsConfig()

_CONFIG_FLAGS = [
    # (flag, dest, type, help)
    ("--nu", "nu", float, "fitness exponent"),
    ("--alpha", "alpha", float, "carried fitness parameter (unused by the update rule)"),
    ("--beta", "beta", float, "correct-set size learning rate"),
    ("--theta-ga", "theta_ga", float, "GA trigger age threshold"),
    ("--chi", "chi", float, "crossover probability"),
    ("--mu", "mu", float, "per-position mutation probability"),
    ("--theta-del", "theta_del", int, "deletion experience threshold"),
    ("--delta", "delta", float, "deletion low-fitness fraction"),
    ("--max-population", "max_population", int, "max total numerosity N"),
    ("--p-hash", "p_hash", float, "covering wildcard probability"),
    ("--tournament-fraction", "tournament_fraction", float, "tournament size as a fraction of |C|"),
    ("--batch-size", "batch_size", int, "batch-lexicase batch size"),
    ("--batch-threshold", "batch_threshold", float, "batch-lexicase survival threshold"),
    ("--subsumption-interval", "subsumption_interval", int, "steps between compaction passes"),
    ("--theta-sub", "theta_sub", int, "subsumer experience threshold"),
    ("--acc-sub", "acc_sub", float, "subsumer accuracy threshold"),
]

_CONFIG_BOOL_FLAGS = [
    ("--cover-on-empty-match-only", "cover_on_empty_match_only",
     "cover only when the match set is empty (default: when the correct set is)"),
    ("--batch-zero-match-eliminates", "batch_zero_match_eliminates",
     "eliminate zero-match candidates from a batch instead of retaining them"),
    ("--lexicase-weight-by-numerosity", "lexicase_weight_by_numerosity",
     "weight the lexicase fallback pick by numerosity"),
]


def _add_hyperparams(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training hyperparameters")
    for flag, dest, typ, help_text in _CONFIG_FLAGS:
        group.add_argument(flag, dest=dest, type=typ,
                           default=getattr(_DEFAULTS, dest), help=help_text)
    for flag, dest, help_text in _CONFIG_BOOL_FLAGS:
        group.add_argument(flag, dest=dest, action="store_true", help=help_text)


def _config_from_args(args: argparse.Namespace) -> UcsConfig:
    kwargs = {dest: getattr(args, dest) for _, dest, _, _ in _CONFIG_FLAGS}
    kwargs["cover_on_empty_match_only"] = args.cover_on_empty_match_only
    kwargs["batch_zero_match_survives"] = not args.batch_zero_match_eliminates
    kwargs["lexicase_weight_by_numerosity"] = args.lexicase_weight_by_numerosity
    kwargs["seed"] = getattr(args, "seed", 0)
    return UcsConfig(**kwargs)


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", required=True,
                        help="problem spec: mux<bits>, parity<n>, led, car:<path>")
    parser.add_argument("--samples", type=int, default=None,
                        help="sample this many rows instead of enumerating (required for led)")
    parser.add_argument("--noise", type=float, default=0.1, help="LED segment noise rate")


def _problem_from_args(args: argparse.Namespace) -> ProblemSpec:
    spec = ProblemSpec.parse(args.problem)
    updates = {}
    if args.samples is not None:
        updates["n_samples"] = args.samples
    if spec.kind is ProblemKind.LED:
        updates["noise"] = args.noise
        updates.setdefault("n_samples", args.samples or 2000)
    if updates:
        spec = replace(spec, **updates)
    return spec


def _add_run_flags(parser: argparse.ArgumentParser, default_steps: int) -> None:
    parser.add_argument("--steps", type=int, default=default_steps, help="training steps")
    parser.add_argument("--cadence", type=int, default=500, help="steps between measurements")
    parser.add_argument("--train-frac", type=float, default=0.7, help="training split fraction")
    parser.add_argument("--discard-frac", type=float, default=0.0, help="fraction dropped before testing")
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")


def build_parser() -> _Parser:
    top = _Parser(prog="lcskit", description=__doc__,
                  formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", metavar="command")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", help="write a benchmark dataset file",
                       formatter_class=fmt)
    p.add_argument("--config", default=None, help="key = value config file")
    _add_problem_flags(p)
    p.add_argument("--seed", type=int, default=0, help="RNG seed for stochastic problems")
    p.add_argument("--out", required=True, help="output dataset file")

    p = sub.add_parser("train", help="run a single trial", formatter_class=fmt)
    p.add_argument("--config", default=None, help="key = value config file")
    _add_problem_flags(p)
    p.add_argument("--strategy", default="tournament:0.4",
                   help="roulette | tournament:<f> | lexicase | batch-lexicase:<size>:<thr>")
    _add_run_flags(p, default_steps=30_000)
    p.add_argument("--out-metrics", required=True, help="per-run metrics CSV")
    p.add_argument("--out-population", default=None, help="final population snapshot file")
    _add_hyperparams(p)

    p = sub.add_parser("experiment", help="multi-run comparison of strategies",
                       formatter_class=fmt)
    p.add_argument("--config", default=None, help="key = value config file")
    _add_problem_flags(p)
    p.add_argument("--strategies", default="roulette,tournament:0.4,lexicase,batch-lexicase:100:0.9",
                   help="comma-separated strategy specs")
    p.add_argument("--runs", type=int, default=10, help="independent runs per strategy")
    _add_run_flags(p, default_steps=30_000)
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p.add_argument("--out-dir", required=True, help="directory for metrics.csv and aggregate.csv")
    _add_hyperparams(p)

    p = sub.add_parser("sweep", help="batch-lexicase parameter sweep", formatter_class=fmt)
    p.add_argument("--config", default=None, help="key = value config file")
    _add_problem_flags(p)
    p.add_argument("--batch-sizes", default="10,50,100,200,500",
                   help="comma-separated batch sizes to sweep")
    p.add_argument("--thresholds", default="0.1,0.3,0.5,0.7,0.9",
                   help="comma-separated survival thresholds to sweep")
    p.add_argument("--runs", type=int, default=5, help="runs per setting")
    _add_run_flags(p, default_steps=30_000)
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p.add_argument("--out-dir", required=True, help="directory for sweep.csv and sweep_meta.json")
    _add_hyperparams(p)

    p = sub.add_parser("histogram", help="rule-coverage histogram from a snapshot",
                       formatter_class=fmt)
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--population", required=True, help="population snapshot file")
    p.add_argument("--data", required=True, help="dataset file (gen-data format)")
    p.add_argument("--bin-width", type=int, default=10, help="histogram bin width")
    p.add_argument("--out", required=True, help="histogram CSV")

    return top


def _load_config_file(path: str, parser: argparse.ArgumentParser) -> list[str]:
    """Turn `key = value` lines into a flag list validated against the subcommand."""
    known = {s for a in parser._actions for s in a.option_strings}
    flags: list[str] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read config file {path}: {exc}") from None
    store_true = {
        s for a in parser._actions if isinstance(a, argparse._StoreTrueAction)
        for s in a.option_strings
    }
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = f"--{key}"
        if flag not in known:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        if flag in store_true:
            if value.lower() in ("true", "1", "yes"):
                flags.append(flag)
            elif value.lower() not in ("false", "0", "no"):
                raise UsageError(f"{path}:{lineno}: boolean flag {key!r} needs true/false")
        else:
            flags.extend([flag, value])
    return flags


def _expand_config(argv: list[str], top: _Parser) -> list[str]:
    if not argv or argv[0] not in ("gen-data", "train", "experiment", "sweep", "histogram"):
        return argv
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return argv
    subparser = top._subparsers._group_actions[0].choices[argv[0]]
    return [argv[0], *_load_config_file(path, subparser), *argv[1:]]


def _usage_guard(fn, *args, **kwargs):
    """Run argument-interpretation code; bad values become usage errors."""
    try:
        return fn(*args, **kwargs)
    except ContractViolationError as exc:
        raise UsageError(str(exc)) from None


def _parse_strategies(text: str) -> tuple[SelectionStrategy, ...]:
    return tuple(SelectionStrategy.parse(part.strip()) for part in text.split(",") if part.strip())


def _build_plan(args: argparse.Namespace, strategies, n_runs: int, workers: int) -> ExperimentPlan:
    return ExperimentPlan(
        problem=_problem_from_args(args),
        strategies=tuple(strategies),
        train_fraction=args.train_frac,
        discard_fraction=args.discard_frac,
        n_runs=n_runs,
        max_steps=args.steps,
        metric_cadence=args.cadence,
        base_seed=args.seed,
        config=_config_from_args(args),
        workers=workers,
    )


def _cmd_gen_data(args) -> int:
    spec = _usage_guard(_problem_from_args, args)
    rng = np.random.default_rng(args.seed)
    dataset = spec.build(rng)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    strategy = _usage_guard(SelectionStrategy.parse, args.strategy)
    plan = _usage_guard(_build_plan, args, [strategy], n_runs=1, workers=1)
    metrics = run_trial(plan, strategy, seed=args.seed, run_index=0)
    write_metrics_csv(args.out_metrics, [metrics])
    if args.out_population:
        with open(args.out_population, "w", encoding="utf-8") as fh:
            fh.write("\n".join(metrics.snapshot) + "\n")
    final = metrics.final()
    print(
        f"{plan.problem.name} {strategy.spec_text}: "
        f"train_acc={final.train_acc:.4f} test_acc={final.test_acc:.4f} "
        f"rules={final.macro_rules}"
    )
    return 0


def _cmd_experiment(args) -> int:
    strategies = _usage_guard(_parse_strategies, args.strategies)
    if not strategies:
        raise UsageError("--strategies is empty")
    plan = _usage_guard(_build_plan, args, strategies, n_runs=args.runs, workers=args.workers)
    runs = run_experiment(plan)
    os.makedirs(args.out_dir, exist_ok=True)
    write_metrics_csv(os.path.join(args.out_dir, "metrics.csv"), runs)
    groups = {}
    for strategy in strategies:
        key = (plan.problem.name, strategy.spec_text)
        group = [m for m in runs if m.strategy == strategy.spec_text]
        groups[key] = aggregate_runs(group)
    write_aggregate_csv(os.path.join(args.out_dir, "aggregate.csv"), groups)
    for (problem, name), rows in groups.items():
        final_test = [r for r in rows if r.metric == "test_acc"][-1]
        print(f"{problem} {name}: final test_acc mean={final_test.mean:.4f} std={final_test.std:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    try:
        batch_sizes = [int(v) for v in args.batch_sizes.split(",") if v.strip()]
        thresholds = [float(v) for v in args.thresholds.split(",") if v.strip()]
    except ValueError:
        raise UsageError("--batch-sizes / --thresholds must be comma-separated numbers") from None
    config = _usage_guard(_config_from_args, args)
    strategy = _usage_guard(
        SelectionStrategy.batch_lexicase, config.batch_size, config.batch_threshold
    )
    plan = _usage_guard(_build_plan, args, [strategy], n_runs=args.runs, workers=args.workers)
    result = parameter_sweep(plan, batch_sizes, thresholds)
    os.makedirs(args.out_dir, exist_ok=True)
    write_sweep_csv(os.path.join(args.out_dir, "sweep.csv"), result)
    with open(os.path.join(args.out_dir, "sweep_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(result.recommendation, fh, indent=2)
        fh.write("\n")
    print(f"wrote sweep over {len(batch_sizes)} batch sizes and {len(thresholds)} thresholds")
    return 0


def _cmd_histogram(args) -> int:
    with open(args.population, "r", encoding="utf-8") as fh:
        rules = parse_population_snapshot(fh.readlines())
    dataset = load_dataset(args.data)
    hist = coverage_histogram(rules, dataset, args.bin_width)
    write_histogram_csv(args.out, hist)
    print(
        f"{len(rules)} rules over {len(dataset)} samples: "
        f"mean instances/rule = {hist.mean_instances_per_rule:.2f}"
    )
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "experiment": _cmd_experiment,
    "sweep": _cmd_sweep,
    "histogram": _cmd_histogram,
}


def run_command(argv: list[str] | None = None) -> int:
    """Parse argv, execute the subcommand, and map failures to exit codes."""
    if argv is None:
        argv = sys.argv[1:]
    top = build_parser()
    try:
        argv = _expand_config(list(argv), top)
        args = top.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (see --help)")
        try:
            return _HANDLERS[args.command](args)
        except ContractViolationError as exc:
            # contract breaches during execution are internal failures
            print(f"lcskit: internal invariant violation: {exc}", file=sys.stderr)
            return 3
    except UsageError as exc:
        print(f"lcskit: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, EnumerationLimitError) as exc:
        print(f"lcskit: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lcskit: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
