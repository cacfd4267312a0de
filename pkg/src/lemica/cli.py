"""Command-line entry point: ``lemica <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from lemica.exceptions import LemicaError
from lemica.experiment import (
    STRATEGIES,
    ExperimentConfig,
    build_matrix,
    build_profile,
    oracle_check,
    plan,
    replay_schedule,
    sweep,
    sweep_csv,
)
from lemica.graph import build_graph, loads_schedule
from lemica.measure import ErrorMatrix, LocalErrorProfile

log = logging.getLogger("lemica")

MATRIX_CSV = "matrix.csv"
MATRIX_JSON = "matrix.json"
PROFILE_JSON = "profile.json"


def _parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    if getattr(args, "out", None):
        data["out"] = args.out
    return ExperimentConfig.from_dict(data)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def load_matrix(path: Path) -> ErrorMatrix:
    text = path.read_text()
    if path.suffix == ".json":
        return ErrorMatrix.from_json(text)
    sibling = path.with_name(MATRIX_JSON)
    if sibling.exists():
        meta = json.loads(sibling.read_text())
        return ErrorMatrix.from_csv(text, meta["num_steps"], meta["max_skip"])
    return ErrorMatrix.from_csv(text)


def cmd_build_graph(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.seeds:
        config.build_seeds = args.seeds
        config.validate()
    out = Path(config.out)
    matrix = build_matrix(config)
    profile = build_profile(config)
    _write(out / MATRIX_CSV, matrix.to_csv())
    _write(out / MATRIX_JSON, matrix.to_json())
    _write(out / PROFILE_JSON, json.dumps(profile.to_dict(), indent=1) + "\n")
    print(f"{len(matrix.skip_items())} segment rows from {matrix.sample_count} seeds")
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    matrix_path = Path(args.matrix)
    graph = build_graph(load_matrix(matrix_path))
    profile = None
    if args.strategy == "greedy":
        profile_path = Path(args.profile) if args.profile else matrix_path.with_name(PROFILE_JSON)
        profile = LocalErrorProfile.from_dict(json.loads(profile_path.read_text()))
    planned = plan(graph, args.budget, args.strategy, profile)
    name = f"schedule_{args.strategy}_B{args.budget}.json"
    _write(Path(args.out) / name, planned.to_json())
    print(f"nodes={list(planned.nodes)}")
    print(f"signature={list(planned.signature)}")
    print(f"sum={sum(planned.signature)!r}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config = _load_config(args)
    data = loads_schedule(Path(args.schedule).read_text())
    seeds = args.seeds or config.eval_seeds
    report = replay_schedule(config, data["nodes"], seeds, data["strategy"])
    text = json.dumps(report.to_dict(), indent=1) + "\n"
    if args.out:
        _write(Path(args.out) / f"replay_{data['strategy']}_B{report.budget}.json", text)
    print(f"strategy={report.strategy} budget={report.budget} calls={report.calls} "
          f"mean_l1={report.mean!r} std_l1={report.std!r}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.budgets:
        config.budgets = [int(b) for b in args.budgets.split(",")]
        config.validate()
    rows = sweep(config)
    text = sweep_csv(rows)
    _write(Path(config.out) / "sweep.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_oracle_check(args: argparse.Namespace) -> int:
    if args.trials == 0:
        log.warning("oracle-check with 0 trials passes vacuously")
    report = oracle_check(args.trials, args.max_t, args.max_l, args.seed, inject_bug=args.inject_bug)
    if report.passed:
        print(f"PASS {report.checks} checks over {report.trials} graphs")
        return 0
    print(f"FAIL {len(report.failures)}/{report.checks} checks disagree with enumeration")
    print(json.dumps(report.failures[0], indent=1))
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lemica", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="measure the segment error matrix and local profile")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seeds", type=_parse_seeds, help="build seeds, overrides the config")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("plan", help="plan a schedule from a matrix file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="lexmin")
    p.add_argument("--profile", help="local profile for greedy (default: next to the matrix)")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("replay", help="replay a schedule file against full sampling")
    p.add_argument("schedule")
    p.add_argument("--config")
    p.add_argument("--seeds", type=_parse_seeds, help="eval seeds, overrides the config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("sweep", help="budget/strategy trade-off table")
    p.add_argument("--config")
    p.add_argument("--budgets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="planner vs. brute-force enumeration on random graphs")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-t", type=int, default=14)
    p.add_argument("--max-l", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (LemicaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
