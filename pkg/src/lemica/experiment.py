"""Experiment drivers behind the CLI: matrix building, planning, replay, sweeps."""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from lemica.exceptions import ContractViolation
from lemica.graph import (
    ScheduleGraph,
    SchedulePath,
    build_graph,
    feasible_budgets,
    path_from_nodes,
    schedule_to_dict,
    signature_of,
)
from lemica.greedy import calibrate_threshold, greedy_schedule, GreedyConfig
from lemica.measure import (
    ErrorMatrix,
    LocalErrorProfile,
    build_error_matrix,
    build_local_profile,
    mean_abs_diff,
)
from lemica.planner import PLANNERS, _plan_lexmin_flipped, enumerate_optimal, plan_lexmin
from lemica.sampler import MixtureFamily, NoiseSchedule, check_seed, replay, run_full

log = logging.getLogger(__name__)

STRATEGIES = ("lexmin", "shortest", "greedy")
DEFAULT_BUDGETS_T30 = (7, 9, 12, 19)
SWEEP_COLUMNS = ("strategy", "budget", "mean_l1", "std_l1", "calls", "wall_ms")


@dataclass
class ExperimentConfig:
    dim: int = 8
    num_components: int = 4
    component_std: float = 1.0
    mean_range: float = 2.0
    num_steps: int = 30
    max_skip: int = 8
    build_seeds: list[int] = field(default_factory=lambda: list(range(20)))
    eval_seeds: list[int] = field(default_factory=lambda: list(range(1000, 1010)))
    budgets: list[int] | None = None
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    out: str = "out"

    def __post_init__(self) -> None:
        self.build_seeds = [check_seed(s) for s in self.build_seeds]
        self.eval_seeds = [check_seed(s) for s in self.eval_seeds]
        if self.budgets is None:
            self.budgets = list(DEFAULT_BUDGETS_T30) if self.num_steps == 30 else [self.num_steps]
        self.validate()

    def validate(self) -> None:
        for name in ("dim", "num_components", "num_steps", "max_skip"):
            if int(getattr(self, name)) < 1:
                raise ContractViolation(f"config field {name!r} must be >= 1")
        for name in ("component_std", "mean_range"):
            if not float(getattr(self, name)) > 0:
                raise ContractViolation(f"config field {name!r} must be > 0")
        if not self.build_seeds:
            raise ContractViolation("config field 'build_seeds' must be non-empty")
        if not self.eval_seeds:
            raise ContractViolation("config field 'eval_seeds' must be non-empty")
        overlap = sorted(set(self.build_seeds) & set(self.eval_seeds))
        if overlap:
            raise ContractViolation(f"build and eval seeds overlap: {overlap[:5]}")
        lo = -(-self.num_steps // self.max_skip)
        for b in self.budgets:
            if not 1 <= b <= self.num_steps:
                raise ContractViolation(f"config field 'budgets': {b} outside 1..{self.num_steps}")
            if b < lo and any(s != "greedy" for s in self.strategies):
                raise ContractViolation(
                    f"config field 'budgets': {b} below the graph minimum {lo} for T={self.num_steps}, L={self.max_skip}"
                )
        unknown = sorted(set(self.strategies) - set(STRATEGIES))
        if unknown:
            raise ContractViolation(f"config field 'strategies': unknown {unknown}")

    @property
    def family(self) -> MixtureFamily:
        return MixtureFamily(self.dim, self.num_components, self.component_std, self.mean_range)

    @property
    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.cosine(self.num_steps)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ContractViolation(f"unknown config fields {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def build_matrix(config: ExperimentConfig) -> ErrorMatrix:
    return build_error_matrix(config.family, config.schedule, config.build_seeds, config.max_skip)


def build_profile(config: ExperimentConfig) -> LocalErrorProfile:
    return build_local_profile(config.family, config.schedule, config.build_seeds)


@dataclass
class PlannedSchedule:
    strategy: str
    nodes: tuple[int, ...]
    signature: tuple[float, ...]
    graph_valid: bool = True
    threshold: float | None = None
    realized_budget: int | None = None

    @property
    def budget(self) -> int:
        return len(self.nodes) - 1

    def to_dict(self) -> dict:
        extra = {}
        if self.strategy == "greedy":
            extra = {
                "threshold": self.threshold,
                "realized_budget": self.realized_budget,
                "graph_valid": self.graph_valid,
            }
        path = SchedulePath(self.nodes, self.signature)
        return schedule_to_dict(path, self.strategy, **extra)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def plan(
    graph: ScheduleGraph, budget: int, strategy: str, profile: LocalErrorProfile | None = None
) -> PlannedSchedule:
    if strategy in PLANNERS:
        path = PLANNERS[strategy](graph, budget)
        return PlannedSchedule(strategy, path.nodes, path.signature)
    if strategy != "greedy":
        raise ContractViolation(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if profile is None:
        raise ContractViolation("greedy planning needs a local error profile")
    cal = calibrate_threshold(profile, budget)
    nodes = tuple(greedy_schedule(profile, GreedyConfig(cal.threshold, profile.num_steps)))
    valid = all(b - a <= graph.max_skip for a, b in zip(nodes, nodes[1:]))
    sig = ()
    if valid:
        sig = path_from_nodes(graph, nodes).signature
    return PlannedSchedule("greedy", nodes, sig, valid, cal.threshold, cal.realized_budget)


@dataclass
class ReplayReport:
    strategy: str
    budget: int
    errors: list[float]
    calls: int
    wall_ms: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def std(self) -> float:
        return float(np.std(self.errors, ddof=1)) if len(self.errors) > 1 else 0.0

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(len(self.errors))

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "budget": self.budget,
            "per_seed_l1": self.errors,
            "mean_l1": self.mean,
            "std_l1": self.std,
            "calls": self.calls,
            "wall_ms": self.wall_ms,
        }


def replay_schedule(
    config: ExperimentConfig, nodes: Sequence[int], eval_seeds: Sequence[int], strategy: str = "custom"
) -> ReplayReport:
    """Final mean-L1 error of the cached schedule against the full run, per eval seed."""
    overlap = set(eval_seeds) & set(config.build_seeds)
    if overlap:
        raise ContractViolation(f"eval seeds overlap build seeds: {sorted(overlap)[:5]}")
    schedule, family = config.schedule, config.family
    if nodes[-1] != schedule.num_steps:
        raise ContractViolation(f"schedule ends at {nodes[-1]}, sampler has T={schedule.num_steps}")
    errors, times, calls = [], [], set()
    for seed in eval_seeds:
        model, x_init = family(check_seed(seed))
        reference = run_full(model, schedule, x_init).final
        start = time.perf_counter()
        final, n_calls = replay(model, schedule, x_init, nodes)
        times.append(1e3 * (time.perf_counter() - start))
        errors.append(mean_abs_diff(final, reference))
        calls.add(n_calls)
    (n_calls,) = calls
    return ReplayReport(strategy, len(nodes) - 1, errors, n_calls, times)


@dataclass
class SweepRow:
    strategy: str
    budget: int
    report: ReplayReport
    schedule: PlannedSchedule

    def csv_row(self) -> str:
        r = self.report
        return f"{self.strategy},{self.budget},{r.mean!r},{r.std!r},{r.calls},{float(np.mean(r.wall_ms)):.3f}"


def sweep(
    config: ExperimentConfig,
    matrix: ErrorMatrix | None = None,
    profile: LocalErrorProfile | None = None,
) -> list[SweepRow]:
    matrix = matrix if matrix is not None else build_matrix(config)
    graph = build_graph(matrix)
    if "greedy" in config.strategies and profile is None:
        profile = build_profile(config)
    rows = []
    for strategy in config.strategies:
        for budget in config.budgets:
            planned = plan(graph, budget, strategy, profile)
            report = replay_schedule(config, planned.nodes, config.eval_seeds, strategy)
            rows.append(SweepRow(strategy, budget, report, planned))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return ",".join(SWEEP_COLUMNS) + "\n" + "".join(row.csv_row() + "\n" for row in rows)


def random_graph(rng: random.Random, num_steps: int, max_skip: int) -> ScheduleGraph:
    weights = {
        (i, j): rng.random()
        for i in range(num_steps)
        for j in range(i + 2, min(i + max_skip, num_steps) + 1)
    }
    return ScheduleGraph(num_steps, max_skip, weights)


def graph_fixture(graph: ScheduleGraph, budget: int) -> dict:
    return {
        "num_steps": graph.num_steps,
        "max_skip": graph.max_skip,
        "budget": budget,
        "weights": [[i, j, w] for i, j, w in graph.edges if j - i >= 2],
    }


@dataclass
class OracleReport:
    trials: int
    checks: int
    failures: list[dict]

    @property
    def passed(self) -> bool:
        return not self.failures


def oracle_check(
    trials: int,
    max_t: int,
    max_l: int,
    seed: int = 0,
    inject_bug: bool = False,
    planner: Callable[[ScheduleGraph, int], SchedulePath] | None = None,
) -> OracleReport:
    """Compare the planner against brute-force enumeration on random graphs, every feasible B."""
    if max_t < 1 or max_l < 1:
        raise ContractViolation("max_t and max_l must be >= 1")
    planner = planner or (_plan_lexmin_flipped if inject_bug else plan_lexmin)
    rng = random.Random(seed)
    checks, failures = 0, []
    for _ in range(trials):
        T = rng.randint(1, max_t)
        L = rng.randint(1, max_l)
        graph = random_graph(rng, T, L)
        lo, hi = feasible_budgets(graph)
        for budget in range(lo, hi + 1):
            expected, _ = enumerate_optimal(graph, budget)
            got = planner(graph, budget)
            checks += 1
            if got.signature != expected or len(got.nodes) != budget + 1:
                fixture = graph_fixture(graph, budget)
                fixture["expected_signature"] = list(expected)
                fixture["planner_signature"] = list(got.signature)
                fixture["planner_nodes"] = list(got.nodes)
                failures.append(fixture)
    return OracleReport(trials, checks, failures)
