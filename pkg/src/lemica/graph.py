"""Static schedule DAG over trajectory nodes, schedule paths and the schedule file."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from lemica.exceptions import (
    ContractViolation,
    MissingEdgeError,
    NonMonotoneError,
    WrongEdgeCountError,
    WrongEndpointsError,
)
from lemica.measure import ErrorMatrix


@dataclass(frozen=True, eq=False)
class ScheduleGraph:
    num_steps: int
    max_skip: int
    weights: Mapping[tuple[int, int], float]

    def __post_init__(self) -> None:
        T, L = self.num_steps, self.max_skip
        if T < 1 or L < 1:
            raise ContractViolation("num_steps and max_skip must be >= 1")
        weights = {(int(i), int(j)): float(w) for (i, j), w in self.weights.items()}
        for i in range(T):
            if weights.setdefault((i, i + 1), 0.0) != 0.0:
                raise ContractViolation(f"unit edge ({i}, {i + 1}) must have weight 0")
        for (i, j), w in weights.items():
            if not (0 <= i < j <= T and j - i <= L):
                raise ContractViolation(f"edge ({i}, {j}) outside the forward band of length {L}")
            if not (math.isfinite(w) and w >= 0):
                raise ContractViolation(f"edge ({i}, {j}) has invalid weight {w!r}")
        succ: list[list[tuple[int, float]]] = [[] for _ in range(T + 1)]
        for (i, j), w in sorted(weights.items()):
            succ[i].append((j, w))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_succ", tuple(tuple(s) for s in succ))

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return self.num_steps

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(i, j, w) for (i, j), w in sorted(self.weights.items())]

    def successors(self, node: int) -> tuple[tuple[int, float], ...]:
        """Outgoing ``(target, weight)`` pairs in increasing target order."""
        return self._succ[node]

    def weight(self, i: int, j: int) -> float:
        return self.weights[(i, j)]

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.weights


def build_graph(matrix: ErrorMatrix) -> ScheduleGraph:
    return ScheduleGraph(matrix.num_steps, matrix.max_skip, dict(matrix.values))


def feasible_budgets(graph: ScheduleGraph) -> tuple[int, int]:
    """Smallest and largest edge count of a source-to-sink path.

    On a complete band this is ``(ceil(T / L), T)`` and every budget in between
    is realisable (maximal skips first, then unit edges).
    """
    T = graph.num_steps
    hops = [0] + [T + 1] * T
    for v in range(T):
        for u, _ in graph.successors(v):
            hops[u] = min(hops[u], hops[v] + 1)
    return hops[T], T


def signature_of(weights: Sequence[float]) -> tuple[float, ...]:
    return tuple(sorted(weights, reverse=True))


@dataclass(frozen=True)
class SchedulePath:
    """Node sequence ``0 = v_0 < ... < v_B = T`` with its descending cache-error signature."""

    nodes: tuple[int, ...]
    signature: tuple[float, ...]

    @property
    def budget(self) -> int:
        return len(self.nodes) - 1

    @property
    def num_steps(self) -> int:
        return self.nodes[-1]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.nodes, self.nodes[1:]))

    @property
    def cache_edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, b in self.edges if b - a >= 2]

    @property
    def max_error(self) -> float:
        return self.signature[0] if self.signature else 0.0

    @property
    def total_error(self) -> float:
        return float(sum(self.signature))


def path_from_nodes(graph: ScheduleGraph, nodes: Sequence[int]) -> SchedulePath:
    """Build a path from nodes already known to be valid in ``graph``."""
    nodes = tuple(nodes)
    cache = [graph.weight(a, b) for a, b in zip(nodes, nodes[1:]) if b - a >= 2]
    return SchedulePath(nodes, signature_of(cache))


def validate_path(graph: ScheduleGraph, nodes: Sequence[int], budget: int) -> SchedulePath:
    nodes = tuple(int(n) for n in nodes)
    if not nodes or nodes[0] != graph.source or nodes[-1] != graph.sink:
        raise WrongEndpointsError(
            f"path must start at {graph.source} and end at {graph.sink}, got {list(nodes)[:1]}..{list(nodes)[-1:]}"
        )
    for a, b in zip(nodes, nodes[1:]):
        if b <= a:
            raise NonMonotoneError(f"nodes not strictly increasing at {a} -> {b}")
    if len(nodes) - 1 != budget:
        raise WrongEdgeCountError(f"path has {len(nodes) - 1} edges, budget is {budget}")
    for a, b in zip(nodes, nodes[1:]):
        if not graph.has_edge(a, b):
            raise MissingEdgeError(f"edge ({a}, {b}) is not in the graph")
    return path_from_nodes(graph, nodes)


def schedule_to_dict(path: SchedulePath, strategy: str, **extra) -> dict:
    data = {
        "num_steps": path.num_steps,
        "budget": path.budget,
        "nodes": list(path.nodes),
        "signature": list(path.signature),
        "strategy": strategy,
    }
    data.update(extra)
    return data


def dumps_schedule(path: SchedulePath, strategy: str, **extra) -> str:
    return json.dumps(schedule_to_dict(path, strategy, **extra), indent=1) + "\n"


def loads_schedule(text: str) -> dict:
    """Parse a schedule file, checking its internal consistency."""
    data = json.loads(text)
    for key in ("num_steps", "budget", "nodes", "strategy"):
        if key not in data:
            raise ContractViolation(f"schedule file lacks {key!r}")
    nodes = [int(n) for n in data["nodes"]]
    if nodes[0] != 0 or nodes[-1] != data["num_steps"]:
        raise ContractViolation("schedule nodes do not span 0..num_steps")
    if len(nodes) - 1 != data["budget"]:
        raise ContractViolation("schedule budget does not match its node count")
    data["nodes"] = nodes
    return data
