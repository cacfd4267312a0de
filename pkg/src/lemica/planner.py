"""Exact-budget path planners over a ScheduleGraph.

``plan_lexmin`` picks, among all source-to-sink paths with exactly ``B``
edges, the one whose descending-sorted cache-error vector is
lexicographically smallest.  Ties on that vector go to the lexicographically
smallest node sequence.

The search runs in two stages.  The bottleneck DP (best achievable maximum
cache error per ``(node, k)`` state) bounds which edges can appear in any
optimal path.  A second DP over the surviving edges keeps a single candidate
per state, ordered by ``(signature, nodes)``.  Keeping one candidate is exact:
the sorted-descending lexicographic order on multisets is preserved by adding
the same suffix edges to both sides, and so is the node-sequence order of
equal-length prefixes.
"""

from __future__ import annotations

import bisect
import math
import operator
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from lemica.exceptions import BudgetInfeasibleError, ContractViolation, OracleTooLargeError
from lemica.graph import ScheduleGraph, SchedulePath, feasible_budgets, path_from_nodes, signature_of

ORACLE_PATH_LIMIT = 10**7

LexSignature = tuple[float, ...]


def check_signature(sig: Sequence[float]) -> LexSignature:
    sig = tuple(float(w) for w in sig)
    if any(b > a for a, b in zip(sig, sig[1:])):
        raise ContractViolation(f"signature {list(sig)} is not sorted non-increasing")
    return sig


def compare_lex(a: Sequence[float], b: Sequence[float]) -> int:
    """-1, 0 or 1 as ``a`` is below, equal to or above ``b``; an equal prefix that is shorter is smaller."""
    a, b = check_signature(a), check_signature(b)
    for x, y in zip(a, b):
        if x != y:
            return -1 if x < y else 1
    return (len(a) > len(b)) - (len(a) < len(b))


def _check_budget(graph: ScheduleGraph, budget: int) -> None:
    lo, hi = feasible_budgets(graph)
    if not lo <= budget <= hi:
        raise BudgetInfeasibleError(budget, lo, hi)


def _reachable(graph: ScheduleGraph, node: int, edges_left: int) -> bool:
    gap = graph.num_steps - node
    return edges_left <= gap <= edges_left * graph.max_skip


@dataclass
class PlanState:
    """Bottleneck table ``best_max[k, v]`` (inf where no ``k``-edge path reaches ``v``)
    plus the surviving candidate ``(signature, nodes)`` per reached state."""

    best_max: np.ndarray
    candidates: dict[tuple[int, int], tuple[LexSignature, tuple[int, ...]]]


def bottleneck_table(graph: ScheduleGraph, budget: int) -> np.ndarray:
    """Minimum over ``k``-edge paths to ``v`` of the largest cache-edge weight."""
    T = graph.num_steps
    best = np.full((budget + 1, T + 1), math.inf)
    best[0, 0] = 0.0
    for k in range(budget):
        for v in range(T + 1):
            here = best[k, v]
            if here == math.inf:
                continue
            for u, w in graph.successors(v):
                m = max(here, w) if u - v >= 2 else here
                if m < best[k + 1, u]:
                    best[k + 1, u] = m
    return best


def _insert_desc(sig: LexSignature, w: float) -> LexSignature:
    pos = bisect.bisect_left(sig, -w, key=operator.neg)
    return sig[:pos] + (w,) + sig[pos:]


def _lexmin_dp(
    graph: ScheduleGraph, budget: int, better: Callable[[object, object], bool] = operator.lt
) -> PlanState:
    best = bottleneck_table(graph, budget)
    bound = best[budget, graph.sink]
    states: dict[tuple[int, int], tuple[LexSignature, tuple[int, ...]]] = {(0, 0): ((), (0,))}
    for k in range(budget):
        for v in range(graph.num_steps + 1):
            current = states.get((v, k))
            if current is None:
                continue
            sig, nodes = current
            for u, w in graph.successors(v):
                if not _reachable(graph, u, budget - k - 1):
                    continue
                if u - v >= 2:
                    if w > bound:
                        continue
                    cand = (_insert_desc(sig, w), nodes + (u,))
                else:
                    cand = (sig, nodes + (u,))
                held = states.get((u, k + 1))
                if held is None or better(cand, held):
                    states[(u, k + 1)] = cand
    return PlanState(best, states)


def plan_lexmin(graph: ScheduleGraph, budget: int) -> SchedulePath:
    _check_budget(graph, budget)
    state = _lexmin_dp(graph, budget)
    return path_from_nodes(graph, _final_nodes(graph, budget, state.candidates))


def _final_nodes(graph: ScheduleGraph, budget: int, states: dict) -> tuple[int, ...]:
    try:
        return states[(graph.sink, budget)][1]
    except KeyError:
        # only reachable on sparse hand-built graphs
        lo, hi = feasible_budgets(graph)
        raise BudgetInfeasibleError(budget, lo, hi) from None


def _plan_lexmin_flipped(graph: ScheduleGraph, budget: int) -> SchedulePath:
    # negative control for the oracle check: keeps the worse candidate per state
    _check_budget(graph, budget)
    state = _lexmin_dp(graph, budget, better=operator.gt)
    return path_from_nodes(graph, _final_nodes(graph, budget, state.candidates))


def plan_shortest(graph: ScheduleGraph, budget: int) -> SchedulePath:
    """Exact-``B`` path minimising the sum of cache-edge weights."""
    _check_budget(graph, budget)
    states: dict[tuple[int, int], tuple[float, tuple[int, ...]]] = {(0, 0): (0.0, (0,))}
    for k in range(budget):
        for v in range(graph.num_steps + 1):
            current = states.get((v, k))
            if current is None:
                continue
            total, nodes = current
            for u, w in graph.successors(v):
                if not _reachable(graph, u, budget - k - 1):
                    continue
                cand = (total + w if u - v >= 2 else total, nodes + (u,))
                held = states.get((u, k + 1))
                if held is None or cand < held:
                    states[(u, k + 1)] = cand
    return path_from_nodes(graph, _final_nodes(graph, budget, states))


def count_paths(graph: ScheduleGraph, budget: int) -> int:
    T = graph.num_steps
    counts = [[0] * (T + 1) for _ in range(budget + 1)]
    counts[0][0] = 1
    for k in range(budget):
        for v in range(T + 1):
            if counts[k][v]:
                for u, _ in graph.successors(v):
                    counts[k + 1][u] += counts[k][v]
    return counts[budget][T]


def iter_paths(graph: ScheduleGraph, budget: int) -> Iterator[tuple[int, ...]]:
    """Depth-first enumeration of every ``budget``-edge source-to-sink path."""
    T = graph.num_steps
    stack = [(0,)]
    while stack:
        nodes = stack.pop()
        v, left = nodes[-1], budget - (len(nodes) - 1)
        if left == 0:
            if v == T:
                yield nodes
            continue
        for u, _ in reversed(graph.successors(v)):
            if left - 1 <= T - u <= (left - 1) * graph.max_skip:
                stack.append(nodes + (u,))


def enumerate_optimal(graph: ScheduleGraph, budget: int) -> tuple[LexSignature, SchedulePath]:
    """Brute-force lexmin optimum, used as a testing oracle."""
    _check_budget(graph, budget)
    total = count_paths(graph, budget)
    if total > ORACLE_PATH_LIMIT:
        raise OracleTooLargeError(f"{total} paths exceed the oracle limit {ORACLE_PATH_LIMIT}")
    best = None
    for nodes in iter_paths(graph, budget):
        sig = signature_of(graph.weight(a, b) for a, b in zip(nodes, nodes[1:]) if b - a >= 2)
        if best is None or (sig, nodes) < best:
            best = (sig, nodes)
    if best is None:
        lo, hi = feasible_budgets(graph)
        raise BudgetInfeasibleError(budget, lo, hi)
    sig, nodes = best
    return sig, SchedulePath(nodes, sig)


PLANNERS = {"lexmin": plan_lexmin, "shortest": plan_shortest}
