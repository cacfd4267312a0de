"""Local-greedy threshold caching baseline.

Walks the trajectory accumulating the local relative-L1 output change since
the last full computation and recomputes once the running sum reaches the
threshold; the accumulator then resets to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lemica.exceptions import ContractViolation
from lemica.measure import LocalErrorProfile

BISECTION_ITERS = 200


@dataclass(frozen=True)
class GreedyConfig:
    threshold: float
    num_steps: int

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ContractViolation("threshold must be > 0")


def greedy_schedule(profile: LocalErrorProfile, config: GreedyConfig) -> list[int]:
    T = config.num_steps
    if profile.num_steps != T:
        raise ContractViolation(f"profile covers T={profile.num_steps}, config T={T}")
    nodes = [0]
    acc = 0.0
    for n in range(1, T):
        acc += float(profile.rel_l1[n - 1])
        if acc >= config.threshold:
            nodes.append(n)
            acc = 0.0
    nodes.append(T)
    return nodes


def realized_budget(profile: LocalErrorProfile, threshold: float) -> int:
    return len(greedy_schedule(profile, GreedyConfig(threshold, profile.num_steps))) - 1


@dataclass(frozen=True)
class Calibration:
    threshold: float
    realized_budget: int
    exact: bool


def calibrate_threshold(profile: LocalErrorProfile, target_budget: int) -> Calibration:
    """Bisect the threshold so the greedy schedule spends ``target_budget`` computations.

    When the budget jumps over the target, the threshold realising the nearest
    budget below it is returned with ``exact=False``.
    """
    T = profile.num_steps
    if not 1 <= target_budget <= T:
        raise ContractViolation(f"target budget {target_budget} unreachable; achievable range is 1..{T}")
    entries = np.asarray(profile.rel_l1)
    positive = entries[entries > 0]
    # lo realises the largest reachable budget, hi realises B = 1
    lo = max(float(positive.min()) / 2, math.ulp(0.0)) if positive.size else 1.0
    hi = float(entries.sum()) * 2 + 1.0
    for budget_at, delta in ((realized_budget(profile, lo), lo), (realized_budget(profile, hi), hi)):
        if budget_at == target_budget:
            return Calibration(delta, budget_at, True)
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        got = realized_budget(profile, mid)
        if got == target_budget:
            return Calibration(mid, got, True)
        if got > target_budget:
            lo = mid
        else:
            hi = mid
    return Calibration(hi, realized_budget(profile, hi), False)
