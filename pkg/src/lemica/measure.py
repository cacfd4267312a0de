"""Local and global cache-error measurements on the toy sampler."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from lemica.exceptions import ContractViolation, DegenerateReferenceError
from lemica.sampler import (
    MixtureModel,
    ModelFamily,
    NoiseSchedule,
    Trajectory,
    check_seed,
    denoiser_output,
    reverse_step,
    run_cached,
    run_full,
)

log = logging.getLogger(__name__)

REFERENCE_FLOOR = 1e-12
CSV_HEADER = ("i", "j", "error", "samples")


def thread_count() -> int:
    """Worker cap from ``LEMICA_THREADS`` (default 1)."""
    raw = os.environ.get("LEMICA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ContractViolation(f"LEMICA_THREADS={raw!r} is not an integer") from None


def local_rel_l1(output_a: np.ndarray, output_b: np.ndarray) -> float:
    """``|a - b|_1 / |b|_1``; ``b`` is the reference output."""
    a = np.asarray(output_a, dtype=np.float64)
    b = np.asarray(output_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    ref = float(np.abs(b).sum())
    if ref <= REFERENCE_FLOOR:
        raise DegenerateReferenceError(f"reference L1 norm {ref!r} is degenerate")
    return float(np.abs(a - b).sum()) / ref


def mean_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).sum()) / a.size


def single_skip_nodes(num_steps: int, i: int, j: int) -> list[int]:
    return list(range(i + 1)) + list(range(j, num_steps + 1))


def segment_error(
    model: MixtureModel, schedule: NoiseSchedule, x_init: np.ndarray, i: int, j: int
) -> float:
    """Mean absolute final-sample error from caching the single segment ``i -> j``."""
    T = schedule.num_steps
    if not 0 <= i < j <= T:
        raise ContractViolation(f"need 0 <= i < j <= {T}, got ({i}, {j})")
    reference = run_full(model, schedule, x_init).final
    cached = run_cached(model, schedule, x_init, single_skip_nodes(T, i, j))
    return mean_abs_diff(cached, reference)


def _segment_errors_from_trajectory(
    model: MixtureModel, schedule: NoiseSchedule, full: Trajectory, max_skip: int
) -> dict[tuple[int, int], float]:
    # Prefix states of the full run are exactly what run_cached would recompute.
    T = schedule.num_steps
    reference = full.final
    errors = {}
    for i in range(T):
        out = full.outputs[i]
        for j in range(i + 2, min(i + max_skip, T) + 1):
            x = reverse_step(schedule, full.states[i], out, i, j)
            for n in range(j, T):
                x = reverse_step(schedule, x, denoiser_output(model, schedule, x, n), n, n + 1)
            errors[(i, j)] = mean_abs_diff(x, reference)
    return errors


@dataclass(frozen=True, eq=False)
class ErrorMatrix:
    """Mean global cache error per candidate segment.

    ``values`` holds every pair with ``1 <= j - i <= max_skip``; unit pairs are 0.
    """

    num_steps: int
    max_skip: int
    values: Mapping[tuple[int, int], float]
    sample_count: int

    def __post_init__(self) -> None:
        T, L = self.num_steps, self.max_skip
        if T < 1 or L < 1:
            raise ContractViolation("num_steps and max_skip must be >= 1")
        if self.sample_count < 1:
            raise ContractViolation("sample_count must be >= 1")
        values = {(int(i), int(j)): float(w) for (i, j), w in self.values.items()}
        for i in range(T):
            values.setdefault((i, i + 1), 0.0)
            if values[(i, i + 1)] != 0.0:
                raise ContractViolation(f"unit edge ({i}, {i + 1}) must carry zero error")
        expected = {(i, j) for i in range(T) for j in range(i + 1, min(i + L, T) + 1)}
        if set(values) != expected:
            missing = sorted(expected - set(values))[:3]
            extra = sorted(set(values) - expected)[:3]
            raise ContractViolation(f"matrix entries mismatch: missing {missing}, unexpected {extra}")
        for key, w in values.items():
            if not (np.isfinite(w) and w >= 0):
                raise ContractViolation(f"error at {key} is {w!r}; must be finite and >= 0")
        object.__setattr__(self, "values", values)

    def __getitem__(self, key: tuple[int, int]) -> float:
        return self.values[key]

    def skip_items(self) -> list[tuple[tuple[int, int], float]]:
        """Stored non-unit entries in ``(i, j)`` order."""
        return sorted((k, w) for k, w in self.values.items() if k[1] - k[0] >= 2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for (i, j), w in self.skip_items():
            writer.writerow((i, j, repr(w), self.sample_count))
        return buf.getvalue()

    @classmethod
    def from_csv(
        cls, text: str, num_steps: int | None = None, max_skip: int | None = None
    ) -> "ErrorMatrix":
        """Parse the CSV form; ``num_steps``/``max_skip`` are inferred from rows when omitted."""
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and tuple(rows[0].keys()) != CSV_HEADER:
            raise ContractViolation(f"CSV header must be {','.join(CSV_HEADER)}")
        values = {(int(r["i"]), int(r["j"])): float(r["error"]) for r in rows}
        counts = {int(r["samples"]) for r in rows}
        if len(counts) > 1:
            raise ContractViolation(f"inconsistent sample counts {sorted(counts)}")
        if num_steps is None:
            if not rows:
                raise ContractViolation("num_steps is required for a matrix without skip rows")
            num_steps = max(j for _, j in values)
        if max_skip is None:
            max_skip = max((j - i for i, j in values), default=1)
        return cls(num_steps, max_skip, values, counts.pop() if counts else 1)

    def to_dict(self) -> dict:
        return {
            "num_steps": self.num_steps,
            "max_skip": self.max_skip,
            "sample_count": self.sample_count,
            "values": [{"i": i, "j": j, "error": w} for (i, j), w in self.skip_items()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorMatrix":
        values = {(int(v["i"]), int(v["j"])): float(v["error"]) for v in data["values"]}
        return cls(int(data["num_steps"]), int(data["max_skip"]), values, int(data["sample_count"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ErrorMatrix":
        return cls.from_dict(json.loads(text))


def weighted_merge(a: ErrorMatrix, b: ErrorMatrix) -> ErrorMatrix:
    """Sample-count weighted mean of two matrices over the same grid."""
    if (a.num_steps, a.max_skip) != (b.num_steps, b.max_skip):
        raise ContractViolation("matrices cover different grids")
    n = a.sample_count + b.sample_count
    values = {
        k: (a.sample_count * a.values[k] + b.sample_count * b.values[k]) / n for k in a.values
    }
    return ErrorMatrix(a.num_steps, a.max_skip, values, n)


def _map_seeds(fn, seeds: Sequence[int]) -> list:
    workers = min(thread_count(), len(seeds))
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def build_error_matrix(
    model_family: ModelFamily, schedule: NoiseSchedule, seeds: Iterable[int], max_skip: int
) -> ErrorMatrix:
    seeds = [check_seed(s) for s in seeds]
    if not seeds:
        raise ContractViolation("at least one seed is required")
    if max_skip < 1:
        raise ContractViolation("max_skip must be >= 1")

    def one(seed: int) -> dict[tuple[int, int], float]:
        start = time.perf_counter()
        model, x_init = model_family(seed)
        full = run_full(model, schedule, x_init)
        errors = _segment_errors_from_trajectory(model, schedule, full, max_skip)
        log.info("seed %d: %d segments in %.1f ms", seed, len(errors), 1e3 * (time.perf_counter() - start))
        return errors

    per_seed = _map_seeds(one, seeds)
    # reduction in seed order keeps results bit-reproducible
    totals: dict[tuple[int, int], float] = {}
    for errors in per_seed:
        for key, w in errors.items():
            totals[key] = totals.get(key, 0.0) + w
    values = {key: total / len(seeds) for key, total in totals.items()}
    return ErrorMatrix(schedule.num_steps, max_skip, values, len(seeds))


@dataclass(frozen=True, eq=False)
class LocalErrorProfile:
    """Entry ``k``: relative L1 change of the output from node ``k`` to node ``k + 1``."""

    num_steps: int
    rel_l1: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.rel_l1, dtype=np.float64).reshape(-1)
        if arr.shape[0] != max(self.num_steps - 1, 0):
            raise ContractViolation(f"profile length {arr.shape[0]} != T - 1 = {self.num_steps - 1}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ContractViolation("profile entries must be finite and >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "rel_l1", arr)

    def to_dict(self) -> dict:
        return {"num_steps": self.num_steps, "rel_l1": [float(v) for v in self.rel_l1]}

    @classmethod
    def from_dict(cls, data: dict) -> "LocalErrorProfile":
        return cls(int(data["num_steps"]), np.asarray(data["rel_l1"], dtype=np.float64))


def trajectory_profile(trajectory: Trajectory) -> np.ndarray:
    # reference is the earlier output (higher diffusion time)
    outs = trajectory.outputs
    return np.array([local_rel_l1(outs[k + 1], outs[k]) for k in range(len(outs) - 1)])


def build_local_profile(
    model_family: ModelFamily, schedule: NoiseSchedule, seeds: Iterable[int]
) -> LocalErrorProfile:
    seeds = [check_seed(s) for s in seeds]
    if not seeds:
        raise ContractViolation("at least one seed is required")

    def one(seed: int) -> np.ndarray:
        model, x_init = model_family(seed)
        return trajectory_profile(run_full(model, schedule, x_init))

    total = np.zeros(schedule.num_steps - 1)
    for profile in _map_seeds(one, seeds):
        total = total + profile
    return LocalErrorProfile(schedule.num_steps, total / len(seeds))
