"""Toy diffusion sampler with an exact Gaussian-mixture denoiser.

Node convention used throughout the package: node ``n`` in ``0..T`` counts
sampling progress and sits at diffusion time ``t = T - n``.  Node 0 is pure
noise, node T is the final sample, and every edge points from a lower to a
higher node index.

The denoiser predicts noise (epsilon parameterisation) from the closed-form
posterior mean of the mixture, and the reverse update is deterministic DDIM
(eta = 0), so a cached segment ``i -> j`` is a single DDIM jump that reuses
the output computed at node ``i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from lemica.exceptions import ContractViolation

ALPHA_BAR_FLOOR = 1e-8
MAX_BETA = 0.999
COSINE_OFFSET = 0.008
WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Isotropic Gaussian mixture with a shared component standard deviation."""

    means: np.ndarray  # (K, d)
    weights: np.ndarray  # (K,)
    component_std: float

    def __post_init__(self) -> None:
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if means.shape[0] < 1 or means.shape[1] < 1:
            raise ContractViolation("mixture needs at least one component of dimension >= 1")
        if weights.shape[0] != means.shape[0]:
            raise ContractViolation(
                f"{weights.shape[0]} weights for {means.shape[0]} components"
            )
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ContractViolation("weights must be positive and sum to 1")
        if not self.component_std > 0:
            raise ContractViolation("component_std must be > 0")
        if not (np.all(np.isfinite(means)) and math.isfinite(self.component_std)):
            raise ContractViolation("mixture parameters must be finite")
        means.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "component_std", float(self.component_std))

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def num_components(self) -> int:
        return int(self.means.shape[0])

    @classmethod
    def single(cls, mean: Sequence[float], component_std: float) -> "MixtureModel":
        return cls(np.asarray([mean], dtype=np.float64), np.ones(1), component_std)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Cumulative signal level ``alpha_bar[k]`` for diffusion time ``k = 0..T``."""

    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        ab = np.asarray(self.alpha_bar, dtype=np.float64).reshape(-1)
        if ab.shape[0] < 2:
            raise ContractViolation("schedule needs at least one step")
        if ab[0] != 1.0:
            raise ContractViolation("alpha_bar[0] must be exactly 1")
        if np.any(np.diff(ab) >= 0) or ab[-1] <= 0:
            raise ContractViolation("alpha_bar must be strictly decreasing and positive")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def num_steps(self) -> int:
        return int(self.alpha_bar.shape[0] - 1)

    @classmethod
    def cosine(cls, num_steps: int) -> "NoiseSchedule":
        """Cosine schedule; per-step betas are clipped at 0.999 so alpha_bar[T] > 0."""
        if num_steps < 1:
            raise ContractViolation("num_steps must be >= 1")
        u = np.arange(num_steps + 1, dtype=np.float64) / num_steps
        f = np.cos(0.5 * np.pi * (u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) ** 2
        raw = f / f[0]
        betas = np.minimum(1.0 - raw[1:] / raw[:-1], MAX_BETA)
        alpha_bar = np.empty(num_steps + 1)
        alpha_bar[0] = 1.0
        alpha_bar[1:] = np.cumprod(1.0 - betas)
        return cls(alpha_bar)

    def at_node(self, node: int) -> float:
        if not 0 <= node <= self.num_steps:
            raise ContractViolation(f"node {node} outside 0..{self.num_steps}")
        return float(self.alpha_bar[self.num_steps - node])


Nodes = Sequence[int]


@dataclass
class Trajectory:
    states: list[np.ndarray]
    outputs: list[np.ndarray]
    schedule_used: Union[str, tuple[int, ...]] = "full"

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _check_node(schedule: NoiseSchedule, node: int) -> None:
    if not 0 <= node < schedule.num_steps:
        raise ContractViolation(
            f"denoiser node {node} outside 0..{schedule.num_steps - 1}"
        )


def _check_state(model: MixtureModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ContractViolation(f"state has shape {x.shape}, expected ({model.dim},)")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("state contains non-finite values")
    return x


def _logsumexp(a: np.ndarray) -> float:
    top = a.max()
    return float(top + math.log(np.exp(a - top).sum()))


def _log_responsibilities(model: MixtureModel, x: np.ndarray, ab: float) -> tuple[np.ndarray, float]:
    var = ab * model.component_std**2 + (1.0 - ab)
    diff = x[None, :] - math.sqrt(ab) * model.means
    logits = np.log(model.weights) - 0.5 * np.sum(diff * diff, axis=1) / var
    return logits - _logsumexp(logits), var


def posterior_mean(model: MixtureModel, schedule: NoiseSchedule, x: np.ndarray, node: int) -> np.ndarray:
    """Exact ``E[x_0 | x_t]`` at the diffusion time of ``node``."""
    _check_node(schedule, node)
    x = _check_state(model, x)
    ab = schedule.at_node(node)
    log_r, var = _log_responsibilities(model, x, ab)
    resp = np.exp(log_r)
    shrink = math.sqrt(ab) * model.component_std**2 / var
    per_component = model.means + shrink * (x[None, :] - math.sqrt(ab) * model.means)
    return resp @ per_component


def denoiser_output(model: MixtureModel, schedule: NoiseSchedule, x: np.ndarray, node: int) -> np.ndarray:
    """Noise prediction ``(x - sqrt(ab) E[x_0|x]) / sqrt(1 - ab)`` at ``node``."""
    x0 = posterior_mean(model, schedule, x, node)
    ab = schedule.at_node(node)
    return (np.asarray(x, dtype=np.float64) - math.sqrt(ab) * x0) / math.sqrt(
        max(1.0 - ab, ALPHA_BAR_FLOOR)
    )


def log_density(model: MixtureModel, schedule: NoiseSchedule, x: np.ndarray, node: int) -> float:
    """Log of the noised marginal ``q_t(x)`` at the diffusion time of ``node``."""
    x = _check_state(model, x)
    ab = schedule.at_node(node)
    var = ab * model.component_std**2 + (1.0 - ab)
    diff = x[None, :] - math.sqrt(ab) * model.means
    logits = (
        np.log(model.weights)
        - 0.5 * np.sum(diff * diff, axis=1) / var
        - 0.5 * model.dim * math.log(2.0 * math.pi * var)
    )
    return _logsumexp(logits)


def reverse_step(
    schedule: NoiseSchedule, x: np.ndarray, output: np.ndarray, from_node: int, to_node: int
) -> np.ndarray:
    """Deterministic DDIM move from ``from_node`` to ``to_node`` with a fixed output."""
    if not 0 <= from_node < to_node <= schedule.num_steps:
        raise ContractViolation(
            f"need 0 <= from_node < to_node <= {schedule.num_steps}, got {from_node} -> {to_node}"
        )
    ab_from = schedule.at_node(from_node)
    ab_to = schedule.at_node(to_node)
    if ab_from < 1e-12:
        raise ContractViolation(f"alpha_bar {ab_from!r} at node {from_node} is too small")
    x0_hat = (x - math.sqrt(1.0 - ab_from) * output) / math.sqrt(ab_from)
    return math.sqrt(ab_to) * x0_hat + math.sqrt(1.0 - ab_to) * output


def run_full(model: MixtureModel, schedule: NoiseSchedule, x_init: np.ndarray) -> Trajectory:
    x = _check_state(model, x_init).copy()
    states = [x]
    outputs = []
    for node in range(schedule.num_steps):
        out = denoiser_output(model, schedule, x, node)
        x = reverse_step(schedule, x, out, node, node + 1)
        outputs.append(out)
        states.append(x)
    return Trajectory(states, outputs, "full")


def check_nodes(nodes: Nodes, num_steps: int) -> tuple[int, ...]:
    nodes = tuple(int(n) for n in nodes)
    if len(nodes) < 2 or nodes[0] != 0 or nodes[-1] != num_steps:
        raise ContractViolation(f"schedule must run from node 0 to node {num_steps}")
    if any(b <= a for a, b in zip(nodes, nodes[1:])):
        raise ContractViolation("schedule nodes must be strictly increasing")
    return nodes


def replay(
    model: MixtureModel, schedule: NoiseSchedule, x_init: np.ndarray, nodes: Nodes
) -> tuple[np.ndarray, int]:
    """Run a cached schedule; returns the final state and the denoiser call count."""
    nodes = check_nodes(nodes, schedule.num_steps)
    x = _check_state(model, x_init).copy()
    calls = 0
    for a, b in zip(nodes, nodes[1:]):
        out = denoiser_output(model, schedule, x, a)
        calls += 1
        x = reverse_step(schedule, x, out, a, b)
    return x, calls


def run_cached(model: MixtureModel, schedule: NoiseSchedule, x_init: np.ndarray, path) -> np.ndarray:
    """Replay ``path`` (a SchedulePath or a node sequence) and return the final state."""
    nodes = getattr(path, "nodes", path)
    return replay(model, schedule, x_init, nodes)[0]


@dataclass(frozen=True)
class MixtureFamily:
    """Seeded sampler of ``(model, x_init)`` pairs standing in for prompts and noise seeds."""

    dim: int = 8
    num_components: int = 4
    component_std: float = 1.0
    mean_range: float = 2.0

    def __call__(self, seed: int) -> tuple[MixtureModel, np.ndarray]:
        rng = np.random.default_rng(check_seed(seed))
        means = rng.uniform(-self.mean_range, self.mean_range, size=(self.num_components, self.dim))
        weights = np.full(self.num_components, 1.0 / self.num_components)
        x_init = rng.standard_normal(self.dim)
        return MixtureModel(means, weights, self.component_std), x_init


ModelFamily = Callable[[int], "tuple[MixtureModel, np.ndarray]"]


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ContractViolation(f"seed {seed} is not a 64-bit unsigned integer")
    return seed


def model_to_dict(model: MixtureModel, schedule: NoiseSchedule | None = None) -> dict:
    data = {
        "dim": model.dim,
        "component_std": model.component_std,
        "components": [
            {"mean": [float(v) for v in mean], "weight": float(w)}
            for mean, w in zip(model.means, model.weights)
        ],
    }
    if schedule is not None:
        data["num_steps"] = schedule.num_steps
        data["alpha_bar"] = "cosine"
    return data


def model_from_dict(data: dict) -> tuple[MixtureModel, NoiseSchedule | None]:
    components = data["components"]
    model = MixtureModel(
        np.array([c["mean"] for c in components], dtype=np.float64),
        np.array([c["weight"] for c in components], dtype=np.float64),
        data["component_std"],
    )
    if model.dim != data.get("dim", model.dim):
        raise ContractViolation(f"dim {data['dim']} does not match component means")
    schedule = None
    if "num_steps" in data:
        kind = data.get("alpha_bar", "cosine")
        if isinstance(kind, str):
            if kind != "cosine":
                raise ContractViolation(f"unknown alpha_bar schedule {kind!r}")
            schedule = NoiseSchedule.cosine(int(data["num_steps"]))
        else:
            schedule = NoiseSchedule(np.asarray(kind, dtype=np.float64))
            if schedule.num_steps != int(data["num_steps"]):
                raise ContractViolation("alpha_bar length does not match num_steps")
    return model, schedule


def dumps_model(model: MixtureModel, schedule: NoiseSchedule | None = None) -> str:
    return json.dumps(model_to_dict(model, schedule))


def loads_model(text: str) -> tuple[MixtureModel, NoiseSchedule | None]:
    return model_from_dict(json.loads(text))
