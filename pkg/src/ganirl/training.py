"""Shared configuration, reports and the alternating loop for trajectory IRL."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .cost import CostModel, grid_features, linear_cost, trajectory_cost
from .mdp import ConfigError, Mdp, build_gridworld, enumerate_trajectories, sample_trajectories
from .partition import FixedPointDivergence
from .policy import Policy, damped_update, enumerated_log_density, soft_value_iteration
from .rng import stream
from .samples import empirical_samples, exact_samples

SCHEMA_VERSION = 1
METRIC_COLUMNS = ("iteration", "disc_loss", "gen_loss", "log_z", "exact_kl", "grad_norm")


@dataclass(frozen=True, eq=False)
class TrainConfig:
    width: int
    height: int
    start: int
    horizon: int
    true_cost: CostModel
    n_demos: int = 500
    n_gen_samples: int = 500
    iterations: int = 200
    step_size: float = 0.1
    disc_steps: int = 1
    damping: float = 1.0
    seed: int = 0
    expectations: str = "empirical"  # or "exact"
    b_mode: str = "joint"  # or "pinned"
    init_params: np.ndarray | None = None
    init_b: float | None = None  # None: fixed-point estimate on the first batch
    init_policy: str = "model"  # or "expert"
    freeze_generator: bool = False

    def __post_init__(self):
        for name in ("n_demos", "n_gen_samples", "iterations", "disc_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.step_size > 0:
            raise ConfigError("step_size must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        if self.expectations not in ("empirical", "exact"):
            raise ConfigError(f"unknown expectations mode {self.expectations!r}")
        if self.b_mode not in ("joint", "pinned"):
            raise ConfigError(f"unknown b_mode {self.b_mode!r}")
        if self.init_policy not in ("model", "expert"):
            raise ConfigError(f"unknown init_policy {self.init_policy!r}")
        if self.expectations == "empirical" and self.n_demos != self.n_gen_samples:
            raise ConfigError("demo and generator batches must be the same size")
        if self.init_params is not None and len(self.init_params) != self.true_cost.n_params:
            raise ConfigError("init_params length does not match the cost family")

    @property
    def mdp(self) -> Mdp:
        return build_gridworld(self.width, self.height, self.start, self.horizon)

    def initial_cost(self) -> CostModel:
        if self.init_params is None:
            return self.true_cost.with_params(np.zeros(self.true_cost.n_params))
        return self.true_cost.with_params(self.init_params)


@dataclass
class TrainReport:
    rows: list[dict] = field(default_factory=list)
    theta_trace: list[np.ndarray] = field(default_factory=list)
    final_params: np.ndarray | None = None
    final_b: float | None = None
    final_kl: float = float("nan")
    converged: bool = False
    error: str | None = None
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.error is not None

    def same_run(self, other: "TrainReport") -> bool:
        """Bitwise equality of everything except wall-clock time."""
        if self.rows != other.rows or len(self.theta_trace) != len(other.theta_trace):
            return False
        if not all(np.array_equal(a, b) for a, b in zip(self.theta_trace, other.theta_trace)):
            return False
        return (
            np.array_equal(self.final_params, other.final_params)
            and self.final_b == other.final_b
            and (self.final_kl == other.final_kl or (np.isnan(self.final_kl) and np.isnan(other.final_kl)))
            and self.error == other.error
        )


DEFAULT_TRUE_THETA = (-2.0, 1.5, 1.0, 0.0)


def default_config(**overrides) -> TrainConfig:
    """3x3 grid, start in a corner, horizon 5, goal in the opposite corner.

    The true cost rewards landing on the goal and penalises distance to it and
    wall bumps, over the ``goal`` feature set.
    """
    geometry = {k: overrides.pop(k) for k in ("width", "height", "start", "horizon") if k in overrides}
    geometry = {"width": 3, "height": 3, "start": 0, "horizon": 5, **geometry}
    if "true_cost" not in overrides:
        mdp = build_gridworld(**geometry)
        feats = grid_features(mdp, "goal", goal=mdp.n_states - 1)
        overrides["true_cost"] = linear_cost(np.array(DEFAULT_TRUE_THETA), feats)
    return TrainConfig(**geometry, **overrides)


def kl_divergence(log_p: np.ndarray, log_r: np.ndarray) -> float:
    """KL(p || r) for distributions over the same enumerated support."""
    support = np.isfinite(log_p)
    p = np.exp(log_p[support])
    return float(np.sum(p * (log_p[support] - log_r[support])))


def model_log_density(mdp: Mdp, cost: CostModel) -> np.ndarray:
    """log p_theta(tau) over every trajectory, in enumeration order."""
    neg = -trajectory_cost(cost, enumerate_trajectories(mdp))
    return neg - logsumexp(neg)


def run_adversarial_irl(config: TrainConfig, step_fn) -> TrainReport:
    """The alternating loop shared by the GAN and guided-cost-learning trainers.

    ``step_fn(config, cost, b, samples) -> (cost, b, metrics)`` performs one
    cost/discriminator update. The generator is then replaced by the damped
    soft-optimal policy for the new cost.
    """
    t0 = time.perf_counter()
    mdp = config.mdp
    expert = soft_value_iteration(mdp, config.true_cost)
    log_p = enumerated_log_density(expert)
    demos = None
    if config.expectations == "empirical":
        demos = sample_trajectories(expert, config.n_demos, stream(config.seed, "demos"))

    cost = config.initial_cost()
    b = config.init_b
    policy: Policy = expert if config.init_policy == "expert" else soft_value_iteration(mdp, cost)
    report = TrainReport()
    for it in range(config.iterations):
        if demos is None:
            samples = exact_samples(mdp, expert, policy)
        else:
            gens = sample_trajectories(policy, config.n_gen_samples, stream(config.seed, "gens", it))
            samples = empirical_samples(policy, demos, gens)
        try:
            for _ in range(config.disc_steps):
                cost, b, metrics = step_fn(config, cost, b, samples)
        except (FixedPointDivergence, ValueError, FloatingPointError) as exc:
            report.error = f"iteration {it}: {exc}"
            break
        kl = kl_divergence(log_p, model_log_density(mdp, cost))
        row = {"iteration": it, **metrics, "exact_kl": kl}
        report.rows.append({k: float(row[k]) if k != "iteration" else it for k in METRIC_COLUMNS})
        report.theta_trace.append(cost.params.copy())
        if not all(np.isfinite(v) for v in row.values()) or not np.all(np.isfinite(cost.params)):
            report.error = f"non-finite loss or parameters at iteration {it}"
            break
        if not config.freeze_generator:
            try:
                policy = damped_update(policy, soft_value_iteration(mdp, cost), config.damping)
            except ValueError as exc:
                report.error = f"generator update at iteration {it}: {exc}"
                break

    report.final_params = cost.params.copy()
    report.final_b = None if b is None else float(b)
    report.final_kl = report.rows[-1]["exact_kl"] if report.rows else float("nan")
    report.converged = report.error is None
    report.wall_clock = time.perf_counter() - t0
    return report
