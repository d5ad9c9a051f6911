"""GAN whose discriminator is given the generator's density.

    D(tau) = exp(-c(tau))/Z / (exp(-c(tau))/Z + q(tau)) = logistic(-c - b - log q)

with b = log Z a trainable bias. Losses follow the usual GAN definitions; the
generator loss is the sum of the minimax and the log-confusion variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .cost import CostModel, trajectory_cost
from .mdp import Trajectories, Trajectory, trajectory_log_density
from .partition import LOG2, fixed_point_partition_estimate, log_mixture_density
from .policy import Policy
from .samples import SampleSet
from .training import TrainConfig, TrainReport, run_adversarial_irl


@dataclass(frozen=True, eq=False)
class DiscriminatorParams:
    cost: CostModel
    b: float

    def __post_init__(self):
        if not np.isfinite(self.b):
            raise ValueError("discriminator bias must be finite")

    def with_bias(self, b: float) -> "DiscriminatorParams":
        return DiscriminatorParams(self.cost, float(b))


def discriminator_logit(d: DiscriminatorParams, costs, log_q):
    return -np.asarray(costs) - d.b - np.asarray(log_q)


def discriminator_output(d: DiscriminatorParams, policy: Policy, tau: Trajectory | Trajectories):
    """D(tau) in (0, 1]; exactly 1 where q(tau) = 0."""
    c = trajectory_cost(d.cost, tau)
    log_q = trajectory_log_density(policy, tau)
    return expit(discriminator_logit(d, c, log_q))


def discriminator_ratio(d: DiscriminatorParams, policy: Policy, tau: Trajectory | Trajectories):
    """The same quantity written as a density ratio; overflows for extreme inputs."""
    model = np.exp(-trajectory_cost(d.cost, tau) - d.b)
    q = np.exp(trajectory_log_density(policy, tau))
    return model / (model + q)


def _sides(d: DiscriminatorParams, samples: SampleSet):
    z_demo = discriminator_logit(d, samples.demo_costs(d.cost), samples.demo_log_q)
    z_gen = discriminator_logit(d, samples.gen_costs(d.cost), samples.gen_log_q)
    return z_demo, z_gen


def discriminator_loss(d: DiscriminatorParams, samples: SampleSet) -> float:
    """E_p[-log D] + E_q[-log(1 - D)]."""
    z_demo, z_gen = _sides(d, samples)
    return float(
        -np.dot(samples.demo_weights, log_expit(z_demo))
        - np.dot(samples.gen_weights, log_expit(-z_gen))
    )


def discriminator_loss_expanded(d: DiscriminatorParams, samples: SampleSet) -> float:
    """log Z + E_p[c] - E_q[log q] + 2 E_mu[log(exp(-c)/Z + q)]: the same loss regrouped.

    The last term uses the unhalved sum, i.e. 2 mu~; with mu~ itself the
    regrouping is off by the constant 2 log 2.
    """
    counts, log_q, weights = samples.mixture()
    log_mu = log_mixture_density(counts @ d.cost.flat(), d.b, log_q) + LOG2
    return float(
        d.b
        + np.dot(samples.demo_weights, samples.demo_costs(d.cost))
        - np.dot(samples.gen_weights, samples.gen_log_q)
        + 2.0 * np.dot(weights, log_mu)
    )


def discriminator_grad(d: DiscriminatorParams, samples: SampleSet) -> tuple[np.ndarray, float]:
    """Gradient of :func:`discriminator_loss` in (theta, b)."""
    z_demo, z_gen = _sides(d, samples)
    miss_demo = samples.demo_weights * expit(-z_demo)  # w (1 - D) on data
    miss_gen = samples.gen_weights * expit(z_gen)  # w D on generator output
    grad_theta = miss_demo @ samples.demo_grads(d.cost) - miss_gen @ samples.gen_grads(d.cost)
    grad_b = float(miss_demo.sum() - miss_gen.sum())
    return grad_theta, grad_b


def generator_integrand(d: DiscriminatorParams, costs, log_q) -> np.ndarray:
    """log(1 - D) - log D per generator sample."""
    z = discriminator_logit(d, costs, log_q)
    return log_expit(-z) - log_expit(z)


def generator_loss(d: DiscriminatorParams, samples: SampleSet) -> float:
    """E_q[-log D] + E_q[log(1 - D)] over the generator side of ``samples``."""
    integrand = generator_integrand(d, samples.gen_costs(d.cost), samples.gen_log_q)
    return float(np.dot(samples.gen_weights, integrand))


def bias_stationarity(d: DiscriminatorParams, samples: SampleSet) -> float:
    """d loss / d b = 1 - 2 E_mu[D]."""
    return discriminator_grad(d, samples)[1]


def train_gan_irl(config: TrainConfig) -> TrainReport:
    """Alternate discriminator gradient steps with generator best responses.

    See :class:`ganirl.training.TrainConfig` for the knobs; ``b_mode='pinned'``
    resets the bias to the fixed-point partition estimate before every step.
    """
    return run_adversarial_irl(config, _gan_step)


def _gan_step(config, cost, b, samples):
    if b is None or config.b_mode == "pinned":
        b = fixed_point_partition_estimate(cost, samples).log_z
    d = DiscriminatorParams(cost, b)
    disc = discriminator_loss(d, samples)
    gen = generator_loss(d, samples)
    g_theta, g_b = discriminator_grad(d, samples)
    new_cost = cost.with_params(cost.params - config.step_size * g_theta)
    new_b = b - config.step_size * g_b if config.b_mode == "joint" else b
    grad_norm = float(np.sqrt(np.dot(g_theta, g_theta) + (g_b**2 if config.b_mode == "joint" else 0.0)))
    return new_cost, new_b, {"disc_loss": disc, "gen_loss": gen, "log_z": b, "grad_norm": grad_norm}
