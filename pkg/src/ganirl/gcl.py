"""Guided cost learning: sample-based maximum-entropy IRL.

The cost loss is the negative log-likelihood of the demonstrations with the
partition function replaced by an importance-sampling estimate over the
demo/generator mixture. The importance weights use the current model as the
demo-density estimate, which makes Z self-referential; it is resolved with
:func:`ganirl.partition.fixed_point_partition_estimate`.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.special import logsumexp, softmax

from .cost import CostModel, trajectory_cost, trajectory_cost_grad
from .mdp import Mdp, Trajectories, enumerate_trajectories, sample_trajectories, trajectory_log_density
from .partition import FixedPointResult, fixed_point_partition_estimate, log_mixture_density
from .policy import Policy, enumerated_log_density, soft_value_iteration
from .rng import stream
from .samples import SampleSet
from .training import (
    METRIC_COLUMNS,
    TrainConfig,
    TrainReport,
    kl_divergence,
    model_log_density,
    run_adversarial_irl,
)

__all__ = [
    "TrainConfig",
    "TrainReport",
    "exact_maxent_irl",
    "exact_nll",
    "exact_nll_grad",
    "irl_cost_grad",
    "irl_cost_loss",
    "irl_surrogate_loss",
    "train_gcl",
    "train_maxent_exact",
]


def _resolve(cost: CostModel, samples: SampleSet, log_z: float | None) -> float:
    if log_z is not None:
        return float(log_z)
    return fixed_point_partition_estimate(cost, samples).log_z


def _log_importance(cost: CostModel, samples: SampleSet, log_z: float):
    counts, log_q, weights = samples.mixture()
    c = counts @ cost.flat()
    return -c - log_mixture_density(c, log_z, log_q) + np.log(weights), counts


def irl_cost_loss(
    cost: CostModel, samples: SampleSet, fixed_point: FixedPointResult | None = None
) -> float:
    """E_p[c] + log E_mu[ exp(-c) / mu~ ], with mu~ at the resolved Z."""
    log_z = _resolve(cost, samples, None if fixed_point is None else fixed_point.log_z)
    log_terms, _ = _log_importance(cost, samples, log_z)
    return float(np.dot(samples.demo_weights, samples.demo_costs(cost)) + logsumexp(log_terms))


def irl_surrogate_loss(cost: CostModel, samples: SampleSet, log_mu_tilde: np.ndarray) -> float:
    """Cost loss with the mixture density frozen at ``log_mu_tilde`` (one value
    per mixture item). Its gradient is the one guided cost learning follows."""
    counts, _, weights = samples.mixture()
    c = counts @ cost.flat()
    return float(
        np.dot(samples.demo_weights, samples.demo_costs(cost))
        + logsumexp(-c - log_mu_tilde + np.log(weights))
    )


def frozen_log_mu_tilde(cost: CostModel, samples: SampleSet, log_z: float | None = None) -> np.ndarray:
    counts, log_q, _ = samples.mixture()
    return log_mixture_density(counts @ cost.flat(), _resolve(cost, samples, log_z), log_q)


def irl_cost_grad(cost: CostModel, samples: SampleSet, log_z: float | None = None) -> np.ndarray:
    """E_p[dc] - E_mu[ w dc ] / E_mu[ w ],  w = exp(-c) / mu~.

    mu~ is held constant: no derivative flows through the importance weights.
    """
    log_z = _resolve(cost, samples, log_z)
    log_terms, counts = _log_importance(cost, samples, log_z)
    weights = softmax(log_terms)
    return (
        samples.demo_weights @ samples.demo_grads(cost)
        - weights @ (counts @ cost.jacobian())
    )


def _demo_expectations(mdp: Mdp, cost: CostModel, expert: Policy | None, demos):
    """(E_p[c], E_p[dc]) from the expert's exact density or from demo samples."""
    if (expert is None) == (demos is None):
        raise ValueError("pass exactly one of expert or demos")
    if demos is not None:
        demos = Trajectories.of(demos)
        return float(np.mean(trajectory_cost(cost, demos))), trajectory_cost_grad(cost, demos).mean(axis=0)
    trajs = enumerate_trajectories(mdp)
    p = np.exp(trajectory_log_density(expert, trajs))
    return float(p @ trajectory_cost(cost, trajs)), p @ trajectory_cost_grad(cost, trajs)


def exact_nll(mdp: Mdp, cost: CostModel, expert: Policy | None = None, demos=None) -> float:
    """E_p[c] + log Z, with Z summed exactly over every trajectory."""
    e_c, _ = _demo_expectations(mdp, cost, expert, demos)
    return e_c + float(logsumexp(-trajectory_cost(cost, enumerate_trajectories(mdp))))


def exact_nll_grad(mdp: Mdp, cost: CostModel, expert: Policy | None = None, demos=None) -> np.ndarray:
    """Demo feature expectations minus model feature expectations."""
    _, e_grad = _demo_expectations(mdp, cost, expert, demos)
    trajs = enumerate_trajectories(mdp)
    p_model = softmax(-trajectory_cost(cost, trajs))
    return e_grad - p_model @ trajectory_cost_grad(cost, trajs)


def exact_maxent_irl(
    mdp: Mdp,
    expert: Policy | None,
    init: CostModel,
    iterations: int,
    step: float,
    demos=None,
) -> CostModel:
    """Gradient descent on the exact negative log-likelihood.

    Demo expectations come from ``expert`` (exact) or, if ``expert`` is None,
    from the ``demos`` batch; the partition function is always exact.
    """
    trajs = enumerate_trajectories(mdp)
    grads = trajectory_cost_grad(init, trajs)
    _, e_demo = _demo_expectations(mdp, init, expert, demos)
    theta = init.params.copy()
    for _ in range(iterations):
        # costs are linear in theta, so c(tau) = grad_c(tau) . theta
        p_model = softmax(-(grads @ theta))
        theta = theta - step * (e_demo - p_model @ grads)
    return init.with_params(theta)


def train_maxent_exact(config: TrainConfig) -> TrainReport:
    """:func:`exact_maxent_irl` with the trainers' report.

    Demo expectations come from the same demo batch the sample-based trainers
    draw (or from the expert in exact mode), so the run is the same-budget
    oracle for them. ``disc_loss`` is the exact NLL, ``gen_loss`` the sampler
    loss of the soft-optimal policy (-log Z) and ``log_z`` the exact log Z.
    """
    t0 = time.perf_counter()
    mdp = config.mdp
    expert = soft_value_iteration(mdp, config.true_cost)
    log_p = enumerated_log_density(expert)
    demos = None
    if config.expectations == "empirical":
        demos = sample_trajectories(expert, config.n_demos, stream(config.seed, "demos"))
    cost = config.initial_cost()
    trajs = enumerate_trajectories(mdp)
    grads = trajectory_cost_grad(cost, trajs)
    _, e_demo = _demo_expectations(mdp, cost, None if demos is not None else expert, demos)
    report = TrainReport()
    for it in range(config.iterations):
        neg = -(grads @ cost.params)
        log_z = float(logsumexp(neg))
        grad = e_demo - softmax(neg) @ grads
        nll = float(e_demo @ cost.params + log_z)
        cost = cost.with_params(cost.params - config.step_size * grad)
        row = {
            "iteration": it,
            "disc_loss": nll,
            "gen_loss": -log_z,
            "log_z": log_z,
            "exact_kl": kl_divergence(log_p, model_log_density(mdp, cost)),
            "grad_norm": float(np.linalg.norm(grad)),
        }
        report.rows.append({k: row[k] for k in METRIC_COLUMNS})
        report.theta_trace.append(cost.params.copy())
    report.final_params = cost.params.copy()
    report.final_kl = report.rows[-1]["exact_kl"]
    report.converged = True
    report.wall_clock = time.perf_counter() - t0
    return report


def train_gcl(config: TrainConfig) -> TrainReport:
    """Alternate importance-sampled cost steps with generator best responses."""
    return run_adversarial_irl(config, _gcl_step)


def _gcl_step(config, cost, b, samples):
    fp = fixed_point_partition_estimate(cost, samples)
    loss = irl_cost_loss(cost, samples, fp)
    grad = irl_cost_grad(cost, samples, fp.log_z)
    # sampler loss E_q[c + log q] on the same generator batch
    gen = float(np.dot(samples.gen_weights, samples.gen_costs(cost) + samples.gen_log_q))
    new_cost = cost.with_params(cost.params - config.step_size * grad)
    metrics = {
        "disc_loss": loss,
        "gen_loss": gen,
        "log_z": fp.log_z,
        "grad_norm": float(np.linalg.norm(grad)),
    }
    return new_cost, fp.log_z, metrics
