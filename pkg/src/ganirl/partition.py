"""Partition functions: exact enumeration and importance-sampling estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import log_expit, logsumexp

from .cost import CostModel, trajectory_cost
from .mdp import Mdp, Trajectories, Trajectory, enumerate_trajectories, trajectory_log_density
from .policy import Policy
from .samples import SampleSet

LOG2 = float(np.log(2.0))


class Partition(NamedTuple):
    log_z: float
    z: float


class FixedPointResult(NamedTuple):
    z: float
    iterations: int
    log_z: float
    history: tuple[float, ...]


class FixedPointDivergence(RuntimeError):
    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = tuple(history)


def exact_partition(mdp: Mdp, cost: CostModel) -> Partition:
    """Z = sum over every trajectory of exp(-c(tau)), summed in log space."""
    costs = trajectory_cost(cost, enumerate_trajectories(mdp))
    log_z = float(logsumexp(-costs))
    return Partition(log_z, float(np.exp(log_z)))


@dataclass(frozen=True, eq=False)
class MixtureDensityParams:
    cost: CostModel
    log_z: float
    policy: Policy

    def __post_init__(self):
        if not np.isfinite(self.log_z):
            raise ValueError("log_z must be finite")


def log_mixture_density(costs, log_z: float, log_q) -> np.ndarray:
    """log( exp(-c)/(2Z) + q/2 )."""
    return np.logaddexp(-np.asarray(costs) - log_z, np.asarray(log_q)) - LOG2


def mixture_model_density(params: MixtureDensityParams, tau: Trajectory | Trajectories):
    """mu~(tau) = exp(-c(tau)) / (2Z) + q(tau) / 2."""
    c = trajectory_cost(params.cost, tau)
    log_q = trajectory_log_density(params.policy, tau)
    return np.exp(log_mixture_density(c, params.log_z, log_q))


def _logits(cost: CostModel, samples: SampleSet):
    """Per-item discriminator logit before the bias, -c - log q, over mu."""
    counts, log_q, weights = samples.mixture()
    return -(counts @ cost.flat()) - log_q, np.log(weights)


def _residual(s, log_w, b):
    """log(2 E_mu[D]) at bias b; zero exactly at the fixed point."""
    log_d = log_expit(s - b)
    log_ed = logsumexp(log_d + log_w)
    log_ed1md = logsumexp(log_d + log_expit(b - s) + log_w)
    return LOG2 + log_ed, -np.exp(log_ed1md - log_ed)


def importance_log_z(cost: CostModel, samples: SampleSet, log_z: float) -> float:
    """log E_mu[ exp(-c) / mu~ ], with mu~ built from the given Z."""
    counts, log_q, weights = samples.mixture()
    c = counts @ cost.flat()
    return float(logsumexp(-c - log_mixture_density(c, log_z, log_q) + np.log(weights)))


def importance_partition_estimate(costs, log_ptilde, log_q, weights) -> float:
    """Z estimate E_mu[ exp(-c) / (p~/2 + q/2) ] for a fixed density estimate p~."""
    log_mu = np.logaddexp(np.asarray(log_ptilde), np.asarray(log_q)) - LOG2
    return float(np.exp(logsumexp(-np.asarray(costs) - log_mu + np.log(weights))))


def _initial_log_z(s, weights) -> float:
    finite = np.isfinite(s)
    return float(np.sum(weights[finite] * s[finite]) / np.sum(weights[finite]))


def fixed_point_partition_estimate(
    cost: CostModel,
    samples: SampleSet,
    tol: float = 1e-12,
    max_iter: int = 200,
    init_log_z: float | None = None,
) -> FixedPointResult:
    """Resolve Z = E_mu[ exp(-c) / mu~_Z ] where mu~ itself contains Z.

    The plain map Z <- E_mu[exp(-c)/mu~_Z] is a contraction in log Z. Each
    iteration tries a Newton step on the same residual and keeps it only if it
    shrinks the residual; otherwise it takes the plain step. Stops when
    |Z_{k+1} - Z_k| / Z_k < tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    s, log_w = _logits(cost, samples)
    b = _initial_log_z(s, np.exp(log_w)) if init_log_z is None else float(init_log_z)
    history = [b]
    r, dr = _residual(s, log_w, b)
    for k in range(1, max_iter + 1):
        b_next = b + r
        if dr < 0:
            newton = b - r / dr
            r_newton, dr_newton = _residual(s, log_w, newton)
            if np.isfinite(r_newton) and abs(r_newton) < abs(r):
                b_next, r_next, dr_next = newton, r_newton, dr_newton
            else:
                r_next, dr_next = _residual(s, log_w, b_next)
        else:
            r_next, dr_next = _residual(s, log_w, b_next)
        if not np.isfinite(b_next):
            raise FixedPointDivergence("partition fixed point produced a non-finite iterate", history)
        history.append(b_next)
        step = abs(np.expm1(b_next - b))
        b, r, dr = b_next, r_next, dr_next
        if step < tol:
            return FixedPointResult(float(np.exp(b)), k, b, tuple(history))
    raise FixedPointDivergence(
        f"partition fixed point did not converge in {max_iter} iterations", history
    )
