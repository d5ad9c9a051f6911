"""Time-indexed tabular policies: the trajectory generator q(tau)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .cost import CostModel, trajectory_cost
from .mdp import Mdp, Trajectories, enumerate_trajectories, trajectory_log_density

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Policy:
    """pi_t(u | x) for t < T. ``log_tables`` is the primary representation so
    that densities of soft-optimal policies stay exact far into the tails."""

    mdp: Mdp
    log_tables: np.ndarray  # [T, n_states, n_actions]

    def __post_init__(self):
        expected = (self.mdp.horizon, self.mdp.n_states, self.mdp.n_actions)
        if self.log_tables.shape != expected:
            raise ValueError(f"policy tables have shape {self.log_tables.shape}, want {expected}")
        sums = np.exp(self.log_tables).sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > ROW_TOL:
            raise ValueError("policy rows must sum to 1")

    @property
    def tables(self) -> np.ndarray:
        return np.exp(self.log_tables)

    @classmethod
    def from_probabilities(cls, mdp: Mdp, tables) -> "Policy":
        tables = np.asarray(tables, dtype=float)
        if np.any(tables < 0) or np.any(tables > 1):
            raise ValueError("policy probabilities must lie in [0, 1]")
        tables = tables / tables.sum(axis=2, keepdims=True)
        with np.errstate(divide="ignore"):
            return cls(mdp, np.log(tables))

    @classmethod
    def from_logits(cls, mdp: Mdp, logits) -> "Policy":
        logits = np.asarray(logits, dtype=float)
        return cls(mdp, logits - logsumexp(logits, axis=2, keepdims=True))


def uniform_policy(mdp: Mdp) -> Policy:
    return Policy.from_logits(mdp, np.zeros((mdp.horizon, mdp.n_states, mdp.n_actions)))


def random_policy(mdp: Mdp, rng: np.random.Generator, scale: float = 1.0) -> Policy:
    """Full-support policy with Gaussian logits."""
    logits = scale * rng.standard_normal((mdp.horizon, mdp.n_states, mdp.n_actions))
    return Policy.from_logits(mdp, logits)


def deterministic_policy(mdp: Mdp, actions) -> Policy:
    """Always take ``actions[t]`` at step t, whatever the state."""
    tables = np.zeros((mdp.horizon, mdp.n_states, mdp.n_actions))
    for t, a in enumerate(actions):
        tables[t, :, a] = 1.0
    return Policy.from_probabilities(mdp, tables)


def soft_values(mdp: Mdp, cost: CostModel) -> tuple[np.ndarray, np.ndarray]:
    """Backward soft Bellman recursion.

    Q_t(x,u) = -c(x,u) + V_{t+1}(next(x,u)),  V_t(x) = logsumexp_u Q_t(x,u),
    with V_T = 0. Returns Q [T, S, A] and V [T+1, S]; V[0, start] is log Z.
    """
    c = cost.table()
    T = mdp.horizon
    Q = np.empty((T, mdp.n_states, mdp.n_actions))
    V = np.zeros((T + 1, mdp.n_states))
    for t in range(T - 1, -1, -1):
        Q[t] = -c + V[t + 1][mdp.next_state]
        V[t] = logsumexp(Q[t], axis=1)
    return Q, V


def soft_value_iteration(mdp: Mdp, cost: CostModel) -> Policy:
    """The policy whose trajectory density is exp(-c(tau)) / Z."""
    Q, V = soft_values(mdp, cost)
    log_pi = Q - V[:-1, :, None]
    # Q - V loses absolute precision when costs are large; renormalise the O(1) result
    return Policy(mdp, log_pi - logsumexp(log_pi, axis=2, keepdims=True))


def damped_update(old: Policy, new: Policy, alpha: float) -> Policy:
    """Mix action distributions, alpha * new + (1 - alpha) * old."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return new
    mixed = np.logaddexp(np.log(alpha) + new.log_tables, np.log1p(-alpha) + old.log_tables)
    return Policy(new.mdp, mixed - logsumexp(mixed, axis=2, keepdims=True))


def enumerated_log_density(policy: Policy) -> np.ndarray:
    return trajectory_log_density(policy, enumerate_trajectories(policy.mdp))


def _expect_q(log_q: np.ndarray, values: np.ndarray) -> float:
    support = np.isfinite(log_q)
    return float(np.sum(np.exp(log_q[support]) * values[support]))


def sampler_loss(
    policy: Policy, cost: CostModel, samples: Trajectories | None = None
) -> float:
    """E_q[c(tau)] + E_q[log q(tau)].

    With ``samples=None`` the expectation is an exact sum over every
    trajectory; otherwise it is the average over ``samples``, which must
    have been drawn from ``policy``.
    """
    if samples is None:
        trajs = enumerate_trajectories(policy.mdp)
        log_q = trajectory_log_density(policy, trajs)
        support = np.isfinite(log_q)
        c = trajectory_cost(cost, trajs)
        return _expect_q(log_q, np.where(support, c + log_q, 0.0))
    samples = Trajectories.of(samples)
    if len(samples) == 0:
        raise ValueError("empirical sampler loss needs at least one sample")
    log_q = trajectory_log_density(policy, samples)
    return float(np.mean(trajectory_cost(cost, samples) + log_q))


def policy_entropy(policy: Policy) -> float:
    log_q = enumerated_log_density(policy)
    return -_expect_q(log_q, np.where(np.isfinite(log_q), log_q, 0.0))
