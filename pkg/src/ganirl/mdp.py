"""Deterministic finite-horizon gridworlds and their trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator

import numpy as np

if TYPE_CHECKING:
    from .policy import Policy

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTION_NAMES = ("up", "down", "left", "right")
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

DEFAULT_ENUMERATION_CAP = 10**7


class ConfigError(ValueError):
    """Invalid world or experiment configuration."""


class EnumerationTooLarge(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"{count} trajectories exceeds the enumeration cap of {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True, eq=False)
class Mdp:
    """Gridworld with clamping walls. States are row-major cell indices."""

    width: int
    height: int
    start_state: int
    horizon: int
    next_state: np.ndarray  # [n_states, n_actions] int

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]

    @property
    def n_trajectories(self) -> int:
        return self.n_actions**self.horizon

    def next(self, state: int, action: int) -> int:
        return int(self.next_state[state, action])

    def coords(self, state: int) -> tuple[int, int]:
        return divmod(state, self.width)


def build_gridworld(width: int, height: int, start: int = 0, horizon: int = 1) -> Mdp:
    for name, value in (("width", width), ("height", height)):
        if value < 1:
            raise ConfigError(f"{name} must be positive, got {value}")
    if horizon < 1:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    n_states = width * height
    if not 0 <= start < n_states:
        raise ConfigError(f"start {start} outside [0, {n_states})")

    table = np.empty((n_states, len(_MOVES)), dtype=np.int64)
    for s in range(n_states):
        row, col = divmod(s, width)
        for a, (dr, dc) in enumerate(_MOVES):
            r, c = row + dr, col + dc
            if 0 <= r < height and 0 <= c < width:
                table[s, a] = r * width + c
            else:
                table[s, a] = s
    table.setflags(write=False)
    return Mdp(width=width, height=height, start_state=start, horizon=horizon, next_state=table)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # [T]
    actions: np.ndarray  # [T]

    def __len__(self) -> int:
        return len(self.actions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(
            self.actions, other.actions
        )

    def __hash__(self) -> int:
        return hash((tuple(self.states.tolist()), tuple(self.actions.tolist())))


@dataclass(frozen=True, eq=False)
class Trajectories:
    """A batch of equal-length trajectories stored as [N, T] index arrays."""

    states: np.ndarray
    actions: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i):
        """An int gives one Trajectory; a slice, mask or index array gives a batch."""
        if isinstance(i, (int, np.integer)):
            return Trajectory(self.states[i], self.actions[i])
        return Trajectories(self.states[i], self.actions[i])

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def of(cls, trajs: "Trajectory | Trajectories | list[Trajectory]") -> "Trajectories":
        if isinstance(trajs, Trajectories):
            return trajs
        if isinstance(trajs, Trajectory):
            return cls(trajs.states[None, :], trajs.actions[None, :])
        trajs = list(trajs)
        if not trajs:
            raise ValueError("empty trajectory list")
        return cls(
            np.stack([t.states for t in trajs]), np.stack([t.actions for t in trajs])
        )

    def concat(self, other: "Trajectories") -> "Trajectories":
        return Trajectories(
            np.concatenate([self.states, other.states]),
            np.concatenate([self.actions, other.actions]),
        )


def rollout(mdp: Mdp, actions: np.ndarray) -> np.ndarray:
    """States visited by each action sequence in ``actions`` ([N, T])."""
    actions = np.asarray(actions, dtype=np.int64)
    states = np.empty_like(actions)
    s = np.full(actions.shape[0], mdp.start_state, dtype=np.int64)
    for t in range(actions.shape[1]):
        states[:, t] = s
        s = mdp.next_state[s, actions[:, t]]
    return states


def enumerate_trajectories(mdp: Mdp, cap: int = DEFAULT_ENUMERATION_CAP) -> Trajectories:
    """All n_actions**T trajectories in lexicographic action-sequence order."""
    count = mdp.n_trajectories
    if count > cap:
        raise EnumerationTooLarge(count, cap)
    T, A = mdp.horizon, mdp.n_actions
    codes = np.arange(count, dtype=np.int64)
    powers = A ** np.arange(T - 1, -1, -1, dtype=np.int64)
    actions = (codes[:, None] // powers[None, :]) % A
    return Trajectories(rollout(mdp, actions), actions)


def trajectory_index(mdp: Mdp, trajs: Trajectory | Trajectories) -> np.ndarray:
    """Position of each trajectory in :func:`enumerate_trajectories` order."""
    actions = Trajectories.of(trajs).actions
    powers = mdp.n_actions ** np.arange(mdp.horizon - 1, -1, -1, dtype=np.int64)
    return actions @ powers


def is_consistent(mdp: Mdp, tau: Trajectory) -> bool:
    if len(tau) != mdp.horizon or tau.states[0] != mdp.start_state:
        return False
    expected = rollout(mdp, tau.actions[None, :])[0]
    return bool(np.array_equal(expected, tau.states))


def step_log_probs(policy: "Policy", trajs: Trajectories) -> np.ndarray:
    T = policy.log_tables.shape[0]
    if trajs.states.shape[1] != T:
        raise ValueError(
            f"trajectory length {trajs.states.shape[1]} does not match policy horizon {T}"
        )
    return policy.log_tables[np.arange(T)[None, :], trajs.states, trajs.actions]


def trajectory_log_density(policy: "Policy", tau: Trajectory | Trajectories):
    """log q(tau) = sum_t log pi_t(u_t | x_t); -inf where the policy has no support.

    Returns a float for a single trajectory and an array for a batch.
    """
    batch = Trajectories.of(tau)
    with np.errstate(invalid="ignore"):
        out = step_log_probs(policy, batch).sum(axis=1)
    return float(out[0]) if isinstance(tau, Trajectory) else out


def sample_trajectories(policy: "Policy", n: int, rng: np.random.Generator) -> Trajectories:
    mdp = policy.mdp
    states = np.empty((n, mdp.horizon), dtype=np.int64)
    actions = np.empty((n, mdp.horizon), dtype=np.int64)
    s = np.full(n, mdp.start_state, dtype=np.int64)
    probs = policy.tables
    for t in range(mdp.horizon):
        states[:, t] = s
        cdf = np.cumsum(probs[t, s], axis=1)
        cdf /= cdf[:, -1:]
        u = rng.random(n)
        a = (cdf <= u[:, None]).sum(axis=1)
        actions[:, t] = a
        s = mdp.next_state[s, a]
    return Trajectories(states, actions)


def sample_trajectory(policy: "Policy", rng: np.random.Generator) -> Trajectory:
    return sample_trajectories(policy, 1, rng)[0]
