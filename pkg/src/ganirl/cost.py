"""Costs (and energies) that are linear in their parameters.

A cost assigns c(x, u) to every state-action cell. Cells are laid out
row-major, state major and action minor, so cell ``x * n_actions + u``.
Energies over a plain sample space reuse the same machinery with a single
action per point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, Trajectories, Trajectory


@dataclass(frozen=True, eq=False)
class CostModel:
    params: np.ndarray
    shape: tuple[int, int]  # (n_states, n_actions)
    features: np.ndarray | None = None  # [n_cells, n_features]; None means tabular

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        if params.ndim != 1:
            raise ValueError("cost params must be a flat vector")
        if not np.all(np.isfinite(params)):
            raise ValueError("cost params must be finite")
        n_cells = self.shape[0] * self.shape[1]
        if self.features is None:
            if params.size != n_cells:
                raise ValueError(f"tabular cost needs {n_cells} params, got {params.size}")
        else:
            feats = np.asarray(self.features, dtype=float)
            if feats.shape != (n_cells, params.size):
                raise ValueError(
                    f"features shape {feats.shape} does not match ({n_cells}, {params.size})"
                )
            object.__setattr__(self, "features", feats)
        object.__setattr__(self, "params", params)

    @property
    def kind(self) -> str:
        return "tabular" if self.features is None else "linear"

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]

    def jacobian(self) -> np.ndarray:
        """d c(cell) / d theta, one row per cell."""
        if self.features is None:
            return np.eye(self.n_cells)
        return self.features

    def flat(self) -> np.ndarray:
        if self.features is None:
            return self.params.copy()
        return self.features @ self.params

    def table(self) -> np.ndarray:
        return self.flat().reshape(self.shape)

    def with_params(self, params) -> "CostModel":
        return CostModel(np.array(params, dtype=float), self.shape, self.features)

    def shifted(self, k: float) -> "CostModel":
        """k added to every cell. Tabular only."""
        if self.features is not None:
            raise ValueError("constant shift is only defined for tabular costs")
        return self.with_params(self.params + k)


def tabular_cost(params, shape: tuple[int, int]) -> CostModel:
    return CostModel(np.asarray(params, dtype=float).ravel(), shape)


def linear_cost(params, features) -> CostModel:
    """``features`` is [n_states, n_actions, n_features]."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 3:
        raise ValueError("features must be [n_states, n_actions, n_features]")
    n_s, n_a, n_f = feats.shape
    return CostModel(np.asarray(params, dtype=float), (n_s, n_a), feats.reshape(n_s * n_a, n_f))


def zero_cost(mdp: Mdp) -> CostModel:
    return tabular_cost(np.zeros(mdp.n_states * mdp.n_actions), (mdp.n_states, mdp.n_actions))


def cell_index(cost: CostModel, trajs: Trajectories) -> np.ndarray:
    return trajs.states * cost.shape[1] + trajs.actions


def visit_counts(trajs: Trajectory | Trajectories, n_states: int, n_actions: int) -> np.ndarray:
    """[N, n_cells] matrix of how often each trajectory visits each (x, u)."""
    batch = Trajectories.of(trajs)
    n = len(batch)
    n_cells = n_states * n_actions
    idx = batch.states * n_actions + batch.actions
    rows = np.repeat(np.arange(n), idx.shape[1])
    flat = np.bincount(rows * n_cells + idx.ravel(), minlength=n * n_cells)
    return flat.reshape(n, n_cells).astype(float)


def trajectory_cost(cost: CostModel, tau: Trajectory | Trajectories):
    """c(tau) = sum_t c(x_t, u_t); float for one trajectory, array for a batch."""
    batch = Trajectories.of(tau)
    out = cost.flat()[cell_index(cost, batch)].sum(axis=1)
    return float(out[0]) if isinstance(tau, Trajectory) else out


def trajectory_cost_grad(cost: CostModel, tau: Trajectory | Trajectories) -> np.ndarray:
    """d c(tau) / d theta: visit counts (tabular) or summed features (linear)."""
    counts = visit_counts(tau, *cost.shape)
    grad = counts @ cost.jacobian()
    return grad[0] if isinstance(tau, Trajectory) else grad


def grid_features(mdp: Mdp, name: str, goal: int | None = None) -> np.ndarray:
    """Named feature maps over (x, u), shaped [n_states, n_actions, n_features].

    ``onehot``  one indicator per cell; reproduces the tabular family.
    ``goal``    [lands on goal, normalised Manhattan distance of the landing
                cell to the goal, bumped into a wall, 1]. The constant column
                shifts every trajectory cost equally; its weight is not
                identifiable but it gives a trainable log Z bias a flat
                direction to trade against instead of distorting the others.
    """
    S, A = mdp.n_states, mdp.n_actions
    if name == "onehot":
        return np.eye(S * A).reshape(S, A, S * A)
    if name == "goal":
        goal = S - 1 if goal is None else goal
        if not 0 <= goal < S:
            raise ValueError(f"goal {goal} outside [0, {S})")
        gr, gc = mdp.coords(goal)
        span = max(mdp.width + mdp.height - 2, 1)
        feats = np.zeros((S, A, 4))
        for s in range(S):
            for a in range(A):
                nxt = mdp.next(s, a)
                r, c = mdp.coords(nxt)
                feats[s, a, 0] = float(nxt == goal)
                feats[s, a, 1] = (abs(r - gr) + abs(c - gc)) / span
                feats[s, a, 2] = float(nxt == s)
                feats[s, a, 3] = 1.0
        return feats
    raise ValueError(f"unknown feature set {name!r}")
