"""Weighted demo / generator sample sets.

Every expectation in the GAN and IRL objectives is a weighted sum over two
item sets: demonstrations (the data distribution p) and generator outputs
(q). An *empirical* set uses uniform weights over drawn samples. An *exact*
set lists every trajectory on both sides with weights p(tau) and q(tau), so
the same code computes the closed-form expectations. The mixture mu is the
concatenation with every weight halved.

Items are stored by their visit-count vectors, so cost and cost gradient are
``counts @ c`` and ``counts @ J``. Energy models over a flat sample space
use one-hot counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostModel, visit_counts
from .mdp import Mdp, Trajectories, enumerate_trajectories, trajectory_log_density
from .policy import Policy


@dataclass(frozen=True, eq=False)
class SampleSet:
    demo_counts: np.ndarray  # [n_demo, n_cells]
    gen_counts: np.ndarray  # [n_gen, n_cells]
    demo_log_q: np.ndarray
    gen_log_q: np.ndarray
    demo_weights: np.ndarray
    gen_weights: np.ndarray
    exact: bool = False
    demos: object = None
    gens: object = None

    def __post_init__(self):
        if len(self.demo_counts) == 0 or len(self.gen_counts) == 0:
            raise ValueError("sample sets need at least one demo and one generator sample")

    def demo_costs(self, cost: CostModel) -> np.ndarray:
        return self.demo_counts @ cost.flat()

    def gen_costs(self, cost: CostModel) -> np.ndarray:
        return self.gen_counts @ cost.flat()

    def demo_grads(self, cost: CostModel) -> np.ndarray:
        return self.demo_counts @ cost.jacobian()

    def gen_grads(self, cost: CostModel) -> np.ndarray:
        return self.gen_counts @ cost.jacobian()

    def mixture(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(counts, log q, weights) of the half/half mixture mu."""
        counts = np.concatenate([self.demo_counts, self.gen_counts])
        log_q = np.concatenate([self.demo_log_q, self.gen_log_q])
        weights = 0.5 * np.concatenate([self.demo_weights, self.gen_weights])
        return counts, log_q, weights


def _drop_zero_weight(counts, log_q, weights):
    keep = weights > 0
    return counts[keep], log_q[keep], weights[keep]


def empirical_samples(policy: Policy, demos: Trajectories, gens: Trajectories) -> SampleSet:
    demos, gens = Trajectories.of(demos), Trajectories.of(gens)
    mdp = policy.mdp
    return SampleSet(
        demo_counts=visit_counts(demos, mdp.n_states, mdp.n_actions),
        gen_counts=visit_counts(gens, mdp.n_states, mdp.n_actions),
        demo_log_q=trajectory_log_density(policy, demos),
        gen_log_q=trajectory_log_density(policy, gens),
        demo_weights=np.full(len(demos), 1.0 / len(demos)),
        gen_weights=np.full(len(gens), 1.0 / len(gens)),
        demos=demos,
        gens=gens,
    )


def exact_samples(mdp: Mdp, expert: Policy, policy: Policy) -> SampleSet:
    """Closed-form expectations: p is the expert's trajectory density."""
    trajs = enumerate_trajectories(mdp)
    counts = visit_counts(trajs, mdp.n_states, mdp.n_actions)
    log_q = trajectory_log_density(policy, trajs)
    p = np.exp(trajectory_log_density(expert, trajs))
    q = np.exp(log_q)
    dc, dl, dw = _drop_zero_weight(counts, log_q, p)
    gc, gl, gw = _drop_zero_weight(counts, log_q, q)
    return SampleSet(dc, gc, dl, gl, dw, gw, exact=True, demos=trajs, gens=trajs)


def point_samples(
    demo_points: np.ndarray,
    gen_points: np.ndarray,
    log_q: np.ndarray,
    demo_weights: np.ndarray | None = None,
    gen_weights: np.ndarray | None = None,
    exact: bool = False,
) -> SampleSet:
    """Sample set over a flat domain; ``log_q`` is the generator's log density
    at every point of the domain."""
    n_points = log_q.size
    eye = np.eye(n_points)
    demo_points = np.asarray(demo_points, dtype=np.int64)
    gen_points = np.asarray(gen_points, dtype=np.int64)
    if demo_weights is None:
        demo_weights = np.full(demo_points.size, 1.0 / demo_points.size)
    if gen_weights is None:
        gen_weights = np.full(gen_points.size, 1.0 / gen_points.size)
    dc, dl, dw = _drop_zero_weight(eye[demo_points], log_q[demo_points], np.asarray(demo_weights, float))
    gc, gl, gw = _drop_zero_weight(eye[gen_points], log_q[gen_points], np.asarray(gen_weights, float))
    return SampleSet(dc, gc, dl, gl, dw, gw, exact=exact, demos=demo_points, gens=gen_points)
