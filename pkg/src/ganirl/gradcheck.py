"""Central-difference checks for every analytic gradient in the package.

Each family builds a random scalar objective f(x) and its claimed gradient
at a random point; the check compares against (f(x + h e_i) - f(x - h e_i)) / 2h
coordinate by coordinate. The error is the max-norm gap relative to the
larger of the two gradients' max-norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import linear_cost, tabular_cost, trajectory_cost, trajectory_cost_grad
from .ebm import (
    DiscreteDomain,
    data_distribution,
    ebm_generator_grad,
    ebm_generator_loss,
    ebm_nll,
    ebm_nll_grad,
    ebm_samples,
    generator_nll,
    generator_nll_grad,
    random_generator,
    tabular_energy,
)
from .gan import DiscriminatorParams, discriminator_grad, discriminator_loss
from .gcl import exact_nll, exact_nll_grad, frozen_log_mu_tilde, irl_cost_grad, irl_surrogate_loss
from .mdp import build_gridworld, enumerate_trajectories, sample_trajectories
from .policy import random_policy, soft_value_iteration
from .rng import stream
from .samples import empirical_samples, exact_samples

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-5
DEFAULT_TRIALS = 20


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def relative_error(numeric: np.ndarray, analytic: np.ndarray) -> float:
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-300)
    return float(np.max(np.abs(numeric - analytic)) / scale)


# Every family maps an rng to (objective, gradient at x, x).


def _trajectory_setup(rng):
    mdp = build_gridworld(2, 2, 0, 3)
    shape = (mdp.n_states, mdp.n_actions)
    cost = tabular_cost(0.5 * rng.standard_normal(16), shape)
    expert = soft_value_iteration(mdp, tabular_cost(0.5 * rng.standard_normal(16), shape))
    policy = random_policy(mdp, rng)
    if rng.random() < 0.5:
        samples = exact_samples(mdp, expert, policy)
    else:
        seed = int(rng.integers(2**31))
        samples = empirical_samples(
            policy,
            sample_trajectories(expert, 50, stream(seed, "d")),
            sample_trajectories(policy, 50, stream(seed, "g")),
        )
    return mdp, cost, expert, samples


def _family_cost(rng):
    mdp = build_gridworld(3, 3, 0, 5)
    feats = rng.standard_normal((mdp.n_states, mdp.n_actions, 5))
    cost = linear_cost(rng.standard_normal(5), feats)
    trajs = enumerate_trajectories(mdp)[rng.integers(0, mdp.n_trajectories, 30)]
    r = rng.standard_normal(30)
    f = lambda th: float(r @ trajectory_cost(cost.with_params(th), trajs))
    return f, r @ trajectory_cost_grad(cost, trajs), cost.params


def _family_disc_theta(rng):
    _, cost, _, samples = _trajectory_setup(rng)
    b = float(rng.normal())
    f = lambda th: discriminator_loss(DiscriminatorParams(cost.with_params(th), b), samples)
    return f, discriminator_grad(DiscriminatorParams(cost, b), samples)[0], cost.params


def _family_disc_b(rng):
    _, cost, _, samples = _trajectory_setup(rng)
    b = np.array([rng.normal()])
    f = lambda x: discriminator_loss(DiscriminatorParams(cost, float(x[0])), samples)
    return f, np.array([discriminator_grad(DiscriminatorParams(cost, float(b[0])), samples)[1]]), b


def _family_irl(rng):
    _, cost, _, samples = _trajectory_setup(rng)
    frozen = frozen_log_mu_tilde(cost, samples)
    f = lambda th: irl_surrogate_loss(cost.with_params(th), samples, frozen)
    return f, irl_cost_grad(cost, samples), cost.params


def _family_exact_nll(rng):
    mdp, cost, expert, _ = _trajectory_setup(rng)
    f = lambda th: exact_nll(mdp, cost.with_params(th), expert)
    return f, exact_nll_grad(mdp, cost, expert), cost.params


def _ebm_setup(rng):
    domain = DiscreteDomain()
    energy = tabular_energy(rng.standard_normal(domain.n_points))
    data = data_distribution(domain, "random", seed=int(rng.integers(2**31)))
    return domain, energy, data


def _family_ebm_energy(rng):
    domain, energy, data = _ebm_setup(rng)
    gen = random_generator(domain, "full", rng)
    samples = ebm_samples(data, gen, "exact")
    frozen = frozen_log_mu_tilde(energy, samples)
    f = lambda th: irl_surrogate_loss(energy.with_params(th), samples, frozen)
    return f, irl_cost_grad(energy, samples), energy.params


def _family_ebm_nll(rng):
    _, energy, data = _ebm_setup(rng)
    return (lambda th: ebm_nll(energy.with_params(th), data)), ebm_nll_grad(energy, data), energy.params


def _generator_family(kind):
    def family(rng):
        domain, energy, data = _ebm_setup(rng)
        gen = random_generator(domain, kind, rng)
        if rng.random() < 0.5:
            f = lambda x: ebm_generator_loss(energy, gen.from_flat(x))
            return f, ebm_generator_grad(energy, gen), gen.flat_logits()
        f = lambda x: generator_nll(gen.from_flat(x), data)
        return f, generator_nll_grad(gen, data), gen.flat_logits()

    return family


FAMILIES = {
    "cost": _family_cost,
    "disc_theta": _family_disc_theta,
    "disc_b": _family_disc_b,
    "irl": _family_irl,
    "exact_nll": _family_exact_nll,
    "ebm_energy": _family_ebm_energy,
    "ebm_nll": _family_ebm_nll,
    "gen_full": _generator_family("full"),
    "gen_factorized": _generator_family("factorized"),
}


@dataclass
class GradcheckResult:
    family: str
    trials: int
    h: float
    tol: float
    errors: list = field(default_factory=list)
    worst_inputs: list = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.errors)

    @property
    def worst_trial(self) -> int:
        return int(np.argmax(self.errors))

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "trials": self.trials,
            "h": self.h,
            "tol": self.tol,
            "worst_rel_error": self.worst,
            "worst_trial": self.worst_trial,
            "pass": self.passed,
        }
        if not self.passed:
            out["worst_inputs"] = self.worst_inputs
        return out


def check_family(name: str, trials: int = DEFAULT_TRIALS, h: float = DEFAULT_H, tol: float = DEFAULT_TOL, seed: int = 0) -> GradcheckResult:
    if name not in FAMILIES:
        raise KeyError(name)
    result = GradcheckResult(name, trials, h, tol)
    for trial in range(trials):
        f, grad, x = FAMILIES[name](stream(seed, "gradcheck", name, trial))
        err = relative_error(central_difference(f, np.asarray(x, dtype=float), h), grad)
        if not result.errors or err > result.worst:
            result.worst_inputs = [float(v) for v in x]
        result.errors.append(err)
    return result


def run_gradcheck(selector: str = "all", trials: int = DEFAULT_TRIALS, h: float = DEFAULT_H, tol: float = DEFAULT_TOL, seed: int = 0) -> list[GradcheckResult]:
    names = list(FAMILIES) if selector == "all" else [selector]
    for name in names:
        if name not in FAMILIES:
            raise KeyError(f"unknown gradient family {name!r}; choose from all, {', '.join(FAMILIES)}")
    return [check_family(name, trials, h, tol, seed) for name in names]
