import numpy as np
import pytest
from scipy.special import log_expit

from ganirl.cost import tabular_cost, trajectory_cost, zero_cost
from ganirl.gan import DiscriminatorParams, discriminator_loss
from ganirl.mdp import build_gridworld, enumerate_trajectories, sample_trajectories, trajectory_log_density
from ganirl.partition import (
    FixedPointDivergence,
    MixtureDensityParams,
    exact_partition,
    fixed_point_partition_estimate,
    importance_log_z,
    importance_partition_estimate,
    mixture_model_density,
)
from ganirl.policy import Policy, random_policy, soft_value_iteration, uniform_policy
from ganirl.rng import stream
from ganirl.samples import empirical_samples, exact_samples

from conftest import random_setup, random_tabular


def test_exact_partition_trivial():
    mdp = build_gridworld(1, 1, 0, 1)
    assert exact_partition(mdp, zero_cost(mdp)).z == pytest.approx(4.0, abs=1e-14)
    two = build_gridworld(1, 1, 0, 1)
    # restrict to two actions by giving the others a cost that underflows
    part = exact_partition(two, tabular_cost([0.0, np.log(2), 800.0, 800.0], (1, 4)))
    assert part.z == pytest.approx(1.5, abs=1e-14)


def test_exact_partition_direct_sum(world_3x3):
    cost = random_tabular(world_3x3, stream(0))
    c = trajectory_cost(cost, enumerate_trajectories(world_3x3))
    direct = sum(np.exp(-ci) for ci in c.tolist())
    part = exact_partition(world_3x3, cost)
    assert abs(part.z - direct) / direct < 1e-12
    assert part.log_z == pytest.approx(np.log(direct), abs=1e-12)


def test_mixture_density_equal_halves(world_2x2):
    cost = random_tabular(world_2x2, stream(1))
    pol = soft_value_iteration(world_2x2, cost)
    params = MixtureDensityParams(cost, exact_partition(world_2x2, cost).log_z, pol)
    trajs = enumerate_trajectories(world_2x2)
    np.testing.assert_allclose(
        mixture_model_density(params, trajs), np.exp(trajectory_log_density(pol, trajs)), rtol=1e-12
    )


def test_mixture_density_one_sided_support(world_2x2):
    from ganirl.policy import deterministic_policy

    cost = random_tabular(world_2x2, stream(2))
    pol = deterministic_policy(world_2x2, [0, 0, 0])
    log_z = 0.7
    tau = enumerate_trajectories(world_2x2)[5]
    expected = np.exp(-trajectory_cost(cost, tau) - log_z) / 2
    assert mixture_model_density(MixtureDensityParams(cost, log_z, pol), tau) == pytest.approx(expected, rel=1e-14)


def test_mixture_density_normalises(world_2x2):
    cost = random_tabular(world_2x2, stream(3))
    pol = random_policy(world_2x2, stream(4))
    params = MixtureDensityParams(cost, exact_partition(world_2x2, cost).log_z, pol)
    assert mixture_model_density(params, enumerate_trajectories(world_2x2)).sum() == pytest.approx(1.0, abs=1e-10)


def test_fixed_point_recovers_exact_when_model_matches(world_3x3):
    cost = random_tabular(world_3x3, stream(5), 0.5)
    p_theta = soft_value_iteration(world_3x3, cost)
    res = fixed_point_partition_estimate(cost, exact_samples(world_3x3, p_theta, p_theta))
    assert abs(res.z - exact_partition(world_3x3, cost).z) / res.z < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_fixed_point_satisfies_stationarity(seed):
    mdp = build_gridworld(2, 1, 0, 1)
    rng = stream(seed, "fp")
    cost = tabular_cost(rng.standard_normal(8), (2, 4))
    expert = random_policy(mdp, rng)
    pol = random_policy(mdp, rng)
    samples = exact_samples(mdp, expert, pol)
    res = fixed_point_partition_estimate(cost, samples)
    # substitute back: Z = E_mu[exp(-c) / mu~_Z]
    trajs = enumerate_trajectories(mdp)
    c = trajectory_cost(cost, trajs)
    q = np.exp(trajectory_log_density(pol, trajs))
    p = np.exp(trajectory_log_density(expert, trajs))
    mu = 0.5 * p + 0.5 * q
    mu_tilde = np.exp(-c) / (2 * res.z) + q / 2
    rhs = np.sum(mu * np.exp(-c) / mu_tilde)
    assert abs(rhs - res.z) / res.z < 1e-12


def test_fixed_point_empirical_self_consistency(world_2x2):
    cost = random_tabular(world_2x2, stream(6))
    p_theta = soft_value_iteration(world_2x2, cost)
    batch = sample_trajectories(p_theta, 300, stream(6, "batch"))
    samples = empirical_samples(p_theta, batch, batch)
    res = fixed_point_partition_estimate(cost, samples)
    # with q = p_theta, mu~ = q/Z_exact*Z ... the map evaluated at the result returns it
    assert abs(importance_log_z(cost, samples, res.log_z) - res.log_z) < 1e-12
    # q = p_theta makes every weight exp(-c)/mu~ equal to Z_exact at Z = Z_exact
    assert res.z == pytest.approx(exact_partition(world_2x2, cost).z, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_fixed_point_zeroes_bias_derivative(world_3x3, seed):
    cost, expert, pol = random_setup(world_3x3, seed)
    samples = exact_samples(world_3x3, expert, pol)
    b = fixed_point_partition_estimate(cost, samples).log_z
    h = 1e-6
    loss = lambda bb: discriminator_loss(DiscriminatorParams(cost, bb), samples)
    assert abs((loss(b + h) - loss(b - h)) / (2 * h)) < 1e-8


def test_fixed_point_converges_from_bad_start(world_2x2):
    cost, expert, pol = random_setup(world_2x2, 11)
    samples = exact_samples(world_2x2, expert, pol)
    ref = fixed_point_partition_estimate(cost, samples)
    for start in (-30.0, 40.0):
        assert fixed_point_partition_estimate(cost, samples, init_log_z=start).log_z == pytest.approx(ref.log_z, abs=1e-11)


def test_fixed_point_divergence_reports_history(world_2x2):
    cost, expert, pol = random_setup(world_2x2, 12)
    samples = exact_samples(world_2x2, expert, pol)
    with pytest.raises(FixedPointDivergence) as err:
        fixed_point_partition_estimate(cost, samples, max_iter=1, init_log_z=50.0)
    assert len(err.value.history) == 2


def test_weights_bounded_by_twice_z(world_2x2):
    cost, expert, pol = random_setup(world_2x2, 13)
    samples = exact_samples(world_2x2, expert, pol)
    res = fixed_point_partition_estimate(cost, samples)
    counts, log_q, _ = samples.mixture()
    c = counts @ cost.flat()
    w = np.exp(-c) / (np.exp(-c) / (2 * res.z) + np.exp(log_q) / 2)
    assert np.all(w <= 2 * res.z * (1 + 1e-12))


def test_oracle_estimator_unbiased():
    mdp = build_gridworld(2, 2, 0, 3)
    cost, expert, pol = random_setup(mdp, 14)
    z = exact_partition(mdp, cost).z
    ests = []
    for seed in range(200):
        demos = sample_trajectories(expert, 500, stream(seed, "unbiased", "p"))
        gens = sample_trajectories(pol, 500, stream(seed, "unbiased", "q"))
        both = demos.concat(gens)
        ests.append(
            importance_partition_estimate(
                trajectory_cost(cost, both),
                trajectory_log_density(expert, both),
                trajectory_log_density(pol, both),
                np.full(1000, 1e-3),
            )
        )
    ests = np.array(ests)
    assert abs(ests.mean() - z) < 3 * ests.std(ddof=1) / np.sqrt(ests.size)
