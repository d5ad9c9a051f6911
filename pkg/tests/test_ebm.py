import numpy as np
import pytest

from ganirl.ebm import (
    DiscreteDomain,
    EbmConfig,
    GeneratorModel,
    boltzmann_generator,
    data_distribution,
    ebm_generator_grad,
    ebm_generator_loss,
    ebm_nll,
    ebm_nll_grad,
    ebm_samples,
    ebm_z_estimate,
    energy_grad,
    energy_loss,
    energy_oracle_grad,
    energy_oracle_loss,
    exact_z_ebm,
    gap_mass,
    generator_nll,
    generator_nll_grad,
    load_distribution_table,
    mode_seeking_experiment,
    random_generator,
    tabular_energy,
    train_ebm_gan,
    train_ebm_ml,
    uniform_generator,
    zero_energy,
)
from ganirl.mdp import ConfigError
from ganirl.rng import stream

DOMAIN = DiscreteDomain()


def _fd(f, x, h=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _random_energy(seed, scale=1.0):
    return tabular_energy(scale * stream(seed, "energy").standard_normal(DOMAIN.n_points))


def test_domain_needs_two_points():
    with pytest.raises(ConfigError):
        DiscreteDomain(1, 1)
    assert DiscreteDomain().n_points == 64


def test_exact_z_small_cases():
    assert exact_z_ebm(zero_energy(DOMAIN)) == pytest.approx(64.0, abs=1e-12)
    assert exact_z_ebm(tabular_energy([0.0, np.log(2)])) == pytest.approx(1.5, abs=1e-14)


def test_exact_z_direct_sum():
    energy = _random_energy(0, 2.0)
    direct = sum(np.exp(-v) for v in energy.params.tolist())
    assert abs(exact_z_ebm(energy) - direct) / direct < 1e-13


@pytest.mark.parametrize("name", ["bimodal", "ring", "uniform", "random"])
def test_builtin_distributions_normalised(name):
    p = data_distribution(DOMAIN, name, seed=3)
    assert p.shape == (64,) and abs(p.sum() - 1) < 1e-12 and p.min() >= 0


def test_bimodal_has_two_diagonal_modes():
    p = data_distribution(DOMAIN, "bimodal").reshape(8, 8)
    assert p[1, 1] == pytest.approx(p[6, 6]) and p[1, 1] == p.max()
    assert p[1, 6] < 1e-3 and p[6, 1] < 1e-3


def test_table_loading(tmp_path):
    good = tmp_path / "good.txt"
    good.write_text("# two points\n0.25\n\n0.75\n")
    np.testing.assert_array_equal(load_distribution_table(good), [0.25, 0.75])
    bad_sum = tmp_path / "sum.txt"
    bad_sum.write_text("0.25\n0.7\n")
    with pytest.raises(ConfigError, match="sum"):
        load_distribution_table(bad_sum)
    bad_line = tmp_path / "line.txt"
    bad_line.write_text("0.5\nhalf\n")
    with pytest.raises(ConfigError, match=":2:"):
        load_distribution_table(bad_line)


def test_z_estimate_exact_when_model_matches():
    energy = _random_energy(1)
    p_theta = boltzmann_generator(energy, DOMAIN)
    z = ebm_z_estimate(energy, p_theta, p_theta.probs(), "exact")
    assert abs(z - exact_z_ebm(energy)) / z < 1e-10


def test_z_estimate_uniform():
    uniform = np.full(64, 1 / 64)
    assert ebm_z_estimate(zero_energy(DOMAIN), uniform_generator(DOMAIN), uniform, "exact") == pytest.approx(64.0, abs=1e-12)


def test_oracle_z_estimate_unbiased():
    energy = _random_energy(2, 0.5)
    data = data_distribution(DOMAIN, "bimodal")
    gen = random_generator(DOMAIN, "full", stream(2, "gen"))
    ests = np.array(
        [ebm_z_estimate(energy, gen, data, "empirical", 500, stream(s, "ebm-unbiased"), density="oracle") for s in range(200)]
    )
    assert abs(ests.mean() - exact_z_ebm(energy)) < 3 * ests.std(ddof=1) / np.sqrt(ests.size)


def test_energy_loss_stationary_at_truth():
    data = data_distribution(DOMAIN, "ring")
    energy = tabular_energy(-np.log(data) - 3.0)
    samples = ebm_samples(data, random_generator(DOMAIN, "full", stream(3)), "exact")
    assert np.linalg.norm(energy_grad(energy, samples)) < 1e-10
    assert energy_loss(energy, samples) == pytest.approx(ebm_nll(energy, data), abs=1e-10)
    assert ebm_nll(energy, data) == pytest.approx(-np.dot(data, np.log(data)), abs=1e-10)


def test_zero_energy_uniform_loss():
    uniform = np.full(64, 1 / 64)
    samples = ebm_samples(uniform, uniform_generator(DOMAIN), "exact")
    assert energy_loss(zero_energy(DOMAIN), samples) == pytest.approx(np.log(64), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_oracle_density_gives_classic_gradient(seed):
    energy = _random_energy(seed)
    data = data_distribution(DOMAIN, "random", seed=seed)
    gen = random_generator(DOMAIN, "full", stream(seed, "g"))
    classic = ebm_nll_grad(energy, data)
    assert np.max(np.abs(energy_oracle_grad(energy, data, gen) - classic)) / np.max(np.abs(classic)) < 1e-9
    assert energy_oracle_loss(energy, data, gen) == pytest.approx(ebm_nll(energy, data), abs=1e-10)


def test_model_density_gradient_halves_at_best_response():
    # with q = p_theta the mixture puts half its mass on the data, so the
    # importance-weighted model term is itself half data, half model
    energy = _random_energy(6)
    data = data_distribution(DOMAIN, "bimodal")
    samples = ebm_samples(data, boltzmann_generator(energy, DOMAIN), "exact")
    np.testing.assert_allclose(energy_grad(energy, samples), 0.5 * ebm_nll_grad(energy, data), atol=1e-12)


def test_energy_grad_matches_surrogate_finite_differences():
    energy = _random_energy(7)
    data = data_distribution(DOMAIN, "bimodal")
    samples = ebm_samples(data, random_generator(DOMAIN, "full", stream(7)), "exact")
    from ganirl.gcl import frozen_log_mu_tilde, irl_surrogate_loss

    frozen = frozen_log_mu_tilde(energy, samples)
    fd = _fd(lambda th: irl_surrogate_loss(energy.with_params(th), samples, frozen), energy.params)
    g = energy_grad(energy, samples)
    assert np.max(np.abs(fd - g)) / np.max(np.abs(g)) < 1e-6


def test_nll_grad_matches_finite_differences():
    energy = _random_energy(8)
    data = data_distribution(DOMAIN, "ring")
    fd = _fd(lambda th: ebm_nll(energy.with_params(th), data), energy.params)
    g = ebm_nll_grad(energy, data)
    assert np.max(np.abs(fd - g)) / np.max(np.abs(g)) < 1e-6


def test_generator_loss_cases():
    energy = _random_energy(9)
    log_z = np.log(exact_z_ebm(energy))
    assert ebm_generator_loss(energy, boltzmann_generator(energy, DOMAIN)) == pytest.approx(-log_z, abs=1e-10)
    assert ebm_generator_loss(zero_energy(DOMAIN), uniform_generator(DOMAIN)) == pytest.approx(-np.log(64), abs=1e-12)
    rng = stream(9, "gens")
    for k in range(100):
        gen = random_generator(DOMAIN, "full" if k % 2 else "factorized", rng, 2.0)
        assert ebm_generator_loss(energy, gen) >= -log_z - 1e-12


@pytest.mark.parametrize("kind", ["full", "factorized"])
@pytest.mark.parametrize("seed", range(3))
def test_generator_gradients_match_finite_differences(kind, seed):
    energy = _random_energy(seed)
    gen = random_generator(DOMAIN, kind, stream(seed, kind))
    data = data_distribution(DOMAIN, "bimodal")
    for loss, grad in (
        (lambda g: ebm_generator_loss(energy, g), ebm_generator_grad(energy, gen)),
        (lambda g: generator_nll(g, data), generator_nll_grad(gen, data)),
    ):
        fd = _fd(lambda x: loss(gen.from_flat(x)), gen.flat_logits())
        assert np.max(np.abs(fd - grad)) / np.max(np.abs(grad)) < 1e-6


def test_generator_rejects_bad_shapes():
    with pytest.raises(ValueError):
        GeneratorModel("factorized", (np.zeros(8),), DOMAIN)
    with pytest.raises(ConfigError):
        GeneratorModel("mixture", (np.zeros(64),), DOMAIN)


def test_gap_mass():
    data = np.array([0.5, 0.4995, 0.0005, 0.0])
    assert gap_mass(np.array([0.1, 0.2, 0.3, 0.4]), data) == pytest.approx(0.7)


def test_gan_fits_bimodal_data():
    report = train_ebm_gan(EbmConfig(data="bimodal", generator="full", iterations=2000, seed=11))
    assert report.error is None and len(report.rows) == 2000
    assert report.final_kl < 5e-2
    for probs in (report.extra["generator_probs"],):
        assert abs(probs.sum() - 1) < 1e-12


def test_gan_on_uniform_data_learns_flat_energy():
    report = train_ebm_gan(EbmConfig(data="uniform", expectations="exact", iterations=500, seed=1))
    e = report.final_params
    assert e.max() - e.min() < 1e-2


def test_factorized_generator_stays_normalised():
    report = train_ebm_gan(EbmConfig(generator="factorized", iterations=50, seed=2))
    assert abs(report.extra["generator_probs"].sum() - 1) < 1e-12


def test_gan_deterministic():
    cfg = EbmConfig(iterations=30, seed=4)
    assert train_ebm_gan(cfg).same_run(train_ebm_gan(cfg))


def test_ml_fits_bimodal_data():
    report = train_ebm_ml(EbmConfig(step_size=10.0, iterations=2000))
    assert report.final_kl < 1e-3


def test_ml_factorized_generator_is_product_of_marginals():
    report = train_ebm_ml(EbmConfig(generator="factorized", gen_step_size=1.0, iterations=2000), model="generator")
    data = data_distribution(DOMAIN, "bimodal").reshape(8, 8)
    product = np.outer(data.sum(1), data.sum(0)).ravel()
    np.testing.assert_allclose(report.extra["generator_probs"], product, atol=1e-6)
    assert report.extra["gap_mass"] >= 0.25


def test_mode_seeking():
    result = mode_seeking_experiment(EbmConfig(generator="factorized", iterations=1000, seed=0))
    assert result.ml_gap_mass >= 0.25
    assert result.adversarial_gap_mass < result.ml_gap_mass
