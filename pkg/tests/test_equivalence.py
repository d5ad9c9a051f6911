import numpy as np
import pytest

from ganirl.cost import tabular_cost
from ganirl.equivalence import (
    BracketError,
    ResidualReport,
    ebm_sweep,
    minimise_bias,
    negative_controls,
    sweep,
    verify_fact1,
    verify_fact2,
    verify_fact3,
)
from ganirl.mdp import sample_trajectories
from ganirl.partition import exact_partition
from ganirl.policy import sampler_loss, soft_value_iteration
from ganirl.rng import stream
from ganirl.samples import empirical_samples, exact_samples

from conftest import random_setup, random_tabular


def test_report_pass_flag_tracks_tolerance():
    assert ResidualReport(1, "exact", 1e-9, 1e-8).passed
    assert not ResidualReport(1, "exact", 2e-8, 1e-8).passed
    assert ResidualReport(2, "exact", 1e-9, 1e-9).to_dict()["pass"] is True


def test_fact1_at_engineered_optimum(world_3x3):
    true = random_tabular(world_3x3, stream(0), 0.5)
    expert = soft_value_iteration(world_3x3, true)
    report = verify_fact1(true, exact_samples(world_3x3, expert, expert))
    log_z = exact_partition(world_3x3, true).log_z
    assert report.residual < 1e-10
    assert report.context["b_star"] == pytest.approx(log_z, abs=1e-10)
    assert report.context["log_z_fixed_point"] == pytest.approx(log_z, abs=1e-10)


def test_fact1_random_exact(world_3x3):
    cost, expert, pol = random_setup(world_3x3, 1)
    assert verify_fact1(cost, exact_samples(world_3x3, expert, pol)).passed


def test_fact1_empirical_seed3(world_3x3):
    cost, expert, pol = random_setup(world_3x3, 3)
    samples = empirical_samples(
        pol, sample_trajectories(expert, 200, stream(3, "d")), sample_trajectories(pol, 200, stream(3, "g"))
    )
    assert verify_fact1(cost, samples).residual < 1e-8


def test_bias_minimiser_far_from_origin(world_2x2):
    cost, expert, pol = random_setup(world_2x2, 4)
    shifted = cost.shifted(-20.0)  # log Z moves by +60 over three steps
    samples = exact_samples(world_2x2, expert, pol)
    assert minimise_bias(shifted, samples) == pytest.approx(minimise_bias(cost, samples) + 60.0, abs=1e-9)


def test_bracketing_failure_is_diagnostic(world_2x2):
    cost, expert, pol = random_setup(world_2x2, 5)
    with pytest.raises(BracketError, match="grad_b samples"):
        minimise_bias(cost.shifted(-1e3), exact_samples(world_2x2, expert, pol), max_expand=3)


@pytest.mark.parametrize("regime", ["exact", "empirical"])
def test_fact2_and_control(world_3x3, regime):
    cost, expert, pol = random_setup(world_3x3, 6)
    if regime == "exact":
        samples = exact_samples(world_3x3, expert, pol)
    else:
        samples = empirical_samples(
            pol, sample_trajectories(expert, 200, stream(6, "d")), sample_trajectories(pol, 200, stream(6, "g"))
        )
    assert verify_fact2(cost, samples).residual < 1e-9
    assert not verify_fact2(cost, samples, bias_offset=1.0).passed


def test_fact3_cases(world_3x3):
    cost, expert, pol = random_setup(world_3x3, 7)
    samples = exact_samples(world_3x3, expert, pol)
    assert verify_fact3(cost, samples, 1.7, sampler_loss(pol, cost)).residual < 1e-10
    one = sample_trajectories(pol, 1, stream(7))
    single = empirical_samples(pol, one, one)
    assert verify_fact3(cost, single, -0.4, sampler_loss(pol, cost, one)).residual < 1e-12
    report = verify_fact3(cost, samples, 0.0, sampler_loss(pol, cost))
    assert report.context["generator_loss"] == pytest.approx(report.context["sampler_loss"], abs=1e-12)


def test_full_sweep_passes():
    reports = sweep(n_seeds=50)
    assert len(reports) == 600
    failed = [r.to_dict() for r in reports if not r.passed]
    assert failed == []
    assert {(r.fact, r.regime) for r in reports} == {(f, g) for f in (1, 2, 3) for g in ("exact", "empirical")}


def test_negative_controls_fail():
    reports = negative_controls()
    assert {r.fact for r in reports} == {2, 3}
    assert not any(r.passed for r in reports)


def test_perturbed_sweep_fails_fact2_only():
    reports = sweep(n_seeds=3, bias_offset=1.0)
    assert all(not r.passed for r in reports if r.fact == 2)
    assert all(r.passed for r in reports if r.fact != 2)


def test_facts_hold_on_energy_domain():
    reports = ebm_sweep(n_seeds=10)
    assert len(reports) == 60 and all(r.passed for r in reports)
