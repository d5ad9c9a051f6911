import numpy as np
import pytest

from ganirl.gradcheck import FAMILIES, central_difference, check_family, relative_error, run_gradcheck


def test_central_difference_on_quadratic():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = lambda x: 0.5 * x @ a @ x
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(central_difference(f, x, 1e-4), a @ x, atol=1e-10)


def test_relative_error_scale():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.0, 2.2]), np.array([1.0, 2.0])) == pytest.approx(0.2 / 2.2)


def test_at_least_five_families():
    assert len(FAMILIES) >= 5


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_every_family_passes_default_step(name):
    result = check_family(name)
    assert result.trials == 20 and len(result.errors) == 20
    assert result.passed, result.to_dict()


def test_tiny_step_fails_from_rounding():
    results = run_gradcheck(h=1e-12, trials=3)
    assert not any(r.passed for r in results)
    assert all("worst_inputs" in r.to_dict() for r in results)


def test_unknown_family():
    with pytest.raises(KeyError):
        run_gradcheck("nope")
