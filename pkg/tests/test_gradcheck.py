import numpy as np
import pytest

from rnntrack.gradcheck import (CHECKS, TOLERANCE, check_recurrent, numeric_gradient,
                                relative_error, run_suite)
from rnntrack.nn import Param


def test_numeric_gradient_of_quadratic():
    p = Param(np.array([[1.0, -2.0, 0.5]]))
    g = numeric_gradient(lambda: float(np.sum(p.value ** 2)), p)
    np.testing.assert_allclose(g, 2 * p.value, rtol=1e-8)


def test_relative_error():
    assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 2.1)


@pytest.mark.parametrize("kind,layers,loss", [("rnn", 1, "mse"), ("rnn", 2, "nll"),
                                              ("lstm", 1, "mse"), ("lstm", 2, "nll")])
def test_recurrent_variants(kind, layers, loss):
    rng = np.random.default_rng(3)
    assert check_recurrent(rng, kind, layers, loss) < TOLERANCE


def test_suite_covers_every_check():
    errors = run_suite(seed=5, instances=3)
    assert set(errors) == set(CHECKS)
    assert all(e < TOLERANCE for e in errors.values())


def test_corrupted_gradient_is_caught():
    rng = np.random.default_rng(0)
    p = Param(rng.normal(size=(2, 3)))
    num = numeric_gradient(lambda: float(np.sum(np.sin(p.value))), p)
    assert relative_error(np.cos(p.value) * 1.01, num) > TOLERANCE
