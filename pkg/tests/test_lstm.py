import numpy as np
import pytest

from adapcomfl import lstm
from adapcomfl.mlkit import max_relative_error, numeric_gradient


@pytest.mark.parametrize("hidden", [(2, 2), (3,), (4, 3)])
def test_gradient_matches_finite_differences(hidden):
    shape = lstm.LSTMShape(hidden=hidden)
    rng = np.random.default_rng(17)
    params = rng.normal(0, 0.8, size=shape.size)
    x = rng.normal(size=(5, 6))
    y = rng.normal(size=5)
    _, analytic = lstm.loss_and_grad(shape, params, x, y)
    numeric = numeric_gradient(lambda p: lstm.loss_and_grad(shape, p, x, y)[0], params)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_zero_input_gives_zero_output():
    shape = lstm.LSTMShape()
    params = np.random.default_rng(0).normal(size=shape.size)
    y, _ = lstm.forward(shape, params, np.zeros((3, 6)))
    assert np.all(y == 0.0)


def test_parameter_count():
    # per layer: W (d_in x 4h) + U (h x 4h) + 3h gate biases; plus the head
    shape = lstm.LSTMShape(hidden=(16, 8))
    expected = (1 * 64 + 16 * 64 + 48) + (16 * 32 + 8 * 32 + 24) + 8
    assert shape.size == expected


def test_init_is_seeded():
    shape = lstm.LSTMShape()
    assert np.array_equal(lstm.init_params(shape, 4), lstm.init_params(shape, 4))
    assert not np.array_equal(lstm.init_params(shape, 4), lstm.init_params(shape, 5))
