import math

import numpy as np
import pytest

from pgce.errors import ConfigError, DomainError, NumericError, ShapeError
from pgce.numerics import (
    CategoricalDistribution,
    ParamSet,
    entropy,
    grad_mse,
    grad_weighted_logprob,
    init_params,
    log_prob,
    mlp_forward,
    param_count,
    sgd_step,
    softmax,
)
from pgce.oracle import finite_difference, relative_error

from conftest import reference_forward


def test_param_count_matches_layout_formula():
    p = init_params((5, 16, 16, 3), 7)
    assert p.size == (5 * 16 + 16) + (16 * 16 + 16) + (16 * 3 + 3) == 419
    assert param_count((2, 2)) == 6


def test_init_params_is_deterministic():
    a = init_params((5, 16, 16, 3), 7)
    b = init_params((5, 16, 16, 3), 7)
    assert a.values.tobytes() == b.values.tobytes()
    assert init_params((5, 16, 16, 3), 8).values.tobytes() != a.values.tobytes()


def test_init_params_bounds_and_zero_biases():
    p = init_params((4, 6, 2), 0)
    (W1, b1), (W2, b2) = p.layers()
    assert np.all(np.abs(W1) <= math.sqrt(6 / 10))
    assert np.all(np.abs(W2) <= math.sqrt(6 / 8))
    assert not b1.any() and not b2.any()


@pytest.mark.parametrize("layout", [(2,), (), (3, 0, 2), ("a", 2)])
def test_bad_layout_is_config_error(layout):
    with pytest.raises(ConfigError):
        init_params(layout, 0)


def test_paramset_invariants():
    with pytest.raises(ShapeError):
        ParamSet((2, 2), np.zeros(5))
    with pytest.raises(NumericError):
        ParamSet((2, 2), [0, 0, 0, 0, 0, np.nan])
    p = ParamSet((2, 2), np.zeros(6))
    with pytest.raises(ValueError):
        p.values[0] = 1.0


def test_forward_zero_params_gives_zero_logits():
    p = ParamSet((3, 4, 2), np.zeros(param_count((3, 4, 2))))
    np.testing.assert_array_equal(mlp_forward(p, [1.0, -2.0, 3.0]), [0.0, 0.0])


def test_forward_identity_layer():
    p = ParamSet((2, 2), [1, 0, 0, 1, 0, 0])
    np.testing.assert_array_equal(mlp_forward(p, [3.0, -1.0]), [3.0, -1.0])


def test_forward_matches_hand_rolled_reference(rng):
    for seed in range(5):
        p = init_params((5, 16, 16, 3), seed).with_values(rng.standard_normal(419))
        x = rng.standard_normal(5)
        np.testing.assert_allclose(mlp_forward(p, x), reference_forward(p, x), rtol=1e-12, atol=1e-12)


def test_forward_shape_mismatch():
    p = init_params((3, 2), 0)
    with pytest.raises(ShapeError):
        mlp_forward(p, [1.0, 2.0])


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0, 0, 0]).probs, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax([4.0, 4.0 + math.log(2)]).probs, [1 / 3, 2 / 3], atol=1e-15)
    p = softmax([1000.0, 0.0]).probs
    assert p[0] == pytest.approx(1.0) and p[1] < 1e-300
    with pytest.raises(ShapeError):
        softmax([])


def test_softmax_shift_invariance(rng):
    for _ in range(200):
        z = rng.standard_normal(int(rng.integers(2, 8)))
        c = rng.uniform(-700, 700)
        a, b = softmax(z).probs, softmax(z + c).probs
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert abs(a.sum() - 1) <= 1e-12


def test_categorical_validation():
    with pytest.raises(DomainError):
        CategoricalDistribution([0.5, 0.6])
    with pytest.raises(DomainError):
        CategoricalDistribution([-0.1, 1.1])


def test_log_prob_examples():
    assert log_prob(CategoricalDistribution([0.5, 0.5]), 0) == pytest.approx(-0.6931471805599453)
    assert log_prob(CategoricalDistribution([1.0, 0.0]), 0) == 0.0
    with pytest.raises(DomainError):
        log_prob(CategoricalDistribution([1.0, 0.0]), 1)
    with pytest.raises(ShapeError):
        log_prob(CategoricalDistribution([1.0, 0.0]), 2)


def test_entropy_examples_and_bounds(rng):
    assert entropy(CategoricalDistribution([0.25] * 4)) == pytest.approx(math.log(4), abs=1e-15)
    assert entropy(CategoricalDistribution([0.0, 1.0, 0.0])) == 0.0
    assert entropy(CategoricalDistribution([0.5, 0.5])) == pytest.approx(math.log(2))
    for _ in range(100):
        k = int(rng.integers(2, 9))
        h = entropy(softmax(3 * rng.standard_normal(k)))
        assert 0.0 <= h <= math.log(k)


def test_grad_weighted_logprob_zero_weight():
    p = init_params((3, 4, 2), 0)
    assert not grad_weighted_logprob(p, [1.0, 2.0, 3.0], 1, 0.0).any()


def test_grad_single_linear_layer_equal_logits():
    p = ParamSet((2, 2), np.zeros(6))
    x = np.array([2.0, -1.0])
    g = grad_weighted_logprob(p, x, 0, 1.0)
    # logit gradient (0.5, -0.5); weight rows are outer(dlogit, x), biases are dlogit
    np.testing.assert_allclose(g, [1.0, -0.5, -1.0, 0.5, 0.5, -0.5], atol=1e-15)
    fd = finite_difference(lambda q: log_prob(softmax(mlp_forward(q, x)), 0), p)
    np.testing.assert_allclose(g, fd, atol=1e-9)


def test_output_layer_identity(rng):
    p = init_params((3, 3), 0).with_values(rng.standard_normal(12))
    x = np.zeros(3)  # weight gradients vanish, bias gradient is the logit gradient
    for a in range(3):
        g = grad_weighted_logprob(p, x, a, 1.0)
        expected = np.eye(3)[a] - softmax(mlp_forward(p, x)).probs
        np.testing.assert_allclose(g[9:], expected, atol=1e-12)


def test_grad_weighted_logprob_matches_finite_differences(rng):
    for seed in range(10):
        p = init_params((5, 16, 16, 3), seed).with_values(0.5 * rng.standard_normal(419))
        x = rng.standard_normal(5)
        a = int(rng.integers(3))
        w = float(rng.standard_normal())
        g = grad_weighted_logprob(p, x, a, w)
        fd = finite_difference(lambda q: w * log_prob(softmax(mlp_forward(q, x)), a), p)
        assert relative_error(g, fd, floor=1e-6) < 1e-5


def test_grad_mse_examples(rng):
    zero = ParamSet((3, 4, 1), np.zeros(param_count((3, 4, 1))))
    assert not grad_mse(zero, [1.0, 2.0, 3.0], 0.0).any()
    p = init_params((3, 4, 1), 1)
    x = np.array([0.3, -0.2, 0.9])
    assert not grad_mse(p, x, float(mlp_forward(p, x)[0])).any()
    for _ in range(5):
        p = p.with_values(rng.standard_normal(p.size))
        t = float(rng.standard_normal())
        fd = finite_difference(lambda q: 0.5 * (mlp_forward(q, x)[0] - t) ** 2, p)
        assert relative_error(grad_mse(p, x, t), fd, floor=1e-6) < 1e-5
    with pytest.raises(ShapeError):
        grad_mse(init_params((3, 2), 0), x, 0.0)


def test_sgd_step():
    p = ParamSet((1, 1), [1.0, 1.0])
    np.testing.assert_allclose(sgd_step(p, [1.0, 2.0], 0.1).values, [0.9, 0.8])
    np.testing.assert_array_equal(sgd_step(p, [0.0, 0.0], 0.1).values, p.values)
    np.testing.assert_array_equal(
        sgd_step(p, [1.0, 2.0], 0.1, "ascend").values, sgd_step(p, [-1.0, -2.0], 0.1).values
    )
    with pytest.raises(ConfigError):
        sgd_step(p, [1.0, 2.0], 0.0)
    with pytest.raises(ShapeError):
        sgd_step(p, [1.0], 0.1)
    with pytest.raises(ConfigError):
        sgd_step(p, [1.0, 2.0], 0.1, "sideways")
