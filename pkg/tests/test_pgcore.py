import math

import numpy as np
import pytest

from pgce.envs import TabularMDP, sample_tabular
from pgce.equivalence import sl_cross_entropy_gradient
from pgce.errors import ConfigError, DomainError, ShapeError
from pgce.numerics import ParamSet, init_params, param_count
from pgce.oracle import exact_estimator_mean, exact_policy_gradient, finite_difference, relative_error
from pgce.pgcore import (
    Schedule,
    Trajectory,
    TrajectoryBatch,
    a2c_objective,
    baseline_weights,
    discounted_returns,
    entropy_bonus,
    entropy_regularized,
    estimate_gradient,
    lr_at,
    mean_visited_entropy,
    per_trajectory_gradients,
    reinforce_objective,
    step_weights,
    weighted_logprob_objective,
)

from conftest import FIXTURE_GAMMA


def test_discounted_returns_examples():
    prof = discounted_returns([1, 1, 1], 0.5)
    np.testing.assert_allclose(prof.returns, [1.75, 1.5, 1.0])
    assert prof.total == 1.75
    np.testing.assert_allclose(discounted_returns([1, 2, 3], 1.0).returns, [6, 5, 3])
    assert discounted_returns([4.2], 0.3).total == 4.2
    for g in (0.0, 1.5, -0.1):
        with pytest.raises(ConfigError):
            discounted_returns([1.0], g)
    with pytest.raises(ShapeError):
        discounted_returns([], 0.9)


def test_return_recursion(rng):
    for _ in range(20):
        r = rng.standard_normal(int(rng.integers(1, 1001)))
        g = float(rng.uniform(0.01, 1.0))
        R = discounted_returns(r, g).returns
        nxt = np.append(R[1:], 0.0)
        np.testing.assert_allclose(R, r + g * nxt, atol=1e-12)
        assert discounted_returns(r, g).total == pytest.approx(np.sum(r * g ** np.arange(r.size)), abs=1e-9)


def test_baseline_weights():
    prof = discounted_returns([1.0, 1.0], 1.0)
    np.testing.assert_array_equal(baseline_weights(prof, [0, 0]), [2, 1])
    np.testing.assert_array_equal(baseline_weights(prof, prof.returns), [0, 0])
    np.testing.assert_allclose(baseline_weights(prof, [0.5, 0.5]), [1.5, 0.5])
    with pytest.raises(ShapeError):
        baseline_weights(prof, [1.0])


def test_schedules():
    assert lr_at(Schedule("fixed", 0.01), 12345) == 0.01
    inv = Schedule("inverse", 0.1, 0.01)
    assert lr_at(inv, 0) == 0.1
    assert lr_at(inv, 100) == pytest.approx(0.05)
    lrs = [lr_at(inv, s) for s in range(1000)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:])) and lrs[-1] > 0
    assert Schedule.parse("inverse:0.1:0.01") == inv
    assert Schedule.parse(inv.label()) == inv
    for bad in ("fixed", "fixed:-1", "inverse:0.1", "inverse:0.1:0", "cosine:1", "fixed:x"):
        with pytest.raises(ConfigError):
            Schedule.parse(bad)


def test_trajectory_validation():
    with pytest.raises(ShapeError):
        Trajectory(np.zeros((0, 2)), [], [])
    with pytest.raises(ShapeError):
        Trajectory(np.zeros((2, 2)), [0, 1], [1.0])
    with pytest.raises(ShapeError):
        Trajectory(np.zeros((1, 2)), [0], [np.inf])
    t1 = Trajectory(np.zeros((2, 3)), [0, 1], [1, 2])
    t2 = Trajectory(np.ones((1, 3)), [2], [3])
    b = TrajectoryBatch.from_trajectories([t1, t2])
    assert len(b) == 2 and b.num_steps == 3
    np.testing.assert_array_equal(b.trajectory_index(), [0, 0, 1])
    np.testing.assert_array_equal(b[1].actions, [2])
    with pytest.raises(ShapeError):
        TrajectoryBatch.from_trajectories([t1, Trajectory(np.zeros((1, 2)), [0], [0])])


def _bandit_batch(actions, rewards):
    n = len(actions)
    return TrajectoryBatch(np.ones((n, 1)), actions, rewards, np.arange(n + 1))


def test_zero_rewards_give_zero_objective(rng):
    p = init_params((1, 2), 0).with_values(rng.standard_normal(4))
    J, g = reinforce_objective(_bandit_batch([0, 1, 1], [0, 0, 0]), p, 1.0)
    assert J == 0.0 and not g.any()


def test_bandit_expected_gradient_in_logit_space():
    # equal logits, rewards (1, 0): expectation over both actions with prob 1/2
    p = ParamSet((1, 2), np.zeros(4))  # inputs are 1, so bias and weight gradients coincide
    batch = _bandit_batch([0, 1], [1.0, 0.0])
    _, g = reinforce_objective(batch, p, 1.0)
    np.testing.assert_allclose(g[2:], [0.25, -0.25], atol=1e-15)
    mdp = TabularMDP.bandit([1.0, 0.0])
    np.testing.assert_allclose(exact_policy_gradient(mdp, p)[2:], [0.25, -0.25], atol=1e-15)


def test_unit_weights_equal_pseudo_label_cross_entropy(rng):
    p = init_params((3, 5, 4), 1)
    X = rng.standard_normal((6, 3))
    a = rng.integers(0, 4, size=6)
    traj = Trajectory(X, a, np.zeros(6))
    _, g = weighted_logprob_objective(traj, p, np.ones(6))
    _, sl = sl_cross_entropy_gradient(p, X, a)
    np.testing.assert_allclose(g, -6 * sl, atol=1e-12)


def test_collapsed_policy_reports_location():
    p = ParamSet((1, 2), [0.0, 0.0, 800.0, -800.0])
    batch = TrajectoryBatch(np.ones((3, 1)), [0, 0, 1], [1, 1, 1], [0, 2, 3])
    with pytest.raises(DomainError, match="trajectory 1, step 0"):
        reinforce_objective(batch, p, 1.0)


def test_weight_modes(rng):
    batch = TrajectoryBatch(np.ones((3, 1)), [0, 1, 0], [1.0, 2.0, 3.0], [0, 2, 3])
    np.testing.assert_allclose(step_weights(batch, 0.5, "full_return"), [2.0, 2.0, 3.0])
    np.testing.assert_allclose(step_weights(batch, 0.5, "reward_to_go"), [2.0, 2.0, 3.0])
    np.testing.assert_allclose(step_weights(batch, 1.0, "reward_to_go"), [3.0, 2.0, 3.0])
    with pytest.raises(ConfigError):
        step_weights(batch, 1.0, "bogus")


def test_estimate_gradient_matches_objective(fixture_mdp, fixture_params):
    batch = sample_tabular(fixture_mdp, fixture_params, 200, np.random.default_rng(0))
    est = estimate_gradient(batch, fixture_params, FIXTURE_GAMMA)
    _, g = reinforce_objective(batch, fixture_params, FIXTURE_GAMMA)
    np.testing.assert_allclose(est.gradient, g, atol=1e-12)
    assert est.num_trajectories == 200 and est.stderr.shape == g.shape


def _zmax(rows, target):
    """Largest |z| over coordinates; zero-variance coordinates must match exactly."""
    se = rows.std(axis=0, ddof=1) / np.sqrt(len(rows))
    live = se > 0
    np.testing.assert_allclose(rows.mean(axis=0)[~live], target[~live], atol=1e-12)
    return float(np.max(np.abs(rows.mean(axis=0) - target)[live] / se[live]))


@pytest.fixture(scope="module")
def big_batch(fixture_mdp, fixture_params):
    return sample_tabular(fixture_mdp, fixture_params, 100_000, np.random.default_rng(7))


def test_reinforce_unbiased(fixture_mdp, fixture_params, big_batch):
    rows = per_trajectory_gradients(big_batch, fixture_params, FIXTURE_GAMMA)
    assert _zmax(rows, exact_policy_gradient(fixture_mdp, fixture_params, FIXTURE_GAMMA)) < 4


def test_reward_to_go_unbiased_at_gamma_one(fixture_mdp, fixture_params, big_batch):
    rows = per_trajectory_gradients(big_batch, fixture_params, 1.0, "reward_to_go")
    assert _zmax(rows, exact_policy_gradient(fixture_mdp, fixture_params, 1.0)) < 4


def test_reward_to_go_matches_its_exact_mean(fixture_mdp, fixture_params, big_batch):
    rows = per_trajectory_gradients(big_batch, fixture_params, FIXTURE_GAMMA, "reward_to_go")
    target = exact_estimator_mean(fixture_mdp, fixture_params, FIXTURE_GAMMA, "reward_to_go")
    assert _zmax(rows, target) < 4


@pytest.mark.parametrize("b", [-2.0, 0.5, 3.0])
def test_constant_baseline_keeps_mean(fixture_mdp, fixture_params, big_batch, b):
    rows = per_trajectory_gradients(big_batch, fixture_params, FIXTURE_GAMMA, baseline=b)
    assert _zmax(rows, exact_policy_gradient(fixture_mdp, fixture_params, FIXTURE_GAMMA)) < 4


def test_a2c_special_cases(fixture_mdp, fixture_params, rng):
    batch = sample_tabular(fixture_mdp, fixture_params, 50, rng)
    zero_critic = ParamSet((2, 4, 1), np.zeros(param_count((2, 4, 1))))
    J, pg, cg = a2c_objective(batch, fixture_params, zero_critic, FIXTURE_GAMMA)
    J2, g2 = reinforce_objective(batch, fixture_params, FIXTURE_GAMMA, "reward_to_go")
    assert J == J2
    np.testing.assert_array_equal(pg, g2)
    # a linear critic on one-hot states can output R_t exactly when R_t depends on the state only
    mdp = TabularMDP.bandit([1.0, 1.0])
    b1 = sample_tabular(mdp, init_params((1, 2), 0), 10, rng)
    exact_critic = ParamSet((1, 1), [0.0, 1.0])
    _, pg, cg = a2c_objective(b1, init_params((1, 2), 0), exact_critic, 1.0)
    assert not pg.any() and not cg.any()


def test_a2c_critic_gradient_matches_finite_differences(fixture_mdp, fixture_params, rng):
    batch = sample_tabular(fixture_mdp, fixture_params, 20, rng)
    critic = init_params((2, 4, 1), 5).with_values(rng.standard_normal(param_count((2, 4, 1))))
    from pgce.pgcore import batch_returns, critic_values

    R = batch_returns(batch, FIXTURE_GAMMA)
    _, _, cg = a2c_objective(batch, fixture_params, critic, FIXTURE_GAMMA)
    fd = finite_difference(lambda c: float(np.mean(0.5 * (critic_values(c, batch.states)[1] - R) ** 2)), critic)
    assert relative_error(cg, fd, floor=1e-8) < 1e-6


def test_a2c_matches_oracle_advantage_gradient(fixture_mdp, fixture_params):
    critic = init_params((2, 4, 1), 11)
    V = np.array([critic_value for critic_value in _critic_table(critic)])
    batch = sample_tabular(fixture_mdp, fixture_params, 100_000, np.random.default_rng(3))
    from pgce.pgcore import batch_returns

    R = batch_returns(batch, FIXTURE_GAMMA)
    s = batch.states.argmax(axis=1)
    rows = per_trajectory_gradients(batch, fixture_params, FIXTURE_GAMMA, "reward_to_go", baseline=V[s])
    _, pg, _ = a2c_objective(batch, fixture_params, critic, FIXTURE_GAMMA)
    np.testing.assert_allclose(pg, rows.mean(axis=0), atol=1e-12)
    base = np.tile(V, (fixture_mdp.horizon, 1))
    target = exact_estimator_mean(fixture_mdp, fixture_params, FIXTURE_GAMMA, "reward_to_go", base)
    assert _zmax(rows, target) < 4
    assert R.shape == s.shape


def _critic_table(critic):
    from pgce.pgcore import critic_values

    return critic_values(critic, np.eye(2))[1]


def test_entropy_regularization(fixture_mdp, fixture_params, rng):
    batch = sample_tabular(fixture_mdp, fixture_params, 30, rng)
    J0, g0 = reinforce_objective(batch, fixture_params, FIXTURE_GAMMA)
    J, g = entropy_regularized(batch, fixture_params, FIXTURE_GAMMA, 0.0)
    assert J == J0 and g.tobytes() == g0.tobytes()
    lam = 0.3
    J, g = entropy_regularized(batch, fixture_params, FIXTURE_GAMMA, lam)
    T = fixture_mdp.horizon
    assert J - J0 == pytest.approx(lam * T * mean_visited_entropy(batch, fixture_params), abs=1e-10)
    with pytest.raises(ConfigError):
        entropy_regularized(batch, fixture_params, FIXTURE_GAMMA, -0.1)


def test_entropy_gradient_matches_finite_differences(fixture_mdp, rng):
    p = init_params((2, 6, 2), 2).with_values(rng.standard_normal(param_count((2, 6, 2))))
    batch = sample_tabular(fixture_mdp, p, 10, rng)
    _, g = entropy_bonus(batch, p)
    fd = finite_difference(lambda q: entropy_bonus(batch, q)[0], p)
    assert relative_error(g, fd, floor=1e-8) < 1e-5


def test_entropy_ascent_reaches_uniform():
    mdp = TabularMDP.bandit([0.0, 0.0, 0.0])
    p = ParamSet((1, 3), [0.0, 0.0, 0.0, 2.0, -1.0, 0.5])
    rng = np.random.default_rng(0)
    last = -1.0
    for _ in range(1000):
        batch = sample_tabular(mdp, p, 4, rng)
        H = mean_visited_entropy(batch, p)
        assert H >= last - 1e-9
        last = H
        _, g = entropy_regularized(batch, p, 1.0, 0.5)
        p = p.with_values(p.values + 0.5 * g)
    assert math.log(3) - last < 1e-6
