"""Exact ground truth on small tabular MDPs, plus central finite differences.

The policy is a function of the state only, so ``pi`` is tabulated once per
state and every trajectory probability is the product

    P(s_1) prod_t pi(a_t | s_t) P(s_{t+1} | s_t, a_t).

Enumeration is exhaustive; nothing is sampled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import MAX_ENUMERATED
from .errors import CapacityError, NumericError, ShapeError
from .numerics import ParamSet, backprop, forward_batch, logprob_logit_grad, policy_probs
from .pgcore import _check_gamma


@dataclass(frozen=True, eq=False)
class TrajectoryEnumeration:
    """All trajectories with nonzero probability, as ``(E, T)`` arrays."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    probs: np.ndarray
    returns: np.ndarray
    reward_to_go: np.ndarray

    @property
    def total_probability(self):
        return float(self.probs.sum())

    def __len__(self):
        return len(self.probs)

    def entries(self):
        for s, a, p, R in zip(self.states, self.actions, self.probs, self.returns):
            yield tuple(zip(s.tolist(), a.tolist())), float(p), float(R)


def policy_table(mdp, policy):
    """``(S, A)`` action probabilities; ``policy`` is a ParamSet or already a table."""
    if isinstance(policy, ParamSet):
        if policy.n_inputs != mdp.num_states or policy.n_outputs != mdp.num_actions:
            raise ShapeError(f"policy layout {policy.layout} does not fit the MDP")
        return policy_probs(policy, np.eye(mdp.num_states))
    table = np.asarray(policy, dtype=np.float64)
    if table.shape != (mdp.num_states, mdp.num_actions):
        raise ShapeError("policy table must be (S, A)")
    return table


def enumerate_trajectories(mdp, policy, gamma=1.0):
    _check_gamma(gamma)
    if mdp.trajectory_count() > MAX_ENUMERATED:
        raise CapacityError(
            f"{mdp.trajectory_count()} trajectories exceed the enumeration budget of {MAX_ENUMERATED}"
        )
    pi = policy_table(mdp, policy)
    S, A, T = mdp.num_states, mdp.num_actions, mdp.horizon
    prob = mdp.initial.copy()
    s_hist = np.arange(S)[:, None]
    a_hist = np.empty((S, 0), dtype=np.int64)
    keep = prob > 0.0
    prob, s_hist, a_hist = prob[keep], s_hist[keep], a_hist[keep]
    for t in range(T):
        E = len(prob)
        prob = (prob[:, None] * pi[s_hist[:, -1]]).ravel()
        s_hist = np.repeat(s_hist, A, axis=0)
        a_hist = np.column_stack([np.repeat(a_hist, A, axis=0), np.tile(np.arange(A), E)])
        keep = prob > 0.0
        prob, s_hist, a_hist = prob[keep], s_hist[keep], a_hist[keep]
        if t < T - 1:
            E = len(prob)
            prob = (prob[:, None] * mdp.transition[s_hist[:, -1], a_hist[:, -1]]).ravel()
            s_hist = np.column_stack([np.repeat(s_hist, S, axis=0), np.tile(np.arange(S), E)])
            a_hist = np.repeat(a_hist, S, axis=0)
            keep = prob > 0.0
            prob, s_hist, a_hist = prob[keep], s_hist[keep], a_hist[keep]
    rewards = mdp.reward[s_hist, a_hist]
    disc = gamma ** np.arange(T)
    # reward-to-go R_t = sum_{k>=t} gamma^{k-t} r_k
    rtg = np.zeros_like(rewards)
    acc = np.zeros(len(prob))
    for t in range(T - 1, -1, -1):
        acc = rewards[:, t] + gamma * acc
        rtg[:, t] = acc
    return TrajectoryEnumeration(s_hist, a_hist, rewards, prob, rewards @ disc, rtg)


def exact_objective(mdp, policy, gamma=1.0):
    """J = sum_tau P(tau) R(tau)."""
    en = enumerate_trajectories(mdp, policy, gamma)
    return float(np.dot(en.probs, en.returns))


def score_table(mdp, params):
    """``(S*A, P)``; row ``s*A + a`` is grad log pi(a | s)."""
    S, A = mdp.num_states, mdp.num_actions
    X = np.repeat(np.eye(S), A, axis=0)
    acts = forward_batch(params, X)
    logits = acts[:, -params.n_outputs :]
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    actions = np.tile(np.arange(A), S)
    dlogits = logprob_logit_grad(probs, actions, np.ones(S * A))
    return backprop(params, acts, dlogits, np.arange(S * A + 1))


def _weighted_score_sum(mdp, params, en, step_weights):
    A = mdp.num_actions
    idx = (en.states * A + en.actions).ravel()
    c = np.bincount(idx, weights=(en.probs[:, None] * step_weights).ravel(), minlength=mdp.num_states * A)
    return c @ score_table(mdp, params)


def exact_policy_gradient(mdp, params, gamma=1.0):
    """sum_tau P(tau) R(tau) sum_t grad log pi(a_t | s_t)."""
    en = enumerate_trajectories(mdp, params, gamma)
    w = np.repeat(en.returns[:, None], mdp.horizon, axis=1)
    return _weighted_score_sum(mdp, params, en, w)


def exact_estimator_mean(mdp, params, gamma=1.0, weight_mode="full_return", baseline=None):
    """Expected per-trajectory gradient estimate ``E[sum_t w_t grad log pi]``.

    ``baseline`` is ``(T, S)``: the value subtracted at step t in state s.
    """
    en = enumerate_trajectories(mdp, params, gamma)
    if weight_mode == "full_return":
        w = np.repeat(en.returns[:, None], mdp.horizon, axis=1)
    elif weight_mode == "reward_to_go":
        w = en.reward_to_go.copy()
    else:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    if baseline is not None:
        b = np.asarray(baseline, dtype=np.float64)
        w = w - b[np.arange(mdp.horizon)[None, :], en.states]
    return _weighted_score_sum(mdp, params, en, w)


def exact_state_values(mdp, policy, gamma=1.0):
    """``V[t, s]``: expected discounted reward-to-go from state s at step t."""
    _check_gamma(gamma)
    pi = policy_table(mdp, policy)
    T, S = mdp.horizon, mdp.num_states
    V = np.zeros((T + 1, S))
    for t in range(T - 1, -1, -1):
        Q = mdp.reward + gamma * mdp.transition @ V[t + 1]
        V[t] = (pi * Q).sum(axis=1)
    return V[:T]


def finite_difference(f, params, step=1e-5):
    """Central differences of scalar ``f`` at ``params`` (ParamSet or array)."""
    if not step > 0.0:
        raise ValueError("step must be positive")
    if isinstance(params, ParamSet):
        theta = params.values.copy()
        make = params.with_values
    else:
        theta = np.array(params, dtype=np.float64).ravel()
        make = lambda v: v  # noqa: E731
    grad = np.empty(theta.size)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        fp = f(make(theta.copy()))
        theta[i] = orig - step
        fm = f(make(theta.copy()))
        theta[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"objective is not finite around coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(a, b, floor=1e-10):
    """Largest coordinate-wise ``|a-b| / max(|a|,|b|)``, skipping coordinates below ``floor``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(b))
    mask = scale >= floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a - b)[mask] / scale[mask]))

