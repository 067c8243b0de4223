"""Returns, policy-gradient objectives and learning-rate schedules.

Every estimator here is an instance of one weighted log-likelihood,

    J(theta) = (1/N) sum_i sum_t w_{i,t} log pi_theta(a_{i,t} | s_{i,t}),

whose gradient is a cross-entropy gradient with the one-hot label scaled by
``w``. The weights decide the estimator:

* ``full_return``  - every step of trajectory i carries R_i(tau)
* ``reward_to_go`` - step t carries R_{i,t}
* either of the above minus a per-step baseline
* advantage ``R_{i,t} - V(s_{i,t})`` from a critic network (A2C)

Ascent on ``J`` is the policy-gradient update.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, ShapeError
from .numerics import (
    backprop,
    entropy_logit_grad,
    entropy_rows,
    forward_batch,
    logprob_logit_grad,
    softmax_rows,
)

WEIGHT_MODES = ("full_return", "reward_to_go")


class Estimator(enum.Enum):
    REINFORCE = "reinforce"
    REINFORCE_BASELINE = "reinforce_baseline"
    A2C = "a2c"


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: Optional[np.ndarray] = None
    terminal: bool = True

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        actions = np.asarray(self.actions, dtype=np.int64).ravel()
        rewards = np.asarray(self.rewards, dtype=np.float64).ravel()
        T = len(actions)
        if T == 0:
            raise ShapeError("empty trajectory")
        if states.shape[0] != T or rewards.size != T:
            raise ShapeError("states, actions and rewards must have one entry per step")
        if not np.all(np.isfinite(rewards)):
            raise ShapeError("rewards must be finite")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        if self.log_probs is not None:
            object.__setattr__(self, "log_probs", np.asarray(self.log_probs, dtype=np.float64).ravel())

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Trajectories stored back to back; trajectory i spans rows ``offsets[i]:offsets[i+1]``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    offsets: np.ndarray
    log_probs: Optional[np.ndarray] = None

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        actions = np.asarray(self.actions, dtype=np.int64).ravel()
        rewards = np.ascontiguousarray(self.rewards, dtype=np.float64).ravel()
        M = len(actions)
        if len(offsets) < 2 or offsets[0] != 0 or offsets[-1] != M or np.any(np.diff(offsets) <= 0):
            raise ShapeError("batch needs >= 1 nonempty trajectory and consistent offsets")
        if states.shape[0] != M or rewards.size != M:
            raise ShapeError("states, actions and rewards must have one entry per step")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)

    @classmethod
    def from_trajectories(cls, trajectories):
        trajectories = list(trajectories)
        if not trajectories:
            raise ShapeError("empty batch")
        dims = {t.states.shape[1] for t in trajectories}
        if len(dims) != 1:
            raise ShapeError("all states must share one dimension")
        lengths = [len(t) for t in trajectories]
        logp = None
        if all(t.log_probs is not None for t in trajectories):
            logp = np.concatenate([t.log_probs for t in trajectories])
        return cls(
            states=np.concatenate([t.states for t in trajectories]),
            actions=np.concatenate([t.actions for t in trajectories]),
            rewards=np.concatenate([t.rewards for t in trajectories]),
            offsets=np.concatenate([[0], np.cumsum(lengths)]),
            log_probs=logp,
        )

    def __len__(self):
        return len(self.offsets) - 1

    def __getitem__(self, i):
        a, b = self.offsets[i], self.offsets[i + 1]
        logp = None if self.log_probs is None else self.log_probs[a:b]
        return Trajectory(self.states[a:b], self.actions[a:b], self.rewards[a:b], logp)

    @property
    def num_steps(self):
        return len(self.actions)

    def trajectory_index(self):
        """Trajectory id of every row."""
        return np.repeat(np.arange(len(self)), np.diff(self.offsets))


def as_batch(batch):
    if isinstance(batch, TrajectoryBatch):
        return batch
    if isinstance(batch, Trajectory):
        return TrajectoryBatch.from_trajectories([batch])
    return TrajectoryBatch.from_trajectories(batch)


@dataclass(frozen=True, eq=False)
class ReturnProfile:
    returns: np.ndarray
    total: float
    gamma: float


@dataclass(frozen=True, eq=False)
class GradEstimate:
    gradient: np.ndarray
    estimator: Estimator
    num_trajectories: int
    weight_stats: tuple
    stderr: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Schedule:
    """``fixed``: lr0 at every step. ``inverse``: lr0 / (1 + k * step)."""

    kind: str
    lr0: float
    k: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "inverse"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not self.lr0 > 0.0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.kind == "inverse" and not self.k > 0.0:
            raise ConfigError(f"annealing rate must be positive, got {self.k}")

    @classmethod
    def parse(cls, text):
        """``fixed:0.01`` or ``inverse:0.1:0.01``."""
        parts = text.strip().split(":")
        try:
            if parts[0] == "fixed" and len(parts) == 2:
                return cls("fixed", float(parts[1]))
            if parts[0] == "inverse" and len(parts) == 3:
                return cls("inverse", float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ConfigError(f"bad schedule {text!r}") from exc
        raise ConfigError(f"bad schedule {text!r}; use fixed:LR or inverse:LR:K")

    def label(self):
        return f"fixed:{self.lr0!r}" if self.kind == "fixed" else f"inverse:{self.lr0!r}:{self.k!r}"


def lr_at(schedule, step):
    if step < 0:
        raise ConfigError("step must be nonnegative")
    if schedule.kind == "fixed":
        return schedule.lr0
    return schedule.lr0 / (1.0 + schedule.k * step)


def _check_gamma(gamma):
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma must lie in (0, 1], got {gamma}")


def discounted_returns(rewards, gamma):
    _check_gamma(gamma)
    r = np.asarray(rewards, dtype=np.float64).ravel()
    if r.size == 0:
        raise ShapeError("empty reward sequence")
    if not np.all(np.isfinite(r)):
        raise ShapeError("rewards must be finite")
    R = kernels.segment_returns(r, np.array([0, r.size], dtype=np.int64), gamma)
    return ReturnProfile(returns=R, total=float(R[0]), gamma=gamma)


def batch_returns(batch, gamma):
    """Reward-to-go ``R_t`` for every row of ``batch``."""
    _check_gamma(gamma)
    return kernels.segment_returns(batch.rewards, batch.offsets, gamma)


def step_weights(batch, gamma, weight_mode="full_return"):
    rtg = batch_returns(batch, gamma)
    if weight_mode == "reward_to_go":
        return rtg
    if weight_mode == "full_return":
        return np.repeat(rtg[batch.offsets[:-1]], np.diff(batch.offsets))
    raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")


def baseline_weights(profile, baseline):
    b = np.asarray(baseline, dtype=np.float64).ravel()
    if b.size != profile.returns.size:
        raise ShapeError("baseline must have one value per step")
    return profile.returns - b


def _policy_pass(params, states, actions, offsets=None):
    acts = forward_batch(params, states)
    probs = softmax_rows(acts[:, -params.n_outputs :])
    if np.any(actions < 0) or np.any(actions >= params.n_outputs):
        raise ShapeError("action index outside the policy head")
    taken = probs[np.arange(len(actions)), actions]
    bad = np.flatnonzero(taken <= 0.0)
    if bad.size:
        row = int(bad[0])
        where = f"row {row}"
        if offsets is not None:
            i = int(np.searchsorted(offsets, row, side="right") - 1)
            where = f"trajectory {i}, step {row - offsets[i]}"
        raise DomainError(f"policy gives zero probability to the action taken at {where}")
    return acts, probs, np.log(taken)


def weighted_logprob_sum(params, states, actions, weights, offsets=None):
    """``sum w log pi(a|s)`` and its gradient, without normalisation.

    With ``offsets`` the gradient is returned per group, shape ``(G, P)``.
    """
    actions = np.asarray(actions, dtype=np.int64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size != actions.size:
        raise ShapeError("one weight per row required")
    if actions.size == 0:
        P = params.size
        return 0.0, (np.zeros(P) if offsets is None else np.zeros((len(offsets) - 1, P)))
    acts, probs, logp = _policy_pass(params, states, actions, offsets)
    dlogits = logprob_logit_grad(probs, actions, weights)
    return float(np.dot(weights, logp)), backprop(params, acts, dlogits, offsets)


def _weighted(batch, params, weights, per_trajectory=False):
    N = len(batch)
    if per_trajectory:
        total, rows = weighted_logprob_sum(params, batch.states, batch.actions, weights, batch.offsets)
        return total / N, rows
    acts, probs, logp = _policy_pass(params, batch.states, batch.actions, batch.offsets)
    dlogits = logprob_logit_grad(probs, batch.actions, weights)
    return float(np.dot(weights, logp)) / N, backprop(params, acts, dlogits) / N


def _resolve_weights(batch, gamma, weight_mode, baseline):
    w = step_weights(batch, gamma, weight_mode)
    if baseline is not None:
        b = np.asarray(baseline, dtype=np.float64).ravel()
        if b.size == 1:
            b = np.full(w.size, b[0])
        if b.size != w.size:
            raise ShapeError("baseline must be a scalar or have one value per step")
        w = w - b
    return w


def weighted_logprob_objective(batch, params, weights):
    """(J, grad) for arbitrary per-step weights."""
    batch = as_batch(batch)
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size != batch.num_steps:
        raise ShapeError("one weight per step required")
    return _weighted(batch, params, weights)


def reinforce_objective(batch, params, gamma, weight_mode="full_return", baseline=None):
    """(J, grad); ``grad`` is the ascent direction, averaged over trajectories.

    ``baseline`` may be a scalar or one value per step; it is subtracted from
    the weights.
    """
    batch = as_batch(batch)
    return _weighted(batch, params, _resolve_weights(batch, gamma, weight_mode, baseline))


def per_trajectory_gradients(batch, params, gamma, weight_mode="full_return", baseline=None):
    """``(N, P)`` array; row i is sum_t w_{i,t} grad log pi for trajectory i."""
    batch = as_batch(batch)
    w = _resolve_weights(batch, gamma, weight_mode, baseline)
    return _weighted(batch, params, w, per_trajectory=True)[1]


def estimate_gradient(batch, params, gamma, weight_mode="full_return", baseline=None):
    batch = as_batch(batch)
    w = _resolve_weights(batch, gamma, weight_mode, baseline)
    rows = _weighted(batch, params, w, per_trajectory=True)[1]
    N = len(batch)
    stderr = rows.std(axis=0, ddof=1) / np.sqrt(N) if N > 1 else None
    return GradEstimate(
        gradient=rows.mean(axis=0),
        estimator=Estimator.REINFORCE if baseline is None else Estimator.REINFORCE_BASELINE,
        num_trajectories=N,
        weight_stats=(float(w.mean()), float(w.var())),
        stderr=stderr,
    )


def critic_values(critic_params, states):
    if critic_params.n_outputs != 1:
        raise ShapeError("critic must have a scalar output")
    acts = forward_batch(critic_params, states)
    return acts, acts[:, -1].copy()


def a2c_objective(batch, policy_params, critic_params, gamma):
    """(J, policy_grad, critic_grad).

    Advantages ``R_t - V(s_t)`` are constants in the policy term. The critic
    gradient is that of the mean of ``0.5 (V(s_t) - R_t)^2`` over all steps
    (a descent direction).
    """
    batch = as_batch(batch)
    R = batch_returns(batch, gamma)
    acts_v, V = critic_values(critic_params, batch.states)
    J, pg = _weighted(batch, policy_params, R - V)
    cg = backprop(critic_params, acts_v, (V - R)[:, None]) / batch.num_steps
    return J, pg, cg


def entropy_bonus(batch, params):
    """(1/N) sum_i sum_t H(pi(.|s_{i,t})) and its gradient."""
    batch = as_batch(batch)
    acts = forward_batch(params, batch.states)
    probs = softmax_rows(acts[:, -params.n_outputs :])
    N = len(batch)
    H = entropy_rows(probs)
    grad = backprop(params, acts, entropy_logit_grad(probs)) / N
    return float(H.sum()) / N, grad


def mean_visited_entropy(batch, params):
    """Entropy averaged over every visited state (not per trajectory)."""
    batch = as_batch(batch)
    probs = softmax_rows(forward_batch(params, batch.states)[:, -params.n_outputs :])
    return float(entropy_rows(probs).mean())


def entropy_regularized(batch, params, gamma, lam, weight_mode="full_return", baseline=None):
    """``J + lam * entropy_bonus``; ``lam == 0`` returns exactly ``reinforce_objective``."""
    if not lam >= 0.0:
        raise ConfigError(f"entropy coefficient must be nonnegative, got {lam}")
    batch = as_batch(batch)
    J, grad = reinforce_objective(batch, params, gamma, weight_mode, baseline)
    if lam == 0.0:
        return J, grad
    H, gH = entropy_bonus(batch, params)
    return J + lam * H, grad + lam * gH
