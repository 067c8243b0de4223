"""Dense ReLU network with a softmax head and exact gradients.

Everything is float64. A :class:`ParamSet` is immutable; updates return a new
one. Single-example functions (``mlp_forward``, ``grad_weighted_logprob``, ...)
sit on top of batched helpers that the training code uses directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, NumericError, ShapeError


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Flattened MLP weights: per layer ``W`` (fan_out x fan_in) then ``b``."""

    layout: tuple
    values: np.ndarray

    def __post_init__(self):
        layout = _check_layout(self.layout)
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != param_count(layout):
            raise ShapeError(
                f"layout {layout} needs {param_count(layout)} values, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericError("parameter values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_layout_arr", np.array(layout, dtype=np.int64))

    @property
    def size(self):
        return self.values.size

    @property
    def n_inputs(self):
        return self.layout[0]

    @property
    def n_outputs(self):
        return self.layout[-1]

    def layers(self):
        """``[(W, b), ...]`` as read-only views into ``values``."""
        out = []
        p = 0
        for fi, fo in zip(self.layout[:-1], self.layout[1:]):
            W = self.values[p : p + fi * fo].reshape(fo, fi)
            p += fi * fo
            out.append((W, self.values[p : p + fo]))
            p += fo
        return out

    def with_values(self, values):
        return ParamSet(self.layout, values)


@dataclass(frozen=True, eq=False)
class CategoricalDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64).ravel()
        if p.size == 0:
            raise ShapeError("empty distribution")
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise DomainError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size


def _check_layout(layout):
    try:
        layout = tuple(int(n) for n in layout)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid layout {layout!r}") from exc
    if len(layout) < 2 or any(n < 1 for n in layout):
        raise ConfigError(f"layout needs >= 2 positive widths, got {layout}")
    return layout


def param_count(layout):
    return sum(fi * fo + fo for fi, fo in zip(layout[:-1], layout[1:]))


def init_params(layout, seed):
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    layout = _check_layout(layout)
    rng = np.random.default_rng(seed)
    chunks = []
    for fi, fo in zip(layout[:-1], layout[1:]):
        limit = np.sqrt(6.0 / (fi + fo))
        chunks.append(rng.uniform(-limit, limit, size=fi * fo))
        chunks.append(np.zeros(fo))
    return ParamSet(layout, np.concatenate(chunks))


# --------------------------------------------------------------------------
# batched helpers


def as_inputs(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.n_inputs:
        raise ShapeError(f"expected inputs of width {params.n_inputs}, got shape {X.shape}")
    return X


def forward_batch(params, X):
    """All activations, shape ``(B, sum(layout))``; logits are the last block."""
    return kernels.mlp_forward(params.values, params._layout_arr, as_inputs(params, X))


def backprop(params, acts, dout, offsets=None):
    """Parameter gradients given output-space gradients ``dout``.

    With ``offsets`` rows are summed within each group (result ``(G, P)``);
    without, everything is summed into one vector.
    """
    B = acts.shape[0]
    if offsets is None:
        grouped = False
        offsets = np.array([0, B], dtype=np.int64)
    else:
        grouped = True
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets[0] != 0 or offsets[-1] != B or np.any(np.diff(offsets) <= 0):
            raise ShapeError("offsets must increase strictly from 0 to the batch size")
    dout = np.asarray(dout, dtype=np.float64).reshape(B, params.n_outputs)
    grads = kernels.mlp_backward(params.values, params._layout_arr, acts, dout, offsets)
    return grads if grouped else grads[0]


def softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy_rows(probs):
    safe = np.where(probs > 0.0, probs, 1.0)
    h = -(probs * np.log(safe)).sum(axis=-1)
    return np.clip(h, 0.0, np.log(probs.shape[-1]))


def entropy_logit_grad(probs):
    """d H(softmax(z)) / dz = -p (log p + H), with 0 log 0 = 0."""
    safe = np.where(probs > 0.0, probs, 1.0)
    logp = np.log(safe)
    h = -(probs * logp).sum(axis=-1, keepdims=True)
    return -probs * (logp + h)


def logprob_logit_grad(probs, actions, weights):
    """Rows ``w * (onehot(a) - p)``."""
    d = -probs * weights[:, None]
    d[np.arange(len(actions)), actions] += weights
    return d


def policy_probs(params, X):
    acts = forward_batch(params, X)
    return softmax_rows(acts[:, -params.n_outputs :])


# --------------------------------------------------------------------------
# single-example operations


def mlp_forward(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("mlp_forward takes one input vector")
    return forward_batch(params, x)[0, -params.n_outputs :]


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64).ravel()
    if z.size == 0:
        raise ShapeError("softmax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax needs finite logits")
    return CategoricalDistribution(softmax_rows(z))


def log_prob(dist, action):
    if not 0 <= action < len(dist):
        raise ShapeError(f"action {action} outside 0..{len(dist) - 1}")
    p = dist.probs[action]
    if p <= 0.0:
        raise DomainError(f"action {action} has zero probability (collapsed policy)")
    return float(np.log(p))


def entropy(dist):
    return float(entropy_rows(dist.probs))


def grad_weighted_logprob(params, x, action, weight):
    """Gradient of ``weight * log pi(action | x)`` with respect to all parameters."""
    acts = forward_batch(params, np.asarray(x, dtype=np.float64).ravel())
    probs = softmax_rows(acts[:, -params.n_outputs :])
    if not 0 <= action < params.n_outputs:
        raise ShapeError(f"action {action} outside 0..{params.n_outputs - 1}")
    if probs[0, action] <= 0.0:
        raise DomainError(f"action {action} has zero probability (collapsed policy)")
    dlogits = logprob_logit_grad(probs, np.array([action]), np.array([float(weight)]))
    return backprop(params, acts, dlogits)


def grad_mse(params, x, target):
    """Gradient of ``0.5 * (V(x) - target)**2`` for a scalar-output network."""
    if params.n_outputs != 1:
        raise ShapeError("grad_mse needs a scalar-output network")
    acts = forward_batch(params, np.asarray(x, dtype=np.float64).ravel())
    return backprop(params, acts, acts[:, -1:] - float(target))


def sgd_step(params, gradient, lr, direction="descend"):
    gradient = np.asarray(gradient, dtype=np.float64).ravel()
    if gradient.size != params.size:
        raise ShapeError(f"gradient has {gradient.size} entries, params have {params.size}")
    if not lr > 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if direction == "descend":
        return params.with_values(params.values - lr * gradient)
    if direction == "ascend":
        return params.with_values(params.values + lr * gradient)
    raise ConfigError(f"direction must be 'ascend' or 'descend', got {direction!r}")
