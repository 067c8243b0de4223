"""Supervised classification recast as a one-step bandit.

Each labelled example becomes a one-step episode whose context is the
features; action ``a`` pays ``r(x, a) = 1`` if ``a`` is the label and 0
otherwise. Averaging the weighted log-likelihood over *all* actions, weighted by
those rewards, gives exactly the negative softmax cross-entropy. So the exact
policy gradient equals minus the cross-entropy gradient. A sampled policy
gradient matches only in expectation.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, ParseError, ShapeError
from .losses import DirectLossKind, direct_loss
from .numerics import CategoricalDistribution, backprop, forward_batch, softmax_rows
from .pgcore import Estimator, GradEstimate, weighted_logprob_sum


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels, dtype=np.int64).ravel()
        if X.shape[0] != y.size or y.size == 0:
            raise ShapeError("one label per feature row required")
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise ShapeError(f"labels must lie in 0..{self.num_classes - 1}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    def subset(self, idx):
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)


def indicator_reward(labels, actions):
    return (np.asarray(labels) == np.asarray(actions)).astype(np.float64)


@dataclass(frozen=True)
class BanditView:
    dataset: LabeledDataset
    reward_rule: Callable = field(default=indicator_reward)

    def reward_matrix(self, idx=None):
        """``(n, K)`` reward of every action for every example in ``idx``."""
        y = self.dataset.labels if idx is None else self.dataset.labels[idx]
        K = self.dataset.num_classes
        return np.asarray(
            self.reward_rule(np.repeat(y, K), np.tile(np.arange(K), y.size)), dtype=np.float64
        ).reshape(y.size, K)


def load_dataset(source, num_classes=None):
    """Read a ``label,f1,...,fd`` CSV."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    header = [h.strip().lower() for h in next(reader, [])]
    if not header or header[0] != "label" or len(header) < 2:
        raise ParseError("header must be 'label,f1,...,fd'", 1)
    labels, rows = [], []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
        try:
            labels.append(int(row[0]))
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"malformed row {row!r}", reader.line_num) from exc
    if not labels:
        raise ParseError("no data rows")
    K = num_classes if num_classes is not None else max(labels) + 1
    return LabeledDataset(np.array(rows), np.array(labels), K)


def make_moons(n=200, noise=0.1, seed=0):
    """Two interleaved half circles, labels 0 and 1."""
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.pi * rng.random(n0)
    t1 = np.pi * rng.random(n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower]) + noise * rng.standard_normal((n, 2))
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(n)
    return LabeledDataset(X[order], y[order], 2)


def sl_cross_entropy_gradient(params, features, labels):
    """Mean softmax cross-entropy ``-(1/N) sum log p(y_i | x_i)`` and its gradient."""
    acts = forward_batch(params, features)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size != acts.shape[0] or labels.size == 0:
        raise ShapeError("one label per example required")
    probs = softmax_rows(acts[:, -params.n_outputs :])
    rows = np.arange(labels.size)
    p_true = probs[rows, labels]
    if np.any(p_true <= 0.0):
        raise DomainError(f"zero probability on the true label of example {int(np.argmin(p_true))}")
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    n = labels.size
    return float(-np.log(p_true).sum() / n), backprop(params, acts, dlogits) / n


def pg_full_expectation_gradient(params, bandit, batch=None):
    """Gradient of ``(1/N) sum_i sum_a r(x_i, a) log pi(a | x_i)``: no sampling."""
    idx = np.arange(len(bandit.dataset)) if batch is None else np.asarray(batch)
    X = bandit.dataset.features[idx]
    R = bandit.reward_matrix(idx)
    n, K = R.shape
    rows = np.flatnonzero(R.ravel() != 0.0)
    _, grad = weighted_logprob_sum(
        params, np.repeat(X, K, axis=0)[rows], np.tile(np.arange(K), n)[rows], R.ravel()[rows]
    )
    return grad / n


def pg_expected_reward_gradient(params, bandit, batch=None):
    """Exact mean of :func:`pg_sampled_gradient`.

    This is the gradient of ``(1/N) sum_i E_{a ~ pi}[r(x_i, a)]``, i.e. the
    score function weighted by ``pi(a|x) r(x, a)``. It coincides with
    :func:`pg_full_expectation_gradient` only when the policy puts all its
    mass on the rewarded actions.
    """
    idx = np.arange(len(bandit.dataset)) if batch is None else np.asarray(batch)
    X = bandit.dataset.features[idx]
    R = bandit.reward_matrix(idx)
    n, K = R.shape
    W = (R * softmax_rows(forward_batch(params, X)[:, -params.n_outputs :])).ravel()
    rows = np.flatnonzero(W != 0.0)
    _, grad = weighted_logprob_sum(
        params, np.repeat(X, K, axis=0)[rows], np.tile(np.arange(K), n)[rows], W[rows]
    )
    return grad / n


def pg_sampled_gradient(params, bandit, batch, rng_seed, num_samples):
    """Monte-Carlo version: one sampled action per example per draw."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    idx = np.arange(len(bandit.dataset)) if batch is None else np.asarray(batch)
    X = bandit.dataset.features[idx]
    y = bandit.dataset.labels[idx]
    n = len(idx)
    rng = np.random.default_rng(rng_seed)
    probs = softmax_rows(forward_batch(params, X)[:, -params.n_outputs :])
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((num_samples, n))
    actions = np.minimum((cdf[None, :, :] <= u[:, :, None]).sum(axis=2), params.n_outputs - 1)
    r = np.asarray(bandit.reward_rule(np.tile(y, num_samples), actions.ravel()), dtype=np.float64)
    _, per_draw = weighted_logprob_sum(
        params,
        np.tile(X, (num_samples, 1)),
        actions.ravel(),
        r,
        np.arange(0, num_samples * n + 1, n),
    )
    per_draw /= n
    stderr = per_draw.std(axis=0, ddof=1) / np.sqrt(num_samples) if num_samples > 1 else None
    return GradEstimate(
        gradient=per_draw.mean(axis=0),
        estimator=Estimator.REINFORCE,
        num_trajectories=num_samples * n,
        weight_stats=(float(r.mean()), float(r.var())),
        stderr=stderr,
    )


def _probs(d):
    return d.probs if isinstance(d, CategoricalDistribution) else CategoricalDistribution(d).probs


def cross_entropy(p, q):
    p, q = _probs(p), _probs(q)
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        raise DomainError("q must be positive wherever p is")
    return float(-(p[support] * np.log(q[support])).sum())


def shannon_entropy(p):
    p = _probs(p)
    support = p > 0.0
    return float(-(p[support] * np.log(p[support])).sum())


def kl_divergence(p, q):
    p, q = _probs(p), _probs(q)
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        raise DomainError("q must be positive wherever p is")
    return float((p[support] * np.log(p[support] / q[support])).sum())


def kl_decomposition_check(p, q):
    """``(H(p, q), H(p), KL(p || q))``, each computed on its own."""
    return cross_entropy(p, q), shannon_entropy(p), kl_divergence(p, q)


def binary_cross_entropy(p1, label):
    """Two-class cross-entropy through the ``y in {-1, 1}`` direct loss.

    ``label`` 1 maps to ``y = 1``; the prediction is ``f = p1 - p0``, so
    ``(1 + f) / 2 = p1``. The second term covers the negative class.
    """
    y = 1.0 if label == 1 else -1.0
    f = 2.0 * p1 - 1.0
    return direct_loss(DirectLossKind.CROSS_ENTROPY, y, f) + direct_loss(
        DirectLossKind.CROSS_ENTROPY, -y, -f
    )
