"""Invariant suites behind ``pgce verify``.

Each suite returns a list of :class:`Check` records: what was measured, the
tolerance it was held to, and whether it passed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .envs import load_mdp, sample_tabular
from .equivalence import (
    BanditView,
    LabeledDataset,
    cross_entropy,
    kl_decomposition_check,
    kl_divergence,
    pg_full_expectation_gradient,
    pg_expected_reward_gradient,
    pg_sampled_gradient,
    sl_cross_entropy_gradient,
)
from .losses import DirectLossKind, SurrogateKind, direct_loss, surrogate, surrogate_domain
from .numerics import (
    CategoricalDistribution,
    grad_mse,
    grad_weighted_logprob,
    init_params,
    log_prob,
    mlp_forward,
    softmax,
)
from .oracle import (
    enumerate_trajectories,
    exact_objective,
    exact_policy_gradient,
    exact_state_values,
    finite_difference,
    relative_error,
)
from .pgcore import per_trajectory_gradients

FIXTURE = "builtin:fixture_2s2a"
FIXTURE_LAYOUT = (2, 8, 2)
FIXTURE_GAMMA = 0.9


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    relation: str = "<"

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.measured:.6g} {self.relation} {self.tolerance:.6g}"


def _below(name, measured, tol):
    return Check(name, float(measured), tol, bool(measured < tol), "<")


def _above(name, measured, tol):
    return Check(name, float(measured), tol, bool(measured > tol), ">")


def _random_params(layout, rng):
    """Glorot weights plus small random biases, so bias gradients are exercised."""
    p = init_params(layout, int(rng.integers(2**31)))
    v = p.values.copy()
    off = 0
    for fi, fo in zip(layout[:-1], layout[1:]):
        off += fi * fo
        v[off : off + fo] = 0.1 * rng.standard_normal(fo)
        off += fo
    return p.with_values(v)


# --------------------------------------------------------------------------


def suite_gradcheck(seed=0, instances=100):
    """Analytic policy and critic gradients against central differences."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_pol = worst_crit = 0.0
    for _ in range(instances):
        x = rng.standard_normal(5)
        a = int(rng.integers(3))
        w = float(rng.standard_normal())
        pol = _random_params((5, 16, 16, 3), rng)
        analytic = grad_weighted_logprob(pol, x, a, w)
        fd = finite_difference(lambda p: w * log_prob(softmax(mlp_forward(p, x)), a), pol)
        worst_pol = max(worst_pol, relative_error(analytic, fd, floor=1e-6))
        crit = _random_params((5, 16, 16, 1), rng)
        target = float(rng.standard_normal())
        analytic = grad_mse(crit, x, target)
        fd = finite_difference(lambda p: 0.5 * (mlp_forward(p, x)[0] - target) ** 2, crit)
        worst_crit = max(worst_crit, relative_error(analytic, fd, floor=1e-6))
    return [
        _below("policy gradient max relative error", worst_pol, 1e-5),
        _below("critic gradient max relative error", worst_crit, 1e-5),
        _below("runtime seconds", time.perf_counter() - start, 10.0),
    ]


def _fixture():
    mdp = load_mdp(FIXTURE)
    return mdp, init_params((mdp.num_states, *FIXTURE_LAYOUT[1:-1], mdp.num_actions), 3)


def suite_oracle(seed=0):
    """Exact gradient against finite differences of the exact objective."""
    start = time.perf_counter()
    mdp, params = _fixture()
    en = enumerate_trajectories(mdp, params, FIXTURE_GAMMA)
    exact = exact_policy_gradient(mdp, params, FIXTURE_GAMMA)
    fd = finite_difference(lambda p: exact_objective(mdp, p, FIXTURE_GAMMA), params)
    return [
        _below("enumeration probability mass |sum - 1|", abs(en.total_probability - 1.0), 1e-10),
        _below("exact vs finite-difference relative error", relative_error(exact, fd), 1e-6),
        _below("runtime seconds", time.perf_counter() - start, 5.0),
    ]


def _zscores(rows, target):
    se = rows.std(axis=0, ddof=1) / np.sqrt(len(rows))
    mask = se > 0.0
    z = np.abs(rows.mean(axis=0) - target)[mask] / se[mask]
    exact_hits = np.all(rows.mean(axis=0)[~mask] == target[~mask])
    return float(z.max()) if z.size else 0.0, bool(exact_hits)


def variance_reduction_z(rows_plain, rows_baseline):
    """z statistic for ``summed var(plain) > summed var(baseline)`` from paired samples."""
    dp = rows_plain - rows_plain.mean(axis=0)
    db = rows_baseline - rows_baseline.mean(axis=0)
    d = (dp**2).sum(axis=1) - (db**2).sum(axis=1)
    return float(d.mean() / (d.std(ddof=1) / np.sqrt(d.size))), float((dp**2).mean(0).sum()), float(
        (db**2).mean(0).sum()
    )


def suite_unbiasedness(seed=0, samples=100_000):
    """Monte-Carlo REINFORCE means against the oracle; baseline variance test."""
    checks = suite_oracle(seed)
    start = time.perf_counter()
    mdp, params = _fixture()
    rng = np.random.default_rng(seed)
    batch = sample_tabular(mdp, params, samples, rng)
    target = exact_policy_gradient(mdp, params, FIXTURE_GAMMA)
    plain = per_trajectory_gradients(batch, params, FIXTURE_GAMMA, "full_return")
    z, ok = _zscores(plain, target)
    checks.append(Check("REINFORCE max |z| vs oracle gradient", z, 4.0, z <= 4.0 and ok, "<="))
    const = per_trajectory_gradients(batch, params, FIXTURE_GAMMA, "full_return", baseline=1.0)
    z, ok = _zscores(const, target)
    checks.append(Check("constant-baseline max |z| vs oracle gradient", z, 4.0, z <= 4.0 and ok, "<="))
    V = exact_state_values(mdp, params, FIXTURE_GAMMA)
    T = mdp.horizon
    s_idx = batch.states.argmax(axis=1)
    t_idx = np.tile(np.arange(T), samples)
    # the full return minus the discounted value of the state reached at step t
    b = FIXTURE_GAMMA**t_idx * V[t_idx, s_idx]
    with_v = per_trajectory_gradients(batch, params, FIXTURE_GAMMA, "full_return", baseline=b)
    z_mean, ok = _zscores(with_v, target)
    checks.append(Check("value-baseline max |z| vs oracle gradient", z_mean, 4.0, z_mean <= 4.0 and ok, "<="))
    zv, var_plain, var_b = variance_reduction_z(plain, with_v)
    crit = NormalDist().inv_cdf(0.99)
    checks.append(_above(f"variance reduction z ({var_plain:.4g} -> {var_b:.4g})", zv, crit))
    checks.append(_below("sampling runtime seconds", time.perf_counter() - start, 60.0))
    return checks


def _random_classification(rng):
    d = int(rng.integers(2, 7))
    K = int(rng.integers(2, 6))
    h = int(rng.integers(4, 17))
    n = int(rng.integers(1, 17))
    params = _random_params((d, h, K), rng)
    data = LabeledDataset(rng.standard_normal((n, d)), rng.integers(K, size=n), K)
    return params, data


def _random_simplex(rng, k):
    p = rng.dirichlet(np.ones(k))
    return p / p.sum()


def suite_equivalence(seed=0, instances=1000, pairs=10_000, samples=100_000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        params, data = _random_classification(rng)
        pg = pg_full_expectation_gradient(params, BanditView(data))
        _, sl = sl_cross_entropy_gradient(params, data.features, data.labels)
        worst = max(worst, float(np.max(np.abs(pg + sl))))
    checks = [_below("PG full expectation + SL gradient max |diff|", worst, 1e-12)]

    params, data = _random_classification(rng)
    est = pg_sampled_gradient(params, BanditView(data), None, int(rng.integers(2**31)), samples)
    target = pg_expected_reward_gradient(params, BanditView(data))
    mask = est.stderr > 0.0
    z = float(np.max(np.abs(est.gradient - target)[mask] / est.stderr[mask])) if mask.any() else 0.0
    checks.append(Check("sampled PG max |z| vs its exact mean", z, 4.0, z <= 4.0, "<="))

    worst_kl = 0.0
    for _ in range(pairs):
        k = int(rng.integers(2, 8))
        p, q = _random_simplex(rng, k), _random_simplex(rng, k)
        H_pq, H_p, kl = kl_decomposition_check(p, q)
        worst_kl = max(worst_kl, abs(H_pq - (H_p + kl)))
    checks.append(_below("H(p,q) - H(p) - KL(p||q) max |diff|", worst_kl, 1e-12))

    worst_grad = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 8))
        p = CategoricalDistribution(_random_simplex(rng, k))
        z0 = rng.standard_normal(k)
        g_h = finite_difference(lambda z: cross_entropy(p, softmax(z)), z0)
        g_kl = finite_difference(lambda z: kl_divergence(p, softmax(z)), z0)
        worst_grad = max(worst_grad, float(np.max(np.abs(g_h - g_kl))))
    checks.append(_below("grad_q H(p,q) - grad_q KL(p||q) max |diff|", worst_grad, 1e-10))
    return checks


def _grid(kind, lo=-5.0, hi=5.0, n=1000):
    u = np.linspace(lo, hi, n)
    dom_lo = surrogate_domain(kind)
    return u[u > dom_lo]


def suite_losses(seed=0, pairs=10_000):
    rng = np.random.default_rng(seed)
    checks = []
    for kind in SurrogateKind:
        phi = np.vectorize(lambda u, kind=kind: surrogate(kind, u))
        v0 = surrogate(kind, 0.0)
        checks.append(Check(f"{kind.value}: phi(0) - 1", abs(v0 - 1.0), 0.0, v0 == 1.0, "=="))
        u = _grid(kind)
        vals = phi(u)
        drop = float(np.max(vals[:-1] - vals[1:]))
        checks.append(Check(f"{kind.value}: largest decrease on grid", max(drop, 0.0), 0.0, drop <= 0.0, "<="))
        pos = u[u >= 0.0]
        short = float(np.max(1.0 - phi(pos)))
        checks.append(Check(f"{kind.value}: max shortfall below 1 on u >= 0", max(short, 0.0), 0.0, short <= 0.0, "<="))
        dom_lo = max(surrogate_domain(kind), -5.0)
        u1 = rng.uniform(dom_lo, 5.0, pairs)
        u2 = rng.uniform(dom_lo, 5.0, pairs)
        inside = (u1 > surrogate_domain(kind)) & (u2 > surrogate_domain(kind))
        u1, u2 = u1[inside], u2[inside]
        lhs = phi(0.5 * (u1 + u2))
        rhs = 0.5 * (phi(u1) + phi(u2))
        excess = float(np.max(lhs - rhs - 1e-12 * np.maximum(1.0, np.abs(rhs))))
        checks.append(
            Check(f"{kind.value}: max midpoint-convexity excess", max(excess, 0.0), 0.0, excess <= 0.0, "<=")
        )
    eps = 1e-9
    below = direct_loss(DirectLossKind.HUBER, 1.0 - eps, 0.0)
    above = direct_loss(DirectLossKind.HUBER, 1.0 + eps, 0.0)
    checks.append(_below("huber: jump across the knee", abs(above - below), 1e-8))
    return checks


SUITES = {
    "gradcheck": suite_gradcheck,
    "unbiasedness": suite_unbiasedness,
    "equivalence": suite_equivalence,
    "losses": suite_losses,
}


def run_suite(name, seed=0):
    return SUITES[name](seed)


def format_report(name, checks):
    lines = [f"suite {name}"] + ["  " + c.line() for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"
