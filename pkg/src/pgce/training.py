"""Training loop, greedy evaluation and the learning-rate schedule comparison.

One iteration: sample ``batch_size`` episodes with the current policy, build
the weighted log-likelihood for the configured estimator, and take one ascent
step of size ``lr_at(schedule, iteration)``. The A2C critic takes a descent
step of the same size on its squared error.

Trading episodes whose strategy returns have zero spread (no exposure, so the
Sharpe ratio is undefined) are dropped from the batch and counted, never
rewarded.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .envs import (
    Action,
    TabularMDP,
    TradingConfig,
    TradingEnv,
    episode_sharpe,
    load_mdp,
    load_prices,
    mark_to_market,
    sample_batch,
    synthetic_prices,
)
from .errors import ConfigError, DegenerateEpisodeError, ShapeError
from .numerics import entropy_rows, init_params, policy_probs, sgd_step
from .oracle import exact_state_values
from .pgcore import (
    Estimator,
    a2c_objective,
    entropy_bonus,
    entropy_regularized,
    lr_at,
    step_weights,
)
from .storage import atomic_write_json, atomic_write_text, params_to_text

log = logging.getLogger(__name__)

METRICS_HEADER = ("iteration", "mean_return", "sharpe", "entropy", "lr", "seconds")
PLOT_HEADER = ("schedule_id", "seed", "iteration", "sharpe", "entropy", "lr")


@dataclass(frozen=True)
class MetricsRow:
    iteration: int
    mean_return: float
    sharpe: float
    entropy: float
    lr: float
    seconds: float

    def fields(self):
        return [str(self.iteration)] + [
            repr(float(v)) for v in (self.mean_return, self.sharpe, self.entropy, self.lr, self.seconds)
        ]


@dataclass
class TrainResult:
    config: RunConfig
    params: object
    critic: object
    metrics: list
    skipped: int
    env: object = field(repr=False, default=None)


# --------------------------------------------------------------------------
# setup


def build_env(config):
    if config.env == "tabular":
        return load_mdp(config.resolve(config.mdp))
    if config.prices == "synthetic":
        prices = synthetic_prices(
            config.synthetic_steps, config.synthetic_drift, config.synthetic_volatility, config.data_seed
        )
    else:
        prices = load_prices(config.resolve(config.prices))
    tc = TradingConfig(
        window=config.window,
        gamma=config.gamma,
        episode_length=config.episode_length,
        annualization_days=config.annualization_days,
        nothing_means_flat=config.nothing_means_flat,
    )
    return TradingEnv(prices, tc)


def policy_layout(config, env):
    return (env.state_dim, *config.hidden, env.num_actions)


def critic_layout(config, env):
    return (env.state_dim, *config.hidden, 1)


# --------------------------------------------------------------------------
# training


def train(config, env=None):
    """Run the configured number of iterations; fully determined by ``config``."""
    env = build_env(config) if env is None else env
    estimator = Estimator(config.estimator)
    schedule = config.make_schedule()
    params = init_params(policy_layout(config, env), config.seed)
    critic = init_params(critic_layout(config, env), config.seed + 1) if estimator is Estimator.A2C else None
    rng = np.random.default_rng([config.seed, 2])
    baseline = 0.0
    skipped_total = 0
    rows = []
    start = time.perf_counter()
    for it in range(config.iterations):
        lr = lr_at(schedule, it)
        sampled = sample_batch(env, params, config.batch_size, rng)
        skipped_total += sampled.skipped
        if sampled.skipped:
            log.info("iteration %d: skipped %d degenerate episodes", it + 1, sampled.skipped)
        probs = policy_probs(params, sampled.visited)
        ent = float(entropy_rows(probs).mean())
        batch = sampled.batch
        if batch is None:
            mean_return = math.nan
        else:
            returns = step_weights(batch, config.gamma, "full_return")[batch.offsets[:-1]]
            mean_return = float(returns.mean())
            params, critic, baseline = _update(
                config, estimator, batch, params, critic, baseline, mean_return, lr
            )
        log.debug("iteration %d: lr %r (schedule %s)", it + 1, lr, schedule.label())
        if (it + 1) % config.eval_every == 0 or it + 1 == config.iterations:
            sharpe = float(sampled.sharpes.mean()) if sampled.sharpes.size else math.nan
            seconds = time.perf_counter() - start if config.timing else math.nan
            rows.append(MetricsRow(it + 1, mean_return, sharpe, ent, lr, seconds))
    return TrainResult(config, params, critic, rows, skipped_total, env)


def _update(config, estimator, batch, params, critic, baseline, mean_return, lr):
    if estimator is Estimator.A2C:
        _, grad, cgrad = a2c_objective(batch, params, critic, config.gamma)
        if config.lam > 0.0:
            grad = grad + config.lam * entropy_bonus(batch, params)[1]
        return (
            sgd_step(params, grad, lr, "ascend"),
            sgd_step(critic, cgrad, lr, "descend"),
            baseline,
        )
    b = baseline if estimator is Estimator.REINFORCE_BASELINE else None
    _, grad = entropy_regularized(batch, params, config.gamma, config.lam, config.weight_mode, b)
    if estimator is Estimator.REINFORCE_BASELINE:
        # running mean of past batch returns: independent of this batch's actions
        baseline = config.baseline_decay * baseline + (1.0 - config.baseline_decay) * mean_return
    return sgd_step(params, grad, lr, "ascend"), critic, baseline


def metrics_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(r.fields())
    return buf.getvalue()


def write_train_outputs(result, out_dir):
    """metrics.csv, params.txt (and critic.txt), config.cfg, summary.json."""
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "metrics.csv"), metrics_csv(result.metrics))
    atomic_write_text(os.path.join(out_dir, "params.txt"), params_to_text(result.params))
    if result.critic is not None:
        atomic_write_text(os.path.join(out_dir, "critic.txt"), params_to_text(result.critic))
    atomic_write_text(os.path.join(out_dir, "config.cfg"), result.config.to_text())
    last = result.metrics[-1]
    atomic_write_json(
        os.path.join(out_dir, "summary.json"),
        {
            "iterations": result.config.iterations,
            "skipped_episodes": result.skipped,
            "final_mean_return": _json_float(last.mean_return),
            "final_sharpe": _json_float(last.sharpe),
            "final_entropy": _json_float(last.entropy),
        },
    )


def _json_float(x):
    return None if not math.isfinite(x) else float(x)


# --------------------------------------------------------------------------
# greedy evaluation


def greedy_actions(params, X):
    """Most probable action per row; ties go to the lowest index."""
    return np.argmax(policy_probs(params, X), axis=1)


def evaluate(params, env, gamma=1.0, initial_equity=1.0):
    """Deterministic (greedy) evaluation report as a plain dict."""
    if params.n_inputs != env.state_dim or params.n_outputs != env.num_actions:
        raise ShapeError(
            f"parameter layout {params.layout} does not fit an environment with "
            f"{env.state_dim} inputs and {env.num_actions} actions"
        )
    if isinstance(env, TabularMDP):
        choice = greedy_actions(params, np.eye(env.num_states))
        table = np.eye(env.num_actions)[choice]
        V = exact_state_values(env, table, gamma)
        return {
            "env": "tabular",
            "mean_return": float(env.initial @ V[0]),
            "greedy_actions": choice.tolist(),
        }
    c0 = env.first_index
    L = env.max_steps
    X = env.states([c0], L)[0]
    actions = greedy_actions(params, X)
    held, strat = env.evaluate_actions(actions, c0)
    # prices from the first decision day to one day past the last return earned
    prices = env.prices.closes[c0 + 1 : c0 + L + 2]
    equity = mark_to_market(np.append(held, 0.0), prices, initial_equity)
    hist = {a.name.lower(): int(np.sum(actions == a)) for a in Action}
    try:
        sharpe = episode_sharpe(strat, env.config.annualization_days)
        status = "ok"
    except DegenerateEpisodeError:
        sharpe = None
        status = "no exposure"
    return {
        "env": "trading",
        "status": status,
        "sharpe": sharpe,
        "steps": int(L),
        "start_date": env.prices.dates[c0 + 1],
        "end_date": env.prices.dates[c0 + L + 1],
        "final_equity": float(equity[-1]),
        "equity": equity.tolist(),
        "actions": hist,
    }


def always_long_sharpe(env):
    """Sharpe of buying on every decision day over the evaluation span."""
    _, strat = env.evaluate_actions(np.full(env.max_steps, int(Action.BUY)))
    return episode_sharpe(strat, env.config.annualization_days)


def format_eval(report):
    if report["env"] == "tabular":
        return f"mean return {report['mean_return']!r}\ngreedy actions {report['greedy_actions']}\n"
    lines = []
    if report["sharpe"] is None:
        lines.append("sharpe: no exposure (constant strategy returns)")
    else:
        lines.append(f"sharpe {report['sharpe']!r}")
    lines.append(f"span {report['start_date']} .. {report['end_date']} ({report['steps']} steps)")
    lines.append(f"final equity {report['final_equity']!r}")
    lines.append("actions " + " ".join(f"{k}={v}" for k, v in report["actions"].items()))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# schedule comparison


def compare_schedules(config, schedules, seeds, env=None):
    """One run per (schedule, seed). Returns ``(plot_rows, summary)``."""
    schedules = list(schedules)
    seeds = list(seeds)
    if len(schedules) < 2:
        raise ConfigError("compare-schedules needs at least two schedules")
    if len(seeds) < 3:
        raise ConfigError("compare-schedules needs at least three seeds")
    env = build_env(config) if env is None else env
    plot_rows = []
    summary = []
    for sid, sched in enumerate(schedules):
        finals = []
        for seed in seeds:
            cfg = config.replace(schedule=sched.kind, lr=sched.lr0, anneal=sched.k, seed=seed)
            result = train(cfg, env)
            for r in result.metrics:
                plot_rows.append((sid, seed, r.iteration, r.sharpe, r.entropy, r.lr))
            last = result.metrics[-1]
            finals.append(last.sharpe if config.env == "trading" else last.mean_return)
        f = np.array(finals)
        good = f[np.isfinite(f)]
        summary.append(
            {
                "schedule_id": sid,
                "schedule": sched.label(),
                "metric": "sharpe" if config.env == "trading" else "mean_return",
                "mean": _json_float(float(good.mean())) if good.size else None,
                "std": _json_float(float(good.std(ddof=1))) if good.size > 1 else None,
                "runs": len(seeds),
                "finite_runs": int(good.size),
            }
        )
    return plot_rows, summary


def plot_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for sid, seed, it, sharpe, ent, lr in rows:
        w.writerow([sid, seed, it, repr(float(sharpe)), repr(float(ent)), repr(float(lr))])
    return buf.getvalue()


def format_summary(summary):
    lines = []
    for s in summary:
        if s["mean"] is None:
            stat = "n/a"
        else:
            std = "n/a" if s["std"] is None else f"{s['std']:.6g}"
            stat = f"{s['mean']:.6g} +/- {std}"
        lines.append(f"schedule {s['schedule_id']} ({s['schedule']}): final {s['metric']} {stat}")
    return "\n".join(lines) + "\n"
