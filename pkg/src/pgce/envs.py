"""Environments: an enumerable tabular MDP and a daily trading game.

Trading timeline (one step per trading day). At decision step t the state holds
the ``n`` most recent daily returns ``r_{t-n+1} .. r_t``. An order placed at t
fills on day t+1, so the first return it can earn is ``r_{t+2}``. The next return
``r_{t+1}`` is earned by whatever position was already open. The policy sees the
return window only; the position is bookkeeping, so actions never change the
states the agent observes.
"""
from __future__ import annotations

import csv
import datetime as _dt
import enum
import io
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .errors import ConfigError, DataError, DegenerateEpisodeError, ParseError, ShapeError
from .numerics import policy_probs
from .pgcore import Trajectory, TrajectoryBatch

MAX_ENUMERATED = 10**6


# --------------------------------------------------------------------------
# tabular MDP


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite-horizon MDP. ``transition[s, a]`` is a distribution over next states."""

    transition: np.ndarray
    reward: np.ndarray
    initial: np.ndarray
    horizon: int

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        mu = np.array(self.initial, dtype=np.float64).ravel()
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2] or mu.size != P.shape[0]:
            raise ShapeError("transition must be (S, A, S), reward (S, A), initial (S,)")
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be >= 1")
        for name, rows in (("transition", P.reshape(-1, P.shape[2])), ("initial", mu[None, :])):
            if np.any(rows < 0.0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-12):
                raise DataError(f"{name} rows must be probability vectors summing to 1")
        if not np.all(np.isfinite(R)):
            raise DataError("rewards must be finite")
        for arr in (P, R, mu):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial", mu)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def num_actions(self):
        return self.transition.shape[1]

    @property
    def state_dim(self):
        return self.num_states

    def features(self, states):
        """One-hot encoding used as policy input."""
        return np.eye(self.num_states)[np.asarray(states)]

    def trajectory_count(self):
        return (self.num_states * self.num_actions) ** self.horizon

    @classmethod
    def bandit(cls, rewards):
        r = np.asarray(rewards, dtype=np.float64).ravel()
        return cls(np.ones((1, r.size, 1)), r[None, :], np.ones(1), 1)


def parse_mdp(text):
    """Parse the key-value MDP format::

        states = 2
        actions = 2
        horizon = 2
        initial = 0.6 0.4
        transition 0 1 = 0.3 0.7     # P(. | s=0, a=1)
        reward 0 1 = 0.0

    Every (s, a) pair needs a transition and a reward line.
    """
    scalars = {}
    rows = {}
    rewards = {}
    initial = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        words = key.split()
        try:
            if words[0] in ("states", "actions", "horizon") and len(words) == 1:
                scalars[words[0]] = int(value)
            elif words == ["initial"]:
                initial = [float(v) for v in value.split()]
            elif words[0] in ("transition", "reward") and len(words) == 3:
                sa = (int(words[1]), int(words[2]))
                target = rows if words[0] == "transition" else rewards
                if sa in target:
                    raise ParseError(f"duplicate {words[0]} entry for {sa}", lineno)
                target[sa] = [float(v) for v in value.split()] if words[0] == "transition" else float(value)
            else:
                raise ParseError(f"unknown key {key!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad number in {raw.strip()!r}", lineno) from exc
    for k in ("states", "actions", "horizon"):
        if k not in scalars:
            raise ParseError(f"missing '{k}'")
    if initial is None:
        raise ParseError("missing 'initial'")
    S, A = scalars["states"], scalars["actions"]
    if S < 1 or A < 1:
        raise ParseError("states and actions must be positive")
    if len(initial) != S:
        raise ParseError(f"initial needs {S} entries")
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for s in range(S):
        for a in range(A):
            if (s, a) not in rows or (s, a) not in rewards:
                raise ParseError(f"missing transition or reward for state {s}, action {a}")
            if len(rows[(s, a)]) != S:
                raise ParseError(f"transition {s} {a} needs {S} entries")
            P[s, a] = rows[(s, a)]
            R[s, a] = rewards[(s, a)]
    extra = (set(rows) | set(rewards)) - {(s, a) for s in range(S) for a in range(A)}
    if extra:
        raise ParseError(f"entries for unknown state/action pairs {sorted(extra)}")
    return TabularMDP(P, R, np.array(initial), scalars["horizon"])


def load_mdp(path):
    """Load an MDP file; ``builtin:NAME`` reads ``NAME.mdp`` shipped with the package."""
    path = str(path)
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        try:
            text = resources.files("pgce").joinpath(f"data/{name}.mdp").read_text()
        except FileNotFoundError as exc:
            raise ConfigError(f"no builtin MDP named {name!r}") from exc
        return parse_mdp(text)
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_mdp(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read MDP file {path}: {exc}") from exc


# --------------------------------------------------------------------------
# prices


@dataclass(frozen=True, eq=False)
class PriceSeries:
    dates: tuple
    closes: np.ndarray

    def __post_init__(self):
        closes = np.array(self.closes, dtype=np.float64).ravel()
        dates = tuple(self.dates)
        if len(dates) != closes.size:
            raise ShapeError("one date per close required")
        if np.any(~np.isfinite(closes)) or np.any(closes <= 0.0):
            raise DataError("closing prices must be positive")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise DataError("dates must be strictly increasing")
        closes.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "closes", closes)

    def __len__(self):
        return self.closes.size


def load_prices(source):
    """Read a ``date,close`` CSV (UTF-8; other columns ignored by name).

    ``source`` is a path, raw bytes, or a binary/text file object. Rows are
    sorted by date; duplicate dates are rejected.
    """
    if isinstance(source, (bytes, bytearray)):
        fh = io.StringIO(bytes(source).decode("utf-8"))
    elif isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "rb") as f:
                fh = io.StringIO(f.read().decode("utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read price file {source}: {exc}") from exc
    else:
        data = source.read()
        fh = io.StringIO(data.decode("utf-8") if isinstance(data, bytes) else data)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty price file", 1) from None
    names = [h.strip().lower().lstrip("﻿") for h in header]
    if "date" not in names or "close" not in names:
        raise ParseError("header must contain 'date' and 'close'", 1)
    i_date, i_close = names.index("date"), names.index("close")
    rows = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        line = reader.line_num
        try:
            d = _dt.date.fromisoformat(row[i_date].strip())
            c = float(row[i_close])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed row {row!r}", line) from exc
        if not math.isfinite(c) or c <= 0.0:
            raise DataError(f"line {line}: nonpositive close {c}")
        rows.append((d, c))
    if len(rows) < 2:
        raise DataError("price file needs at least two rows")
    rows.sort(key=lambda r: r[0])
    dates = [r[0] for r in rows]
    for a, b in zip(dates, dates[1:]):
        if a == b:
            raise DataError(f"duplicate date {a.isoformat()}")
    return PriceSeries(tuple(d.isoformat() for d in dates), np.array([r[1] for r in rows]))


def write_prices(prices, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "close"])
        for d, c in zip(prices.dates, prices.closes):
            w.writerow([d, repr(float(c))])


def synthetic_prices(n_steps=120, drift=0.003, volatility=0.01, seed=0, start=100.0):
    """Geometric random walk, ``drift`` and ``volatility`` per day."""
    rng = np.random.default_rng(seed)
    shocks = rng.standard_normal(n_steps - 1)
    log_steps = (drift - 0.5 * volatility**2) + volatility * shocks
    closes = start * np.exp(np.concatenate([[0.0], np.cumsum(log_steps)]))
    day0 = _dt.date(2020, 1, 1)
    dates = tuple((day0 + _dt.timedelta(days=i)).isoformat() for i in range(n_steps))
    return PriceSeries(dates, closes)


def compute_returns(prices):
    """Daily simple returns ``P_t / P_{t-1} - 1``."""
    p = prices.closes if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=np.float64)
    if p.size < 2:
        raise ShapeError("need at least two prices")
    return p[1:] / p[:-1] - 1.0


# --------------------------------------------------------------------------
# trading


class Action(enum.IntEnum):
    NOTHING = 0
    BUY = 1
    SELL = 2


@dataclass(frozen=True)
class TradingConfig:
    window: int = 5
    gamma: float = 1.0
    episode_length: int = 40
    annualization_days: int = 250
    nothing_means_flat: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.episode_length < 2:
            raise ConfigError("episode_length must be >= 2")
        if self.annualization_days < 1:
            raise ConfigError("annualization_days must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class TradingState:
    window: np.ndarray
    position: int = 0
    pending: int = 0


def trading_step(state, action, next_return, nothing_means_flat=False):
    """Advance one day; returns ``(new_state, strategy_return)``.

    The position open before this step earns ``next_return``; then the pending
    order fills and ``action`` sets the new pending order.
    """
    action = Action(action)
    strategy_return = state.position * float(next_return)
    if action is Action.BUY:
        pending = 1
    elif action is Action.SELL:
        pending = -1
    else:
        pending = 0 if nothing_means_flat else state.pending
    window = np.append(state.window[1:], float(next_return))
    return TradingState(window, state.pending, pending), strategy_return


def episode_sharpe(strategy_returns, annualization_days=250):
    """Annualised Sharpe ratio, zero benchmark rate, sample (N-1) std."""
    r = np.asarray(strategy_returns, dtype=np.float64).ravel()
    if r.size < 2:
        raise ShapeError("Sharpe ratio needs at least two returns")
    if np.ptp(r) == 0.0:
        raise DegenerateEpisodeError("constant strategy returns; Sharpe ratio undefined")
    return float(np.sqrt(annualization_days) * r.mean() / r.std(ddof=1))


def mark_to_market(positions, prices, initial_equity=1.0):
    """Equity curve with ``equity_t = equity_{t-1} * (1 + position_{t-1} * r_t)``."""
    pos = np.asarray(positions, dtype=np.float64).ravel()
    p = prices.closes if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=np.float64)
    if pos.size != p.size:
        raise ShapeError("one position per price required")
    if not initial_equity > 0.0:
        raise ConfigError("initial equity must be positive")
    equity = np.empty(p.size)
    equity[0] = initial_equity
    if p.size > 1:
        equity[1:] = initial_equity * np.cumprod(1.0 + pos[:-1] * compute_returns(p))
    return equity


class TradingEnv:
    """Trading game over a fixed price series.

    Return index ``c`` (``returns[c] = P[c+1]/P[c] - 1``) is the last return known
    at a decision. Valid decision indices run from ``window - 1`` to
    ``len(returns) - 2``.
    """

    num_actions = 3

    def __init__(self, prices, config=None):
        self.config = config or TradingConfig()
        n = self.config.window
        if len(prices) < n + 3:
            raise DataError(f"need at least {n + 3} prices for window {n}, got {len(prices)}")
        self.prices = prices
        self.returns = compute_returns(prices)
        self._windows = sliding_window_view(self.returns, n)
        if self.config.episode_length > self.max_steps:
            raise ConfigError(
                f"episode_length {self.config.episode_length} exceeds the {self.max_steps} "
                "decision days available"
            )

    @property
    def state_dim(self):
        return self.config.window

    @property
    def first_index(self):
        return self.config.window - 1

    @property
    def max_steps(self):
        return len(self.returns) - self.config.window

    def start_bounds(self, length=None):
        """Inclusive range of valid episode start indices."""
        L = self.config.episode_length if length is None else length
        return self.first_index, len(self.returns) - 1 - L

    def window_at(self, c):
        return self._windows[c - self.config.window + 1].copy()

    def states(self, starts, length):
        starts = np.asarray(starts, dtype=np.int64)
        idx = starts[:, None] + np.arange(length)[None, :] - self.config.window + 1
        return self._windows[idx]

    def next_returns(self, starts, length):
        starts = np.asarray(starts, dtype=np.int64)
        return self.returns[starts[:, None] + np.arange(length)[None, :] + 1]

    def strategy_returns(self, starts, actions):
        actions = np.atleast_2d(np.asarray(actions, dtype=np.int64))
        held = kernels.held_positions(actions, self.config.nothing_means_flat)
        return held, held * self.next_returns(starts, actions.shape[1])

    def evaluate_actions(self, actions, start=None):
        """Replay an action sequence from ``start`` (default: first decision day)."""
        start = self.first_index if start is None else start
        actions = np.asarray(actions, dtype=np.int64).ravel()
        held, strat = self.strategy_returns([start], actions[None, :])
        return held[0], strat[0]


# --------------------------------------------------------------------------
# rollouts


def _sample_categorical(probs, u):
    cdf = np.cumsum(probs, axis=-1)
    a = (cdf <= u[:, None]).sum(axis=-1)
    return np.minimum(a, probs.shape[-1] - 1)


def _check_arity(env, params):
    if params.n_outputs != env.num_actions or params.n_inputs != env.state_dim:
        raise ConfigError(
            f"policy layout {params.layout} does not fit an environment with "
            f"{env.state_dim} inputs and {env.num_actions} actions"
        )


def rollout(env, params, rng_seed, max_steps=None, start=None):
    """Sample one trajectory step by step.

    Trading trajectories carry reward 0 except on the last step, which holds
    the episode Sharpe ratio (``DegenerateEpisodeError`` if undefined).
    """
    _check_arity(env, params)
    rng = np.random.default_rng(rng_seed)
    if isinstance(env, TabularMDP):
        T = env.horizon if max_steps is None else min(env.horizon, max_steps)
        s = int(rng.choice(env.num_states, p=env.initial))
        states, actions, rewards, logps = [], [], [], []
        for _ in range(T):
            x = env.features(s)
            p = policy_probs(params, x)[0]
            a = int(_sample_categorical(p[None, :], rng.random(1))[0])
            states.append(x)
            actions.append(a)
            rewards.append(env.reward[s, a])
            logps.append(np.log(p[a]))
            s = int(rng.choice(env.num_states, p=env.transition[s, a]))
        return Trajectory(np.array(states), actions, rewards, logps)
    cfg = env.config
    L = cfg.episode_length if max_steps is None else min(cfg.episode_length, max_steps)
    lo, hi = env.start_bounds(L)
    c = int(rng.integers(lo, hi + 1)) if start is None else int(start)
    state = TradingState(env.window_at(c))
    states, actions, logps, strat = [], [], [], []
    for t in range(L):
        p = policy_probs(params, state.window)[0]
        a = int(_sample_categorical(p[None, :], rng.random(1))[0])
        states.append(state.window)
        actions.append(a)
        logps.append(np.log(p[a]))
        state, sr = trading_step(state, a, env.returns[c + t + 1], cfg.nothing_means_flat)
        strat.append(sr)
    rewards = np.zeros(L)
    rewards[-1] = episode_sharpe(strat, cfg.annualization_days)
    return Trajectory(np.array(states), actions, rewards, logps)


@dataclass
class SampledBatch:
    batch: TrajectoryBatch | None
    sharpes: np.ndarray = field(default_factory=lambda: np.empty(0))
    skipped: int = 0
    visited: np.ndarray | None = None  # every sampled state, skipped episodes included


def sample_tabular(mdp, params, n, rng):
    """``n`` independent trajectories sampled in lockstep."""
    _check_arity(mdp, params)
    T = mdp.horizon
    S = mdp.num_states
    states = np.empty((n, T), dtype=np.int64)
    actions = np.empty((n, T), dtype=np.int64)
    table = policy_probs(params, np.eye(S))
    s = _sample_categorical(np.broadcast_to(mdp.initial, (n, S)), rng.random(n))
    for t in range(T):
        states[:, t] = s
        a = _sample_categorical(table[s], rng.random(n))
        actions[:, t] = a
        if t < T - 1:
            s = _sample_categorical(mdp.transition[s, a], rng.random(n))
    flat_s = states.ravel()
    flat_a = actions.ravel()
    return TrajectoryBatch(
        states=mdp.features(flat_s),
        actions=flat_a,
        rewards=mdp.reward[flat_s, flat_a],
        offsets=np.arange(0, n * T + 1, T),
        log_probs=np.log(table[flat_s, flat_a]),
    )


def sample_trading(env, params, n, rng):
    """``n`` random episodes; degenerate (zero-spread) episodes are dropped and counted."""
    _check_arity(env, params)
    L = env.config.episode_length
    lo, hi = env.start_bounds()
    starts = rng.integers(lo, hi + 1, size=n)
    X = env.states(starts, L).reshape(n * L, env.state_dim)
    probs = policy_probs(params, X)
    actions = _sample_categorical(probs, rng.random(n * L)).reshape(n, L)
    _, strat = env.strategy_returns(starts, actions)
    ok = np.ptp(strat, axis=1) > 0.0
    skipped = int(n - ok.sum())
    if not ok.any():
        return SampledBatch(None, np.empty(0), skipped, X)
    s = strat[ok]
    sharpes = np.sqrt(env.config.annualization_days) * s.mean(axis=1) / s.std(axis=1, ddof=1)
    m = int(ok.sum())
    rewards = np.zeros((m, L))
    rewards[:, -1] = sharpes
    keep = np.repeat(ok, L)
    return SampledBatch(
        TrajectoryBatch(
            states=X[keep],
            actions=actions[ok].ravel(),
            rewards=rewards.ravel(),
            offsets=np.arange(0, m * L + 1, L),
            log_probs=np.log(probs[np.arange(n * L), actions.ravel()])[keep],
        ),
        sharpes,
        skipped,
        X,
    )


def sample_batch(env, params, n, rng):
    if isinstance(env, TabularMDP):
        batch = sample_tabular(env, params, n, rng)
        return SampledBatch(batch, visited=batch.states)
    return sample_trading(env, params, n, rng)
