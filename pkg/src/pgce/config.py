"""Run configuration: a flat ``key = value`` file.

Unknown keys are errors. Any key can be overridden with an environment
variable named ``PGCE_<KEY>`` (upper case), e.g. ``PGCE_BATCH_SIZE=32``.
Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .pgcore import WEIGHT_MODES, Estimator, Schedule

ENV_PREFIX = "PGCE_"


@dataclass(frozen=True)
class RunConfig:
    estimator: str = "reinforce"
    weight_mode: str = "full_return"
    gamma: float = 0.99
    lam: float = 0.0
    schedule: str = "fixed"
    lr: float = 0.01
    anneal: float = 0.0
    iterations: int = 200
    batch_size: int = 16
    seed: int = 0
    hidden: tuple = (16, 16)
    env: str = "tabular"
    mdp: str = "builtin:bandit"
    prices: str = "synthetic"
    data_seed: int = 0
    synthetic_steps: int = 120
    synthetic_drift: float = 0.003
    synthetic_volatility: float = 0.01
    window: int = 5
    episode_length: int = 40
    annualization_days: int = 250
    nothing_means_flat: bool = False
    baseline_decay: float = 0.9
    eval_every: int = 1
    timing: bool = False
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            Estimator(self.estimator)
        except ValueError:
            raise ConfigError(f"estimator must be one of {[e.value for e in Estimator]}") from None
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if not self.lam >= 0.0:
            raise ConfigError("lambda must be nonnegative")
        self.make_schedule()
        for key in ("iterations", "batch_size", "eval_every", "synthetic_steps", "window", "annualization_days"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.episode_length < 2:
            raise ConfigError("episode_length must be >= 2")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.env not in ("tabular", "trading"):
            raise ConfigError("env must be 'tabular' or 'trading'")
        if self.synthetic_volatility < 0.0:
            raise ConfigError("synthetic_volatility must be nonnegative")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError("baseline_decay must lie in [0, 1)")

    def make_schedule(self):
        return Schedule(self.schedule, self.lr, self.anneal)

    def resolve(self, path):
        if path.startswith("builtin:") or path == "synthetic" or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = []
        for f in _FIELDS:
            lines.append(f"{_key(f.name)} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_FIELDS = [f for f in dataclasses.fields(RunConfig) if f.name != "base_dir"]


def _key(name):
    return "lambda" if name == "lam" else name


def _attr(key):
    return "lam" if key == "lambda" else key


_BY_KEY = {_key(f.name): f for f in _FIELDS}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse(key, text):
    default = _BY_KEY[key].default
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


def parse_config(text, base_dir=".", environ=None):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {}
    for key, raw in parser.items("run"):
        if key not in _BY_KEY:
            raise ConfigError(f"unknown config key {key!r}")
        values[_attr(key)] = _parse(key, raw)
    environ = os.environ if environ is None else environ
    for key in _BY_KEY:
        env_name = ENV_PREFIX + key.upper()
        if env_name in environ:
            values[_attr(key)] = _parse(key, environ[env_name])
    return RunConfig(base_dir=base_dir, **values)


def load_config(path=None, environ=None):
    if path is None:
        return parse_config("", environ=environ)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)), environ=environ)
