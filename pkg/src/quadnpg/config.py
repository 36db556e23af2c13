"""Run configuration: nested frozen dataclasses with TOML round-tripping."""
from __future__ import annotations

import dataclasses
import sys
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from quadnpg.env import CostWeights, InitDistribution, ObsScales, QuadTask
from quadnpg.evaluate import EvalConfig
from quadnpg.natgrad import PolicyOptConfig
from quadnpg.rollout import NoiseSpec, RolloutConfig
from quadnpg.sim import PDGains, QuadParams
from quadnpg.value import ValueFitConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iterations: int = 100
    hidden: tuple = (64, 64)
    eval_rollouts: int = 10
    eval_horizon: int | None = None  # defaults to rollout.t_initial
    plateau_patience: int | None = None
    action_scale: float = 1.0
    sim: QuadParams = field(default_factory=QuadParams)
    pd: PDGains = field(default_factory=PDGains)
    cost: CostWeights = field(default_factory=CostWeights)
    obs: ObsScales = field(default_factory=ObsScales)
    init: InitDistribution = field(default_factory=InitDistribution)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    value: ValueFitConfig = field(default_factory=ValueFitConfig)
    policy: PolicyOptConfig = field(default_factory=PolicyOptConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def task(self):
        return QuadTask(self.sim, self.pd, self.cost, self.obs, self.init, self.action_scale)

    @property
    def policy_sizes(self):
        return (18, *self.hidden, 4)

    @property
    def value_sizes(self):
        return (18, *self.hidden, 1)

    @property
    def horizon(self):
        return self.eval_horizon if self.eval_horizon is not None else self.rollout.t_initial


def smoke_config(seed=0):
    """Desk-scale run: 8 initial / 16 branch trajectories, 100-step horizons, 20 iterations.

    The step size is large enough that the trust region sets every step; the
    default step size is far too small for the natural-gradient scale here.
    One noisy step per junction keeps the 16-pair estimate from being swamped
    by the variance of the second perturbation. Evaluation covers 5 s, the
    same span as a recovery rollout.
    """
    return TrainConfig(
        seed=seed,
        iterations=20,
        eval_horizon=500,
        rollout=RolloutConfig(n_initial=8, n_branch=16, t_initial=100, t_branch=100, noise=NoiseSpec(depth=1)),
        policy=PolicyOptConfig(step_size=1e4, trust_region=1.0),
    )


def full_config(seed=0):
    """512 initial / 1024 branch trajectories of 600 steps, noise depth 2."""
    return TrainConfig(seed=seed, iterations=50, policy=PolicyOptConfig(step_size=1e4, trust_region=1.0))


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_strip_none(v) for v in obj]
    return obj


def to_dict(cfg):
    return _strip_none(dataclasses.asdict(cfg))


def dumps(cfg):
    return tomli_w.dumps(to_dict(cfg))


def _coerce(tp, value, key):
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a table")
        return from_dict(tp, value, key + ".")
    if tp is float or tp == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if tp is int or tp == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if tp is str or tp == "str":
        return str(value)
    if isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def from_dict(cls, data, prefix=""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key '{prefix}{key}'")
        tp = hints[key]
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if typing.get_origin(tp) in (typing.Union, types.UnionType) and args:
            tp = args[0]
        kwargs[key] = _coerce(tp, value, prefix + key)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {err}") from err


def loads(text):
    return from_dict(TrainConfig, tomllib.loads(text))


def load(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings; values are parsed as TOML literals."""
    data = to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {} if p not in node else node[p]
                if not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config key '{key}'")
            node = node[p]
        node[parts[-1]] = value
    return from_dict(TrainConfig, data)
