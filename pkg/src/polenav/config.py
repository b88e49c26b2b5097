"""Experiment configuration read from JSON.

Every object is checked field by field: unknown keys are rejected and
errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .planner import ALL_POLICIES, PlannerParams, PolicyKind
from .world import DomainShiftParams, WorldConfig, config_from_dict


@dataclass(frozen=True)
class DetectorParams:
    codebook_k: int = 16
    gain: float = 8.0

    def validate(self):
        if self.codebook_k < 1:
            raise ConfigError("must be >= 1", "codebook_k")
        if not self.gain > 0:
            raise ConfigError("must be > 0", "gain")
        return self


@dataclass(frozen=True)
class Pairing:
    train_shift: DomainShiftParams
    test_shift: DomainShiftParams


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    train_shift: DomainShiftParams = field(default_factory=DomainShiftParams)
    test_shift: DomainShiftParams = field(default_factory=DomainShiftParams)
    pairings: tuple = ()
    n_pairings: int = 3
    detector: DetectorParams = field(default_factory=DetectorParams)
    bin_width: int = 16
    planner: PlannerParams = field(default_factory=PlannerParams)
    K: int = 1000
    B: int = 8
    episodes_train: int = 1500
    episodes_eval: int = 200
    policies: tuple = tuple(k.value for k in ALL_POLICIES)
    margin: float = 0.1
    max_iterations: int = 100
    constant_trials: int = 20
    seed: int = 0
    output_dir: str = "runs/default"

    def validate(self):
        if self.episodes_eval < 1:
            raise ConfigError("must be >= 1", "episodes_eval")
        if self.episodes_train < 0:
            raise ConfigError("must be >= 0", "episodes_train")
        if self.K < 1:
            raise ConfigError("must be >= 1", "K")
        if not 1 <= self.B <= 16:
            raise ConfigError("must lie in [1, 16]", "B")
        if self.bin_width < 1:
            raise ConfigError("must be >= 1", "bin_width")
        if not self.margin >= 0:
            raise ConfigError("must be >= 0", "margin")
        if self.max_iterations < 0:
            raise ConfigError("must be >= 0", "max_iterations")
        if self.constant_trials < 1:
            raise ConfigError("must be >= 1", "constant_trials")
        if not self.pairings and self.n_pairings < 1:
            raise ConfigError("must be >= 1", "n_pairings")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        for p in self.policies:
            PolicyKind.parse(p)
        return self

    @property
    def policy_kinds(self):
        return [PolicyKind.parse(p) for p in self.policies]

    def pairing_list(self):
        """Explicit pairings, or ``n_pairings`` reseeded copies of the base pair."""
        if self.pairings:
            return list(self.pairings)
        return [Pairing(self.train_shift, self.test_shift) for _ in range(self.n_pairings)]


_SIMPLE = {"n_pairings", "bin_width", "K", "B", "episodes_train", "episodes_eval", "margin",
           "max_iterations", "constant_trials", "seed"}


def _number(value, path, integer):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", path)
    if integer:
        if float(value) != int(value):
            raise ConfigError("expected an integer", path)
        return int(value)
    return float(value)


def _planner_from_dict(d, path="planner"):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    known = {f.name: f for f in fields(PlannerParams)}
    kwargs = {}
    for key, value in d.items():
        if key not in known:
            raise ConfigError("unknown field", f"{path}.{key}")
        default = known[key].default
        if key == "actions":
            if not isinstance(value, list):
                raise ConfigError("expected a list of step sizes", f"{path}.actions")
            kwargs[key] = tuple(_number(v, f"{path}.actions", False) for v in value)
        elif key == "alpha_schedule":
            kwargs[key] = str(value)
        else:
            kwargs[key] = _number(value, f"{path}.{key}", isinstance(default, int))
    params = PlannerParams(**kwargs)
    try:
        params.validate()
    except ConfigError as exc:
        raise ConfigError(exc.reason, f"{path}.{exc.field}") from None
    return params


def config_from_json_dict(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError("unknown field", key)
        if key == "world":
            kwargs[key] = config_from_dict(WorldConfig, value, "world")
        elif key in ("train_shift", "test_shift"):
            kwargs[key] = config_from_dict(DomainShiftParams, value, key)
        elif key == "pairings":
            if not isinstance(value, list):
                raise ConfigError("expected a list", "pairings")
            pairs = []
            for i, item in enumerate(value):
                if not isinstance(item, dict) or set(item) != {"train_shift", "test_shift"}:
                    raise ConfigError("each pairing needs exactly train_shift and test_shift", f"pairings[{i}]")
                pairs.append(Pairing(
                    config_from_dict(DomainShiftParams, item["train_shift"], f"pairings[{i}].train_shift"),
                    config_from_dict(DomainShiftParams, item["test_shift"], f"pairings[{i}].test_shift"),
                ))
            kwargs[key] = tuple(pairs)
        elif key == "detector":
            kwargs[key] = config_from_dict(DetectorParams, value, "detector")
        elif key == "planner":
            kwargs[key] = _planner_from_dict(value)
        elif key == "policies":
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a non-empty list of policy names", "policies")
            kwargs[key] = tuple(PolicyKind.parse(v).value for v in value)
        elif key == "output_dir":
            if not isinstance(value, str):
                raise ConfigError("expected a string", key)
            kwargs[key] = value
        elif key in _SIMPLE:
            kwargs[key] = _number(value, key, key != "margin")
    return ExperimentConfig(**kwargs).validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return config_from_json_dict(data)


def with_overrides(cfg: ExperimentConfig, out=None, seed=None, policies=None) -> ExperimentConfig:
    changes = {}
    if out is not None:
        changes["output_dir"] = str(out)
    if seed is not None:
        changes["seed"] = int(seed)
    if policies is not None:
        changes["policies"] = tuple(PolicyKind.parse(p.strip()).value for p in policies.split(",") if p.strip())
    return replace(cfg, **changes).validate() if changes else cfg
