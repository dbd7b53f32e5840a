"""Run configuration: one dataclass tree, JSON in and out, strict validation.

Every field has a default except the n-gram corpus path, which is required
only when the n-gram task is selected.  Unknown keys in a config file are
rejected so that typos fail fast (exit code 2 from the CLI).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .nn import OptConfig
from .signals import GainKind, TrainingMode, check_mode
from .tasks import NGramSuiteSpec, RepeatCopySpec

REPEAT_COPY = "repeat_copy"
NGRAM = "ngram"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class BanditParams:
    eta: float = 1e-3
    beta: float = 0.0
    epsilon: float = 0.05
    variant: str = "exp3s"


@dataclass(frozen=True)
class ScalerParams:
    capacity: int = 1000
    q_lo_pct: float = 20.0
    q_hi_pct: float = 80.0


@dataclass(frozen=True)
class ViParams:
    sample_count: float | None = None   # default: n_tasks * 1e4
    prior: str = "scalar"               # or "per_layer"
    sigma_post_init: float = 1e-3
    prior_mu: float = 0.0
    prior_sigma: float = 0.1


@dataclass
class RunConfig:
    task: str = REPEAT_COPY
    gain: str = "pg"
    mode: str = "ml"
    seed: int = 0
    out_dir: str = "runs/out"
    total_steps: int = 10_000
    max_input_steps: int | None = None      # optional cap on cumulative tau
    stop_target_loss: float | None = None   # stop once target per-output loss dips below
    eval_every: int = 1000
    eval_batches: int = 20                  # evaluation batches per task
    batch_size: int = 16
    hidden_sizes: tuple = (64,)
    l2_alpha: float = 1e-4
    bandit: BanditParams = field(default_factory=BanditParams)
    scaler: ScalerParams = field(default_factory=ScalerParams)
    opt: OptConfig = field(default_factory=OptConfig)
    repeat_copy: RepeatCopySpec = field(default_factory=RepeatCopySpec)
    ngram: NGramSuiteSpec = field(default_factory=NGramSuiteSpec)
    vi: ViParams = field(default_factory=ViParams)

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.validate()

    def validate(self) -> None:
        if self.task not in (REPEAT_COPY, NGRAM):
            raise ConfigError(f"unknown task {self.task!r}")
        try:
            kind = GainKind(self.gain)
            mode = TrainingMode(self.mode)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        try:
            check_mode(kind, mode)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.eval_every < 1 or self.eval_batches < 1:
            raise ConfigError("eval_every and eval_batches must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("hidden_sizes must be non-empty positive")
        if self.task == NGRAM and not self.ngram.corpus_path:
            raise ConfigError("the n-gram task needs ngram.corpus_path")
        if self.max_input_steps is not None and self.max_input_steps < 1:
            raise ConfigError("max_input_steps must be >= 1 when set")

    @property
    def gain_kind(self) -> GainKind:
        return GainKind(self.gain)

    @property
    def training_mode(self) -> TrainingMode:
        return TrainingMode(self.mode)


_NESTED = {"bandit": BanditParams, "scaler": ScalerParams, "opt": OptConfig,
           "repeat_copy": RepeatCopySpec, "ngram": NGramSuiteSpec, "vi": ViParams}


def _build(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys at {path or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get(key) if cls is RunConfig else None
        if sub is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
            kwargs[key] = _build(sub, value, f"{path}{key}.")
        elif key == "hidden_sizes":
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value under {path or 'top level'}: {e}") from None


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return _build(RunConfig, data, "")


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")


def apply_overrides(cfg_dict: dict, overrides: list[str]) -> dict:
    """Apply `a.b.c=value` strings on top of a config dict (values parsed as JSON,
    falling back to plain strings)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg_dict
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {part!r} of {key!r}")
        node[parts[-1]] = value
    return cfg_dict
