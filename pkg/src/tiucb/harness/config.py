"""Experiment configuration: YAML/JSON file -> validated, fully resolved models."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from tiucb.errors import ConfigurationError

POLICY_NAMES = ("ti-ucb", "kl-ucb", "sw-ucb", "sw-ts", "sw-kl-ucb", "rexp3", "ser4", "greedy")
PolicyName = Literal["ti-ucb", "kl-ucb", "sw-ucb", "sw-ts", "sw-kl-ucb", "rexp3", "ser4", "greedy"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CostConfig(_Model):
    per_arm: float | list[float] = Field(description="finetuning cost m per pull, one value or one per arm")
    stall_window: int = Field(100, ge=1)
    stall_threshold: float = 0.1


class RangesConfig(_Model):
    a: tuple[float, float] = (0.0, 1.0)
    c: tuple[float, float] = (0.0, 1.0)
    b: tuple[float, float] = (0.0, 10.0)
    rho: tuple[float, float] = (0.0, 1.0)


class EnvironmentConfig(_Model):
    kind: Literal["sampled", "arms", "trace"]
    # sampled
    families: list[Literal["exp", "poly"]] | None = None
    param_seed: int | None = None
    ranges: RangesConfig = RangesConfig()
    resample_per_replication: bool = False
    # arms
    arms: list[dict[str, Any]] | None = None
    # trace
    path: str | None = None
    known_means: bool = True
    # common
    noise_std: float = Field(0.1, ge=0.0)
    clip: tuple[float, float] | None = None
    cost: CostConfig | None = None
    reward_bounds: tuple[float, float] = (0.0, 1.0)

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "sampled" and not self.families:
            raise ValueError("kind 'sampled' needs a non-empty 'families' list")
        if self.kind == "arms" and not self.arms:
            raise ValueError("kind 'arms' needs a non-empty 'arms' list")
        if self.kind == "trace" and not self.path:
            raise ValueError("kind 'trace' needs 'path'")
        if self.reward_bounds[1] <= self.reward_bounds[0]:
            raise ValueError("reward_bounds must be (low, high) with high > low")
        return self


class PolicyConfig(_Model):
    name: PolicyName
    label: str | None = None
    params: dict[str, Any] = Field(default_factory=dict)

    @property
    def key(self) -> str:
        return self.label or self.name


class SweepConfig(_Model):
    omegas: list[int] = Field(default_factory=lambda: [2**k for k in range(14)], min_length=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(w < 1 for w in self.omegas):
            raise ValueError("every omega must be >= 1")
        return self


class ExperimentConfig(_Model):
    horizon: int = Field(ge=1)
    replications: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    output_dir: str = "results"
    workers: int = Field(1, ge=1)
    debug: bool = False
    environment: EnvironmentConfig
    policies: list[PolicyConfig] = Field(min_length=1)
    sweep: SweepConfig | None = None

    @model_validator(mode="after")
    def _unique_labels(self):
        keys = [p.key for p in self.policies]
        dupes = sorted({k for k in keys if keys.count(k) > 1})
        if dupes:
            raise ValueError(f"duplicate policy labels {dupes}; set 'label' to disambiguate")
        return self


class ConfigValidationError(ConfigurationError):
    """Invalid configuration; ``problems`` lists each offending field."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


def _format_pydantic(err: ValidationError) -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigValidationError(_format_pydantic(err)) from None


def read_config_data(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigValidationError([f"<file>: cannot parse {path}: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigValidationError(["<root>: configuration must be a mapping"])
    return data


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    data = read_config_data(path)
    env = data.get("environment")
    # trace paths are relative to the config file
    if isinstance(env, dict) and isinstance(env.get("path"), str) and not Path(env["path"]).is_absolute():
        env["path"] = str((path.parent / env["path"]).resolve())
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(data)
