"""Experiment configuration: one TOML or JSON file plus environment overrides.

Defaults match the benchmark operating point: 8 observed segments, a
20-action horizon, and 5 candidate sequences.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ConfigError

APPROACHES = (
    "bottom_up_local",
    "top_down_local",
    "llm_icl",
    "llm_cot",
    "llm_finetune_export",
    "distill",
)

ENV_OUTPUT_DIR = "ANTKIT_OUTPUT_DIR"
ENV_ENDPOINT = "ANTKIT_ENDPOINT"
ENV_CACHE = "ANTKIT_CACHE"


def _default_model() -> dict:
    return {"kind": "ngram", "order": 2, "alpha": 0.1}


def _default_llm() -> dict:
    return {
        "n_examples": 12,
        "temperature": 0.8,
        "goal_temperature": 0.0,
        "max_tokens": 1024,
        "model": "default",
        "endpoint": None,
        "cache_path": None,
        "inline_vocab": True,
        "mock": None,
    }


def _default_eval() -> dict:
    return {
        "split": "val",
        "strategy": {"kind": "greedy"},
        "noise_rate": 0.0,
        "freq_threshold": 10,
        "prompt_snapshots": 3,
    }


@dataclass
class ExperimentConfig:
    approach: str = "bottom_up_local"
    output_dir: str = "runs/run"
    seed: int = 0
    n_seg: int = 8
    z: int = 20
    k: int = 5
    taxonomy_path: str | None = None
    annotations_path: str | None = None
    synthetic: dict | None = None
    rendering: dict = field(default_factory=lambda: {"mode": "canonical"})
    model: dict = field(default_factory=_default_model)
    llm: dict = field(default_factory=_default_llm)
    distill: dict = field(default_factory=dict)
    eval: dict = field(default_factory=_default_eval)

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ConfigError(f"unknown approach {self.approach!r}")
        if min(self.n_seg, self.z, self.k) < 1:
            raise ConfigError("n_seg, z, and k must be >= 1")
        if self.synthetic is None and (
            self.taxonomy_path is None or self.annotations_path is None
        ):
            raise ConfigError("need either a synthetic section or dataset paths")
        for name, default in (("llm", _default_llm()), ("eval", _default_eval())):
            merged = dict(default)
            merged.update(getattr(self, name) or {})
            setattr(self, name, merged)
        # model params are kind-specific, so defaults apply only when unset
        if not self.model:
            self.model = _default_model()

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return ExperimentConfig(**data)


def _apply_env_overrides(config: ExperimentConfig) -> ExperimentConfig:
    if os.environ.get(ENV_OUTPUT_DIR):
        config.output_dir = os.environ[ENV_OUTPUT_DIR]
    if os.environ.get(ENV_ENDPOINT):
        config.llm["endpoint"] = os.environ[ENV_ENDPOINT]
    if os.environ.get(ENV_CACHE):
        config.llm["cache_path"] = os.environ[ENV_CACHE]
    return config


def load_config(path: str | Path, env_overrides: bool = True) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    elif path.suffix == ".json":
        data = json.loads(text)
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    config = ExperimentConfig.from_dict(data)
    if env_overrides:
        config = _apply_env_overrides(config)
    return config
