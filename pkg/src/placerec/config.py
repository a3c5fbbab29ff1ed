"""One declarative run configuration shared by every CLI subcommand.

A YAML (or JSON) file holds the full pipeline setup; command-line flags
override individual fields. Every retrieval/refinement knob lives here so
a CLS-vs-GeM by coarse-vs-refined grid is reproducible as four config
files. The MLLM API key is only ever named by environment variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .descriptor import AggregationConfig
from .evaluation import EvalConfig
from .refiner.client import MllmClientConfig
from .refiner.mock import MOCK_KINDS
from .refiner.prompts import COMPONENT_FLAGS, SCENE_KINDS

REFINER_KINDS = ("live",) + tuple(f"mock:{kind}" for kind in MOCK_KINDS)


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    manifest: str = "manifest.jsonl"
    features: str = "features"
    out_dir: str = "out"
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    k: int = 10
    scene_kind: str = "outdoor"
    prompt_components: tuple[str, ...] = COMPONENT_FLAGS
    refiner: str = "mock:identity"
    transcript: str | None = None
    template_dir: str | None = None
    workers: int = 4
    mllm: MllmClientConfig = field(default_factory=MllmClientConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.k < max(self.eval.ks):
            raise ConfigError(f"k={self.k} must be >= max(ks)={max(self.eval.ks)}")
        if self.scene_kind not in SCENE_KINDS:
            raise ConfigError(f"unknown scene kind {self.scene_kind!r}")
        if self.refiner not in REFINER_KINDS:
            raise ConfigError(f"unknown refiner {self.refiner!r} (choose from {REFINER_KINDS})")
        if self.refiner == "mock:scripted" and not self.transcript:
            raise ConfigError("refiner mock:scripted requires a transcript path")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        unknown = set(self.prompt_components) - set(COMPONENT_FLAGS)
        if unknown:
            raise ConfigError(f"unknown prompt components {sorted(unknown)}")


def _build(data: dict) -> RunConfig:
    known_scalar = {
        "manifest",
        "features",
        "out_dir",
        "k",
        "scene_kind",
        "refiner",
        "transcript",
        "template_dir",
        "workers",
    }
    unknown = set(data) - known_scalar - {
        "aggregator",
        "p",
        "clamp_eps",
        "gem_form",
        "prompt_components",
        "model",
        "base_url",
        "api_key_env",
        "timeout",
        "max_retries",
        "backoff_base",
        "max_requests_per_minute",
        "max_in_flight",
        "image_max_side",
        "cache_dir",
        "temperature",
        "threshold_m",
        "ks",
        "subsample",
        "seed",
    }
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")

    agg_kwargs = {}
    for src, dst in (("aggregator", "method"), ("p", "p"), ("clamp_eps", "clamp_eps"), ("gem_form", "gem_form")):
        if src in data:
            agg_kwargs[dst] = data[src]
    mllm_kwargs = {}
    for src, dst in (
        ("model", "model_id"),
        ("base_url", "base_url"),
        ("api_key_env", "api_key_env"),
        ("timeout", "timeout"),
        ("max_retries", "max_retries"),
        ("backoff_base", "backoff_base"),
        ("max_requests_per_minute", "max_requests_per_minute"),
        ("max_in_flight", "max_in_flight"),
        ("image_max_side", "image_max_side"),
        ("cache_dir", "cache_dir"),
        ("temperature", "temperature"),
    ):
        if src in data:
            mllm_kwargs[dst] = data[src]
    eval_kwargs = {}
    for src, dst in (("threshold_m", "threshold_m"), ("ks", "ks"), ("subsample", "subsample_n"), ("seed", "seed")):
        if src in data:
            eval_kwargs[dst] = data[src]
    if "ks" in eval_kwargs:
        eval_kwargs["ks"] = tuple(int(k) for k in eval_kwargs["ks"])

    kwargs = {key: data[key] for key in known_scalar if key in data}
    if "prompt_components" in data:
        kwargs["prompt_components"] = tuple(data["prompt_components"])
    try:
        return RunConfig(
            aggregation=AggregationConfig(**agg_kwargs),
            mllm=MllmClientConfig(**mllm_kwargs),
            eval=EvalConfig(**eval_kwargs),
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read the config file (if any) and apply non-None flag overrides on top."""
    data: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping: {path}")
        data.update(loaded)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return _build(data)


def save_run_config(config: RunConfig, path: str | Path) -> None:
    data = {
        "manifest": config.manifest,
        "features": config.features,
        "out_dir": config.out_dir,
        "aggregator": config.aggregation.method,
        "p": config.aggregation.p,
        "clamp_eps": config.aggregation.clamp_eps,
        "gem_form": config.aggregation.gem_form,
        "k": config.k,
        "scene_kind": config.scene_kind,
        "prompt_components": list(config.prompt_components),
        "refiner": config.refiner,
        "workers": config.workers,
        "model": config.mllm.model_id,
        "base_url": config.mllm.base_url,
        "api_key_env": config.mllm.api_key_env,
        "cache_dir": config.mllm.cache_dir,
        "image_max_side": config.mllm.image_max_side,
        "threshold_m": config.eval.threshold_m,
        "ks": list(config.eval.ks),
        "subsample": config.eval.subsample_n,
        "seed": config.eval.seed,
    }
    if config.transcript:
        data["transcript"] = config.transcript
    if config.template_dir:
        data["template_dir"] = config.template_dir
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)


def with_overrides(config: RunConfig, **kwargs) -> RunConfig:
    return replace(config, **kwargs)
