"""Run configuration: one strict JSON document drives every command.

Unknown keys are rejected with the offending path; every defaulted field
is echoed back into the persisted effective configuration so a run
directory is sufficient to reproduce the run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .losses import DEFAULT_FEATURE_SEED, LossWeights
from .metrics import SsimParams
from .nets import DiscriminatorConfig, EncoderConfig, GeneratorConfig
from .train import OptimizerConfig, TrainConfig, TrainSetup

__all__ = ["ConfigError", "RunConfig", "load_config", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1"


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending field."""


_DATA_DEFAULTS = {
    "n_samples": 20,
    "shape": [32, 32, 32],
    "structure_count": 5,
    "folds": 10,
    "fold_index": 0,
}

_GENERATOR_KEYS = (
    "depth",
    "base_channels",
    "growth_rate",
    "layers_per_block",
    "variant",
    "latent_dim",
    "norm",
    "negative_slope",
    "extra_plain_stage",
)
_DISCRIMINATOR_KEYS = ("patch_size", "channel_schedule", "kernel", "condition_on_source")
_ENCODER_KEYS = ("block_schedule", "base_channels", "latent_dim")
_OPTIMIZER_KEYS = ("learning_rate", "beta1", "beta2")
_WEIGHT_KEYS = ("lambda1", "lambda2", "kl_weight", "latent_recovery_weight")
_TRAIN_KEYS = ("epochs", "batch_size", "optimizer", "loss_weights", "ablation", "checkpoint_every")
_METRIC_DEFAULTS = {
    "window": 11,
    "sigma": 1.5,
    "data_range": 2.0,
    "k1": 0.01,
    "k2": 0.03,
    "scales": 5,
    "scale_weights": None,
    "scale_mode": "normalized",
    "feature_seed": DEFAULT_FEATURE_SEED,
    "feature_channels": [8, 16],
    "eval_z": "sample",
}


def _section(doc: dict, name: str, allowed) -> dict:
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key {name}.{key}")
    return raw


def _build(section: str, cls, kwargs: dict):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


@dataclass
class RunConfig:
    """Validated, fully defaulted run configuration."""

    seed: int
    data: dict
    setup: TrainSetup
    metric_params: SsimParams
    scale_mode: str
    eval_z: str

    def effective(self) -> dict:
        """The complete configuration with every default echoed back."""
        setup = dataclasses.asdict(self.setup)
        gen = {k: setup["generator"][k] for k in _GENERATOR_KEYS}
        disc = {k: setup["discriminator"][k] for k in _DISCRIMINATOR_KEYS}
        disc["channel_schedule"] = list(disc["channel_schedule"])
        enc = {k: setup["encoder"][k] for k in _ENCODER_KEYS}
        enc["block_schedule"] = list(enc["block_schedule"])
        train = {k: setup["train"][k] for k in _TRAIN_KEYS}
        metrics = {
            "window": self.metric_params.window,
            "sigma": self.metric_params.sigma,
            "data_range": self.metric_params.data_range,
            "k1": self.metric_params.k1,
            "k2": self.metric_params.k2,
            "scales": self.metric_params.scales,
            "scale_weights": (
                list(self.metric_params.scale_weights)
                if self.metric_params.scale_weights is not None
                else None
            ),
            "scale_mode": self.scale_mode,
            "feature_seed": self.setup.feature_seed,
            "feature_channels": list(self.setup.feature_channels),
            "eval_z": self.eval_z,
        }
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "data": dict(self.data),
            "generator": gen,
            "discriminator": disc,
            "encoder": enc,
            "train": train,
            "metrics": metrics,
        }


def parse_config(doc: dict, seed_override: int | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    top_allowed = ("schema_version", "seed", "data", "generator", "discriminator", "encoder", "train", "metrics")
    for key in doc:
        if key not in top_allowed:
            raise ConfigError(f"unknown key {key}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION!r}, got {version!r}")

    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)

    data = dict(_DATA_DEFAULTS)
    data.update(_section(doc, "data", _DATA_DEFAULTS))
    if int(data["n_samples"]) < 1:
        raise ConfigError(f"data.n_samples must be >= 1, got {data['n_samples']}")
    if len(data["shape"]) != 3 or any(int(n) < 16 for n in data["shape"]):
        raise ConfigError(f"data.shape must be three extents >= 16, got {data['shape']}")
    if int(data["structure_count"]) < 3:
        raise ConfigError(f"data.structure_count must be >= 3, got {data['structure_count']}")

    gen_doc = _section(doc, "generator", _GENERATOR_KEYS)
    generator = _build("generator", GeneratorConfig, gen_doc)

    disc_doc = dict(_section(doc, "discriminator", _DISCRIMINATOR_KEYS))
    if "channel_schedule" in disc_doc:
        disc_doc["channel_schedule"] = tuple(disc_doc["channel_schedule"])
    discriminator = _build("discriminator", DiscriminatorConfig, disc_doc)

    enc_doc = dict(_section(doc, "encoder", _ENCODER_KEYS))
    if "block_schedule" in enc_doc:
        enc_doc["block_schedule"] = tuple(enc_doc["block_schedule"])
    if "latent_dim" not in enc_doc:
        enc_doc["latent_dim"] = generator.latent_dim
    encoder = _build("encoder", EncoderConfig, enc_doc)

    train_doc = dict(_section(doc, "train", _TRAIN_KEYS))
    opt_doc = train_doc.pop("optimizer", {})
    for key in opt_doc:
        if key not in _OPTIMIZER_KEYS:
            raise ConfigError(f"unknown key train.optimizer.{key}")
    weight_doc = train_doc.pop("loss_weights", {})
    for key in weight_doc:
        if key not in _WEIGHT_KEYS:
            raise ConfigError(f"unknown key train.loss_weights.{key}")
    optimizer = _build("train.optimizer", OptimizerConfig, opt_doc)
    weights = _build("train.loss_weights", LossWeights, weight_doc)
    train_cfg = _build(
        "train",
        TrainConfig,
        {**train_doc, "optimizer": optimizer, "loss_weights": weights, "seed": seed},
    )

    metrics = dict(_METRIC_DEFAULTS)
    metrics.update(_section(doc, "metrics", _METRIC_DEFAULTS))
    if metrics["scale_mode"] not in ("normalized", "parity"):
        raise ConfigError(f"metrics.scale_mode must be 'normalized' or 'parity', got {metrics['scale_mode']!r}")
    if metrics["eval_z"] not in ("sample", "zero"):
        raise ConfigError(f"metrics.eval_z must be 'sample' or 'zero', got {metrics['eval_z']!r}")
    metric_params = _build(
        "metrics",
        SsimParams,
        {
            "window": metrics["window"],
            "sigma": metrics["sigma"],
            "data_range": metrics["data_range"],
            "k1": metrics["k1"],
            "k2": metrics["k2"],
            "scales": metrics["scales"],
            "scale_weights": (
                tuple(metrics["scale_weights"]) if metrics["scale_weights"] is not None else None
            ),
        },
    )

    setup = _build(
        "config",
        TrainSetup,
        {
            "generator": generator,
            "discriminator": discriminator,
            "encoder": encoder,
            "train": train_cfg,
            "feature_seed": int(metrics["feature_seed"]),
            "feature_channels": tuple(metrics["feature_channels"]),
        },
    )

    return RunConfig(
        seed=seed,
        data={k: (list(map(int, data[k])) if k == "shape" else int(data[k])) for k in _DATA_DEFAULTS},
        setup=setup,
        metric_params=metric_params,
        scale_mode=metrics["scale_mode"],
        eval_z=metrics["eval_z"],
    )


def load_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    """Load and validate a config file; ``None`` loads pure defaults."""
    if path is None:
        return parse_config({}, seed_override)
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    return parse_config(doc, seed_override)
