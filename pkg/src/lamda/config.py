"""Run configuration files: strict JSON -> TrainRunConfig.

Unknown keys are rejected before any compute so a typo never silently
falls back to a default.
"""

import json

from .errors import ConfigError
from .model import ToyTransformerConfig
from .train import TrainRunConfig

_RUN_KEYS = {
    "method", "task", "rank", "budget_ranks", "budget_target", "rank_plan",
    "reverse_allocation", "alpha", "init_mode", "ti_fraction",
    "literal_schedule", "total_steps", "lr", "beta1", "beta2", "adam_eps",
    "batch_size", "seed", "adapted_kinds", "model",
}
_MODEL_KEYS = {"layers", "d_model", "heads", "ffn_dim", "vocab", "context",
               "causal", "ln_eps"}


def run_config_from_dict(doc):
    unknown = set(doc) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
    doc = dict(doc)
    model_doc = doc.pop("model", {})
    unknown = set(model_doc) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    for key in ("budget_ranks", "adapted_kinds"):
        if key in doc:
            doc[key] = tuple(doc[key])
    cfg = TrainRunConfig(model=ToyTransformerConfig(**model_doc), **doc)
    cfg.validate()
    return cfg


def load_run_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"run config {path} must be a JSON object")
    return run_config_from_dict(doc)
