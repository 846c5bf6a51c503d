"""Training configuration: schema, JSON round trip, and hashing.

Unknown keys in a config file are rejected outright; silent typo
acceptance has burned enough training runs elsewhere.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    # Desk-scale iteration counts; see paper_defaults() for the full run.
    stage1_iters: int = 2000
    stage2_iters: int = 5000
    stage3_iters: int = 500
    stage1_batch: int = 32
    batch_size: int = 8  # scenes per stage-2/3 step
    stage1_lr: float = 1e-4
    stage2_lr: float = 1e-4
    stage3_lr: float = 1e-5
    ttur_factor: float = 4.0
    margin: float = 0.5
    lambda_giou: float = 10.0
    lambda_box_l2: float = 10.0
    lambda_mask_mse: float = 10.0
    lambda_mask_adv: float = 0.25
    lambda_mask_fm: float = 10.0
    save_every: int = 500
    # Ablation switches.
    no_transformer: bool = False  # A1: SR = summed CCR
    no_gnn: bool = False  # A2: fc bridge instead of graph layers
    no_positional_encoding: bool = False  # A3
    no_pretraining: bool = False  # B1: stage 2 from scratch
    no_swap_negatives: bool = False  # B2
    no_contrastive: bool = False  # C1
    no_generation_losses: bool = False  # C2
    # Deviation knobs.
    freeze_olr: bool = False
    plain_attention: bool = False
    unclamped_contrastive: bool = False

    def validate(self):
        for name in ("stage1_iters", "stage2_iters", "stage3_iters",
                     "stage1_batch", "batch_size", "save_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("stage1_lr", "stage2_lr", "stage3_lr", "ttur_factor", "margin",
                     "lambda_giou", "lambda_box_l2", "lambda_mask_mse",
                     "lambda_mask_adv", "lambda_mask_fm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        return self


def paper_defaults():
    """The full-scale constants, for reference runs only."""
    return TrainConfig(stage1_iters=100_000, stage2_iters=120_000, stage3_iters=5_000)


def from_dict(data: dict) -> TrainConfig:
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        config = TrainConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return config.validate()


def load_config(path) -> TrainConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return from_dict(data)


def save_config(config: TrainConfig, path):
    with open(path, "w") as f:
        json.dump(dataclasses.asdict(config), f, indent=2, sort_keys=True)
        f.write("\n")


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
