"""Training configuration, optimizer state and checkpoint records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.dataset import NormStats
from app.models.fno import FnoConfig, FnoParameters


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=150, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=1, ge=1)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    gradient_check: bool = False
    divergence_threshold: float = Field(default=1e3, gt=0)
    log_every: int = Field(default=1, ge=1)


@dataclass
class AdamState:
    """First/second moments per parameter name, kept in float64."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: FnoParameters) -> "AdamState":
        return cls(
            m={name: np.zeros(array.shape) for name, array in params.items()},
            v={name: np.zeros(array.shape) for name, array in params.items()},
        )


@dataclass
class LossRecord:
    epoch: int
    train_loss: float
    test_loss: float
    wall_seconds: float

    def as_row(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "test_loss": self.test_loss,
            "wall_seconds": self.wall_seconds,
        }


@dataclass
class Checkpoint:
    fno_config: FnoConfig
    params: FnoParameters
    adam: AdamState
    train_config: TrainConfig = field(default_factory=TrainConfig)
    epoch: int = 0
    history: list[LossRecord] = field(default_factory=list)
    manifest_hash: str | None = None
    seed: int = 0
    norm: NormStats | None = None
    normalize_inputs: bool = True
    grid: dict[str, Any] | None = None
    optimizer: str = "adam"

    @property
    def best_test_loss(self) -> float:
        finite = [r.test_loss for r in self.history if np.isfinite(r.test_loss)]
        return min(finite) if finite else float("nan")


__all__ = ["AdamState", "Checkpoint", "LossRecord", "TrainConfig"]
