"""Training-window bookkeeping records."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

MANIFEST_VERSION = 1


class SampleWindow(BaseModel):
    """Consecutive input steps plus the step right after them."""

    model_config = ConfigDict(frozen=True)

    input_indices: tuple[int, ...]
    target_index: int

    @model_validator(mode="after")
    def _check_consecutive(self) -> "SampleWindow":
        if not self.input_indices:
            raise ValueError("window needs at least one input index")
        start = self.input_indices[0]
        if start < 0:
            raise ValueError("window indices must be non-negative")
        expected = tuple(range(start, start + len(self.input_indices)))
        if self.input_indices != expected:
            raise ValueError(f"input indices {self.input_indices} are not consecutive")
        if self.target_index != self.input_indices[-1] + 1:
            raise ValueError("target index must follow the last input index")
        return self

    @property
    def start(self) -> int:
        return self.input_indices[0]

    @property
    def indices(self) -> tuple[int, ...]:
        return self.input_indices + (self.target_index,)


class NormStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    std: float = Field(gt=0)


class DatasetManifest(BaseModel):
    """Everything needed to rebuild the train/test windows of one scenario."""

    version: int = MANIFEST_VERSION
    fields: list[str]
    dt: float = Field(gt=0)
    windows: list[SampleWindow]
    train: list[int]
    test: list[int]
    seed: int
    norm: NormStats
    normalize_inputs: bool = True
    grid: dict[str, Any] | None = None
    mask: str | None = None
    window: int = 6
    stride: int = 2
    downsampled: bool = False
    scenario: str = "west"
    notes: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_partition(self) -> "DatasetManifest":
        train, test = set(self.train), set(self.test)
        if len(train) != len(self.train) or len(test) != len(self.test):
            raise ValueError("train/test partitions contain duplicates")
        if train & test:
            raise ValueError("train and test partitions overlap")
        if train | test != set(range(len(self.windows))):
            raise ValueError("train and test partitions must cover every window")
        for window in self.windows:
            if window.target_index >= len(self.fields):
                raise ValueError(
                    f"window target {window.target_index} exceeds field count {len(self.fields)}"
                )
        return self

    def train_windows(self) -> list[SampleWindow]:
        return [self.windows[i] for i in self.train]

    def test_windows(self) -> list[SampleWindow]:
        return [self.windows[i] for i in self.test]

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.to_json() + "\n", encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))


__all__ = [
    "DatasetManifest",
    "MANIFEST_VERSION",
    "NormStats",
    "SampleWindow",
    "load_manifest",
    "save_manifest",
]
