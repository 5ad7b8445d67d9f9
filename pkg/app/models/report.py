"""Evaluation report models (losses, histograms, profiles, timings)."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class PdfBin(BaseModel):
    lower: float
    upper: float
    density: float
    mass: float


class ConditionalErrorBin(BaseModel):
    lower: float
    upper: float
    count: int
    mean_abs_error: Optional[float] = Field(
        default=None, description="None when no truth value falls in the bin"
    )

    @property
    def empty(self) -> bool:
        return self.count == 0


class HeightProfileRow(BaseModel):
    k: int
    z_m: float
    mean: float
    std: float


class RolloutErrorRow(BaseModel):
    step: int
    mean_abs_error: float
    std_abs_error_per_cell: float


class TimingRecord(BaseModel):
    engine: str
    repeat: int
    seconds: float


class BenchSummary(BaseModel):
    grid: str
    n_repeats: int
    warmup: int
    solver_median_seconds: float
    surrogate_median_seconds: float
    speedup: float
    threads: int
    parameters: int


class MetricsReport(BaseModel):
    scenario: str
    one_step_loss: Optional[float] = None
    per_sample_losses: list[float] = Field(default_factory=list)
    pdf_bin_width: Optional[float] = None
    pdf_truth: list[PdfBin] = Field(default_factory=list)
    pdf_prediction: list[PdfBin] = Field(default_factory=list)
    conditional_error: list[ConditionalErrorBin] = Field(default_factory=list)
    height_profile_truth: list[HeightProfileRow] = Field(default_factory=list)
    height_profile_prediction: list[HeightProfileRow] = Field(default_factory=list)
    rollout_error: list[RolloutErrorRow] = Field(default_factory=list)
    timings: list[TimingRecord] = Field(default_factory=list)
    bench: Optional[BenchSummary] = None
    notes: list[str] = Field(default_factory=list)

    @field_validator("per_sample_losses")
    @classmethod
    def _finite_losses(cls, value: list[float]) -> list[float]:
        if not all(math.isfinite(v) for v in value):
            raise ValueError("per-sample losses must be finite")
        return value

    @model_validator(mode="after")
    def _check_tables(self) -> "MetricsReport":
        if self.one_step_loss is not None and not math.isfinite(self.one_step_loss):
            raise ValueError("one-step loss must be finite")
        for name in ("pdf_truth", "pdf_prediction", "conditional_error"):
            rows = getattr(self, name)
            for left, right in zip(rows, rows[1:]):
                if not math.isclose(left.upper, right.lower, rel_tol=1e-9, abs_tol=1e-12):
                    raise ValueError(f"{name} bins leave a gap at {left.upper}")
        return self

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
        return path


__all__ = [
    "BenchSummary",
    "ConditionalErrorBin",
    "HeightProfileRow",
    "MetricsReport",
    "PdfBin",
    "RolloutErrorRow",
    "TimingRecord",
]
