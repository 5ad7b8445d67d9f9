"""Surrogate evaluation: one-step loss, rollout, error statistics and profiles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from app.models.grid import BuildingMask, FieldSequence, Grid3, GridError, ScalarField
from app.models.report import ConditionalErrorBin, HeightProfileRow, PdfBin, RolloutErrorRow
from app.models.training import Checkpoint
from app.services.fno import check_nyquist, forward
from app.services.gradients import layerwise_relative_loss
from app.services.windows import InMemoryWindows, make_windows, normalize_array

logger = logging.getLogger(__name__)


class ResolutionError(ValueError):
    pass


@dataclass
class OneStepResult:
    mean_loss: float
    per_sample: list[float] = field(default_factory=list)
    predictions: list[np.ndarray] = field(default_factory=list)
    targets: list[np.ndarray] = field(default_factory=list)


def check_resolution(checkpoint: Checkpoint, grid: Grid3, allow_change: bool = False) -> None:
    """Refuse grids other than the training grid unless explicitly allowed."""

    check_nyquist(checkpoint.fno_config.modes, grid.shape)
    trained = checkpoint.grid
    if trained is None:
        return
    trained_shape = (trained["nx"], trained["ny"], trained["nz"])
    if trained_shape != grid.shape and not allow_change:
        raise ResolutionError(
            f"checkpoint trained on {trained_shape[0]}x{trained_shape[1]}x{trained_shape[2]}, "
            f"data is {grid.describe()}; pass allow_resolution_change to evaluate anyway"
        )


def prepare_inputs(checkpoint: Checkpoint, history: np.ndarray) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64)
    if checkpoint.normalize_inputs and checkpoint.norm is not None:
        return normalize_array(history, checkpoint.norm)
    return history


def predict(
    checkpoint: Checkpoint, history: np.ndarray, mask: BuildingMask | None = None
) -> np.ndarray:
    """Next field (m/s) from ``in_channels`` raw fields; solids zeroed when a mask is given."""

    out = forward(prepare_inputs(checkpoint, history), checkpoint.params)[0]
    if mask is not None:
        out = np.where(mask.solid, 0.0, out)
    return out


def one_step_eval(
    checkpoint: Checkpoint, dataset: Iterable[tuple[np.ndarray, np.ndarray]], keep: int = 0
) -> OneStepResult:
    """Mean layer-wise relative loss over windows whose inputs are already model-ready."""

    result = OneStepResult(mean_loss=float("nan"))
    for inputs, target in dataset:
        pred = forward(inputs, checkpoint.params)[0]
        result.per_sample.append(layerwise_relative_loss(pred, target))
        if len(result.predictions) < keep:
            result.predictions.append(pred)
            result.targets.append(np.asarray(target, dtype=np.float64))
    if not result.per_sample:
        raise ValueError("no windows to evaluate")
    result.mean_loss = float(np.mean(result.per_sample))
    return result


def evaluate_scenario(
    checkpoint: Checkpoint,
    sequence: FieldSequence,
    keep: int = 1,
    allow_resolution_change: bool = False,
) -> OneStepResult:
    """One-step loss over every stride-1 window of a raw scenario sequence."""

    check_resolution(checkpoint, sequence.grid, allow_resolution_change)
    window = checkpoint.fno_config.in_channels + 1
    windows = make_windows(len(sequence), window=window, stride=1)
    norm = checkpoint.norm if checkpoint.normalize_inputs else None
    data = InMemoryWindows.from_sequence(sequence.stack(), windows, norm)
    result = one_step_eval(checkpoint, data, keep=keep)
    logger.info(
        "Scenario evaluation over %d windows: mean loss %.5f", len(windows), result.mean_loss
    )
    return result


def rollout(
    checkpoint: Checkpoint,
    initial: FieldSequence,
    n_steps: int,
    mask: BuildingMask | None = None,
    truth: FieldSequence | None = None,
    teacher_forced: bool = False,
) -> FieldSequence:
    """Autoregressive forecast; each prediction is masked and appended to the input window.

    With ``teacher_forced`` the window is refilled from ``truth`` instead.
    """

    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    width = checkpoint.fno_config.in_channels
    if len(initial) < width:
        raise ValueError(f"rollout needs {width} initial fields, got {len(initial)}")
    if teacher_forced and (truth is None or len(truth) < n_steps):
        raise ValueError("teacher-forced rollout needs a truth sequence covering every step")
    grid = initial.grid
    history = [np.asarray(f.values, dtype=np.float64) for f in initial.fields[-width:]]
    predictions: list[ScalarField] = []
    for step in range(n_steps):
        pred = predict(checkpoint, np.stack(history[-width:]), mask)
        predictions.append(ScalarField(grid, pred))
        if teacher_forced:
            history.append(np.asarray(truth[step].values, dtype=np.float64))
        else:
            history.append(pred)
    return FieldSequence(dt=initial.dt, fields=tuple(predictions))


def accumulated_error(pred: FieldSequence, truth: FieldSequence) -> list[RolloutErrorRow]:
    """Per step mean and (per-cell) standard deviation of ``|pred - truth|`` over all cells."""

    if len(pred) != len(truth):
        raise ValueError(f"prediction has {len(pred)} steps, truth has {len(truth)}")
    if len(pred) and pred.grid != truth.grid:
        raise GridError("prediction and truth grids differ")
    rows = []
    for step, (p, t) in enumerate(zip(pred.fields, truth.fields), start=1):
        err = np.abs(np.asarray(p.values, dtype=np.float64) - np.asarray(t.values, dtype=np.float64))
        rows.append(
            RolloutErrorRow(
                step=step,
                mean_abs_error=float(err.mean()),
                std_abs_error_per_cell=float(err.std()),
            )
        )
    return rows


def velocity_pdf(values: np.ndarray | Sequence[np.ndarray], bin_width: float) -> list[PdfBin]:
    """Density histogram of all samples (solid zeros included); integrates to 1."""

    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    if isinstance(values, (list, tuple)):
        data = np.concatenate([np.ravel(np.asarray(v, dtype=np.float64)) for v in values])
    else:
        data = np.ravel(np.asarray(values, dtype=np.float64))
    low = min(0.0, math.floor(data.min() / bin_width) * bin_width)
    count = max(1, math.ceil((data.max() - low) / bin_width))
    edges = low + np.arange(count + 1) * bin_width
    if edges[-1] < data.max():
        edges = np.append(edges, edges[-1] + bin_width)
    density, edges = np.histogram(data, bins=edges, density=True)
    return [
        PdfBin(lower=float(lo), upper=float(hi), density=float(d), mass=float(d * (hi - lo)))
        for lo, hi, d in zip(edges[:-1], edges[1:], density)
    ]


def conditional_error(
    pred: np.ndarray, truth: np.ndarray, bin_width: float = 0.25
) -> list[ConditionalErrorBin]:
    """Mean ``|pred - truth|`` per truth-speed bin over ``[0, max truth]``; empty bins stay empty."""

    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    truth = np.ravel(np.asarray(truth, dtype=np.float64))
    err = np.abs(np.ravel(np.asarray(pred, dtype=np.float64)) - truth)
    if err.shape != truth.shape:
        raise ValueError("prediction and truth sizes differ")
    count = max(1, math.ceil(max(truth.max(), 0.0) / bin_width))
    index = np.clip(np.floor(np.maximum(truth, 0.0) / bin_width).astype(np.int64), 0, count - 1)
    sums = np.bincount(index, weights=err, minlength=count)
    counts = np.bincount(index, minlength=count)
    rows = []
    for b in range(count):
        mean = float(sums[b] / counts[b]) if counts[b] else None
        rows.append(
            ConditionalErrorBin(
                lower=b * bin_width, upper=(b + 1) * bin_width, count=int(counts[b]), mean_abs_error=mean
            )
        )
    return rows


def height_profile(values: np.ndarray, grid: Grid3 | None = None) -> list[HeightProfileRow]:
    """Mean and population std over every (x, y) of each z-layer."""

    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=(0, 1))
    std = values.std(axis=(0, 1))
    if grid is not None:
        heights = grid.cell_centers(2) - grid.origin[2]
    else:
        heights = np.arange(values.shape[2], dtype=float)
    return [
        HeightProfileRow(k=k, z_m=float(heights[k]), mean=float(mean[k]), std=float(std[k]))
        for k in range(values.shape[2])
    ]


def horizontal_slice(values: np.ndarray, grid: Grid3, height_m: float) -> tuple[int, np.ndarray]:
    """The z-layer whose center is closest to ``height_m`` above the ground."""

    centers = grid.cell_centers(2) - grid.origin[2]
    k = int(np.argmin(np.abs(centers - height_m)))
    return k, np.asarray(values)[:, :, k]


def vertical_slice(values: np.ndarray, grid: Grid3, y_m: float) -> tuple[int, np.ndarray]:
    """The x-z plane whose y center is closest to ``y_m``."""

    centers = grid.cell_centers(1)
    j = int(np.argmin(np.abs(centers - y_m)))
    return j, np.asarray(values)[:, j, :]


__all__ = [
    "OneStepResult",
    "ResolutionError",
    "accumulated_error",
    "check_resolution",
    "conditional_error",
    "evaluate_scenario",
    "height_profile",
    "horizontal_slice",
    "one_step_eval",
    "predict",
    "prepare_inputs",
    "rollout",
    "velocity_pdf",
    "vertical_slice",
]
