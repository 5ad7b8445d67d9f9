"""Training loop: seeded shuffling, Adam updates, loss curves and checkpoints."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from app.core.metrics import TRAIN_EPOCH_SECONDS, TRAIN_LOSS
from app.models.dataset import DatasetManifest, NormStats, load_manifest
from app.models.fno import FnoConfig, FnoParameters
from app.models.training import AdamState, Checkpoint, LossRecord, TrainConfig
from app.services.checkpoint import save_checkpoint
from app.services.fno import forward, init_parameters, log_parameter_count
from app.services.gradients import (
    GradientError,
    gradient_check,
    layerwise_relative_loss,
    loss_and_gradients,
)
from app.services.optimizer import adam_step
from app.services.windows import WindowDataset

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("epoch", "train_loss", "test_loss", "wall_seconds")


class TrainingDivergedError(ArithmeticError):
    pass


@dataclass
class TrainingResult:
    best: Checkpoint
    final: Checkpoint
    history: list[LossRecord]
    paths: dict[str, Path] = field(default_factory=dict)


def write_loss_curve(history: Sequence[LossRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
        for record in history:
            writer.writerow(record.as_row())
    return path


def mean_loss(dataset, params: FnoParameters) -> tuple[float, list[float]]:
    losses = [layerwise_relative_loss(forward(x, params), y) for x, y in dataset]
    return (float(np.mean(losses)) if losses else float("nan")), losses


class _Concat:
    """Several window datasets indexed as one."""

    def __init__(self, parts: Sequence) -> None:
        self.parts = list(parts)
        self.offsets = np.cumsum([0] + [len(p) for p in self.parts])

    def __len__(self) -> int:
        return int(self.offsets[-1])

    def __getitem__(self, index: int):
        part = int(np.searchsorted(self.offsets, index, side="right") - 1)
        return self.parts[part][index - int(self.offsets[part])]

    def __iter__(self):
        for index in range(len(self)):
            yield self[index]


def train(
    train_sets: Sequence,
    test_sets: Sequence,
    fno_config: FnoConfig,
    train_config: TrainConfig,
    out_dir: str | Path | None = None,
    *,
    params: FnoParameters | None = None,
    norm: NormStats | None = None,
    normalize_inputs: bool = True,
    manifest_hash: str | None = None,
    grid: dict | None = None,
) -> TrainingResult:
    """Fit the surrogate; epoch loss is the mean per-sample loss seen before each update."""

    train_data = _Concat(train_sets)
    test_data = _Concat(test_sets)
    if len(train_data) == 0:
        raise ValueError("no training windows")
    params = params or init_parameters(fno_config, seed=train_config.seed)
    adam = AdamState.zeros_like(params)
    rng = np.random.default_rng(train_config.seed)
    log_parameter_count(fno_config)

    if train_config.gradient_check:
        inputs, target = train_data[0]
        report = gradient_check(inputs, target, params, max_per_group=3, seed=train_config.seed)
        logger.info("Gradient check on %d entries: worst relative error %.2e", report.checked, report.worst)
        if not report.passed():
            raise GradientError(f"gradient check failed: {report.max_relative_error}")

    def snapshot(epoch: int, history: list[LossRecord]) -> Checkpoint:
        return Checkpoint(
            fno_config=fno_config,
            params=params.copy(),
            adam=AdamState(
                m={k: v.copy() for k, v in adam.m.items()},
                v={k: v.copy() for k, v in adam.v.items()},
                step=adam.step,
            ),
            train_config=train_config,
            epoch=epoch,
            history=list(history),
            manifest_hash=manifest_hash,
            seed=train_config.seed,
            norm=norm,
            normalize_inputs=normalize_inputs,
            grid=grid,
        )

    history: list[LossRecord] = []
    best: Checkpoint | None = None
    best_score = math.inf
    started = time.perf_counter()
    logger.info(
        "Training %d epochs on %d windows (%d held out), lr=%g, batch=%d",
        train_config.epochs,
        len(train_data),
        len(test_data),
        train_config.learning_rate,
        train_config.batch_size,
    )
    for epoch in range(1, train_config.epochs + 1):
        epoch_started = time.perf_counter()
        order = rng.permutation(len(train_data))
        losses: list[float] = []
        for first in range(0, len(order), train_config.batch_size):
            batch = order[first : first + train_config.batch_size]
            total: dict[str, np.ndarray] | None = None
            for index in batch:
                inputs, target = train_data[int(index)]
                loss, grads = loss_and_gradients(inputs, target, params)
                if not math.isfinite(loss) or loss > train_config.divergence_threshold:
                    raise TrainingDivergedError(
                        f"loss {loss:.4g} at epoch {epoch}, window {int(index)} "
                        f"(threshold {train_config.divergence_threshold:g})"
                    )
                losses.append(loss)
                if total is None:
                    total = grads
                else:
                    for name in total:
                        total[name] += grads[name]
            averaged = {name: grad / len(batch) for name, grad in total.items()}
            params, adam = adam_step(
                params,
                averaged,
                adam,
                lr=train_config.learning_rate,
                beta1=train_config.beta1,
                beta2=train_config.beta2,
                eps=train_config.eps,
            )

        train_loss = float(np.mean(losses))
        test_loss, _ = mean_loss(test_data, params)
        seconds = time.perf_counter() - epoch_started
        record = LossRecord(epoch, train_loss, test_loss, time.perf_counter() - started)
        history.append(record)
        TRAIN_EPOCH_SECONDS.observe(seconds)
        TRAIN_LOSS.labels(split="train").set(train_loss)
        if math.isfinite(test_loss):
            TRAIN_LOSS.labels(split="test").set(test_loss)
        if epoch % train_config.log_every == 0 or epoch == train_config.epochs:
            logger.info(
                "Epoch %d/%d train=%.5f test=%.5f (%.1f s)",
                epoch,
                train_config.epochs,
                train_loss,
                test_loss,
                seconds,
            )

        score = test_loss if math.isfinite(test_loss) else train_loss
        if score < best_score:
            best_score = score
            best = snapshot(epoch, history)

    final = snapshot(train_config.epochs, history)
    result = TrainingResult(best=best or final, final=final, history=history)
    if out_dir is not None:
        out = Path(out_dir)
        result.paths = {
            "best": save_checkpoint(result.best, out / "best.ufck"),
            "final": save_checkpoint(final, out / "final.ufck"),
            "losses": write_loss_curve(history, out / "losses.csv"),
        }
    return result


def train_from_manifests(
    manifest_paths: Sequence[str | Path],
    fno_config: FnoConfig,
    train_config: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainingResult:
    """Joint training over one or more scenario manifests.

    Every scenario is normalized with the first manifest's statistics so the
    checkpoint carries a single input scaling.
    """

    if not manifest_paths:
        raise ValueError("at least one manifest is required")
    manifests: list[tuple[DatasetManifest, Path]] = []
    for path in manifest_paths:
        path = Path(path)
        manifests.append((load_manifest(path), path.parent))
    lead = manifests[0][0]
    for manifest, _ in manifests[1:]:
        if manifest.grid != lead.grid:
            raise ValueError("joint training needs every manifest on the same grid")
        if manifest.normalize_inputs != lead.normalize_inputs:
            raise ValueError("joint training needs one normalization policy")
    train_sets = [WindowDataset(m, root, "train", norm=lead.norm) for m, root in manifests]
    test_sets = [WindowDataset(m, root, "test", norm=lead.norm) for m, root in manifests]
    digest = "+".join(m.digest()[:16] for m, _ in manifests) if len(manifests) > 1 else lead.digest()
    return train(
        train_sets,
        test_sets,
        fno_config,
        train_config,
        out_dir,
        norm=lead.norm,
        normalize_inputs=lead.normalize_inputs,
        manifest_hash=digest,
        grid=lead.grid,
    )


__all__ = [
    "LOSS_COLUMNS",
    "TrainingDivergedError",
    "TrainingResult",
    "mean_loss",
    "train",
    "train_from_manifests",
    "write_loss_curve",
]
