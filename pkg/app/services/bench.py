"""Solver-step versus surrogate-forward timing at one resolution."""

from __future__ import annotations

import logging
import time

import numpy as np
import scipy.fft

from app.core.config import settings
from app.models.grid import BuildingMask
from app.models.report import BenchSummary, TimingRecord
from app.models.solver import SceneSpec, SolverConfig
from app.models.training import Checkpoint
from app.services.evaluation import prepare_inputs
from app.services.fno import check_nyquist, forward, param_count
from app.services.scene import rasterize_scene
from app.services.solver import solver_for

logger = logging.getLogger(__name__)


def _timed(fn, repeats: int, warmup: int) -> list[float]:
    samples = []
    for index in range(warmup + repeats):
        started = time.perf_counter()
        fn()
        elapsed = time.perf_counter() - started
        if index >= warmup:
            samples.append(elapsed)
    return samples


def bench(
    checkpoint: Checkpoint,
    scene: SceneSpec | BuildingMask,
    cfg: SolverConfig,
    n_repeats: int = 10,
    warmup: int | None = None,
    spinup_steps: int = 5,
) -> tuple[list[TimingRecord], BenchSummary]:
    """Median wall time of one solver step and one forward pass on the same grid."""

    if n_repeats < 1:
        raise ValueError(f"n_repeats must be >= 1, got {n_repeats}")
    warmup = settings.bench_warmup if warmup is None else warmup
    mask = scene if isinstance(scene, BuildingMask) else rasterize_scene(scene)
    check_nyquist(checkpoint.fno_config.modes, mask.grid.shape)

    solver = solver_for(mask, cfg)
    state = solver.initial_state()
    history = []
    for _ in range(max(spinup_steps, checkpoint.fno_config.in_channels)):
        state, _ = solver.step(state)
        history.append(state.speed())
    inputs = prepare_inputs(checkpoint, np.stack(history[-checkpoint.fno_config.in_channels :]))

    def solver_step():
        solver.step(state)

    def surrogate_step():
        forward(inputs, checkpoint.params)

    solver_times = _timed(solver_step, n_repeats, warmup)
    surrogate_times = _timed(surrogate_step, n_repeats, warmup)
    records = [TimingRecord(engine="solver", repeat=i, seconds=s) for i, s in enumerate(solver_times)]
    records += [
        TimingRecord(engine="surrogate", repeat=i, seconds=s) for i, s in enumerate(surrogate_times)
    ]
    solver_median = float(np.median(solver_times))
    surrogate_median = float(np.median(surrogate_times))
    summary = BenchSummary(
        grid=mask.grid.describe(),
        n_repeats=n_repeats,
        warmup=warmup,
        solver_median_seconds=solver_median,
        surrogate_median_seconds=surrogate_median,
        speedup=solver_median / surrogate_median if surrogate_median > 0 else float("inf"),
        threads=scipy.fft.get_workers(),
        parameters=param_count(checkpoint.fno_config),
    )
    logger.info(
        "Bench on %s: solver %.4f s/step, surrogate %.4f s/step, speedup %.1fx",
        summary.grid,
        solver_median,
        surrogate_median,
        summary.speedup,
    )
    return records, summary


__all__ = ["bench"]
