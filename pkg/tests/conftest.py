from __future__ import annotations

import numpy as np
import pytest

from app.models.dataset import DatasetManifest, save_manifest
from app.models.fno import FnoConfig
from app.models.grid import BuildingMask, FieldSequence, Grid3
from app.models.solver import Box, GridSpec, SceneSpec
from app.services.field_io import write_mask, write_sequence
from app.services.windows import compute_norm_stats, make_windows, split_indices


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def cube_grid() -> Grid3:
    return Grid3(4, 4, 4, 1.0, 1.0, 1.0)


@pytest.fixture
def small_grid() -> Grid3:
    return Grid3(8, 6, 5, 2.0, 2.0, 2.0)


@pytest.fixture
def small_scene() -> SceneSpec:
    """12x8x6 cells at 2 m with one block in the middle of the stream."""

    return SceneSpec(
        name="small",
        grid=GridSpec(nx=12, ny=8, nz=6, dx=2.0, dy=2.0, dz=2.0),
        boxes=[Box(name="block", x0=8.0, x1=14.0, y0=4.0, y1=10.0, height=6.0)],
    )


@pytest.fixture
def block_mask(small_grid: Grid3) -> BuildingMask:
    solid = np.zeros(small_grid.shape, dtype=bool)
    solid[3:5, 2:4, 0:2] = True
    return BuildingMask(small_grid, solid)


@pytest.fixture
def tiny_config() -> FnoConfig:
    return FnoConfig(modes=2, width=2, layers=2, in_channels=5)


@pytest.fixture
def saved_manifest(tmp_path, block_mask):
    """Ten random masked fields on disk with a 2/1 window split; returns (path, arrays)."""

    grid = block_mask.grid
    rng = np.random.default_rng(99)
    arrays = []
    for _ in range(10):
        values = (rng.random(grid.shape) + 0.5).astype(np.float32)
        values[block_mask.solid] = 0
        arrays.append(values)
    paths = write_sequence(FieldSequence.from_arrays(grid, 0.5, arrays), tmp_path / "fields")
    write_mask(block_mask, tmp_path / "mask.umsk")
    windows = make_windows(10, 6, 2)
    train, test = split_indices(len(windows), 2, seed=0)
    manifest = DatasetManifest(
        fields=[p.relative_to(tmp_path).as_posix() for p in paths],
        dt=0.5,
        windows=windows,
        train=train,
        test=test,
        seed=0,
        norm=compute_norm_stats(arrays, [windows[i] for i in train], block_mask),
        grid=grid.to_dict(),
        mask="mask.umsk",
    )
    return save_manifest(manifest, tmp_path / "manifest.json"), arrays
