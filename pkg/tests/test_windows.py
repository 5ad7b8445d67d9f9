from __future__ import annotations

import numpy as np
import pytest

from app.models.dataset import DatasetManifest, NormStats, SampleWindow, load_manifest
from app.models.grid import BuildingMask, ScalarField
from app.services.windows import (
    InMemoryWindows,
    WindowDataset,
    WindowError,
    apply_mask,
    compute_norm_stats,
    denormalize,
    make_windows,
    normalize,
    normalize_array,
    split_dataset,
    split_indices,
)


def test_window_counts():
    assert len(make_windows(1200, 6, 2)) == 598
    assert len(make_windows(400, 6, 2)) == 198
    assert len(make_windows(6, 6, 2)) == 1


def test_windows_enumerated_by_hand():
    windows = make_windows(11, 6, 2)
    assert [w.start for w in windows] == [0, 2, 4]
    assert windows[1].input_indices == (2, 3, 4, 5, 6)
    assert windows[1].target_index == 7


@pytest.mark.parametrize("args", [(5, 6, 2), (10, 1, 1), (10, 6, 0)])
def test_invalid_windows(args):
    with pytest.raises(WindowError):
        make_windows(*args)


def _starts(windows):
    return {w.input_indices[0] for w in windows}


def test_split_sizes_and_determinism():
    windows = make_windows(1200, 6, 2)
    train, test = split_dataset(windows, 500, seed=7)
    assert (len(train), len(test)) == (500, 98)
    assert all(isinstance(w, SampleWindow) for w in train + test)
    assert not _starts(train) & _starts(test)
    assert _starts(train) | _starts(test) == _starts(windows)
    assert split_dataset(windows, 500, seed=7) == (train, test)
    assert split_dataset(windows, 500, seed=8) != (train, test)


def test_two_windows_split_one_each():
    train, test = split_dataset(make_windows(8, 6, 2), 1, seed=3)
    assert len(train) == len(test) == 1


def test_split_rejects_empty_partition():
    with pytest.raises(WindowError):
        split_dataset(make_windows(8, 6, 2), 2, seed=0)


def test_split_indices_match_the_window_split():
    windows = make_windows(40, 6, 2)
    train_ids, test_ids = split_indices(len(windows), 12, seed=5)
    train, test = split_dataset(windows, 12, seed=5)
    assert train == [windows[i] for i in train_ids]
    assert test == [windows[i] for i in test_ids]
    assert sorted(train_ids + test_ids) == list(range(len(windows)))


def test_apply_mask_zeroes_solids_only(block_mask, rng):
    values = rng.random(block_mask.grid.shape) + 0.1
    masked = apply_mask(ScalarField(block_mask.grid, values), block_mask)
    assert np.all(masked.values[block_mask.solid] == 0)
    np.testing.assert_array_equal(masked.values[block_mask.fluid], values[block_mask.fluid])


def test_apply_mask_all_fluid_is_identity(cube_grid, rng):
    values = rng.random(cube_grid.shape)
    masked = apply_mask(ScalarField(cube_grid, values), BuildingMask.empty(cube_grid))
    np.testing.assert_array_equal(masked.values, values)


def test_apply_mask_single_survivor(cube_grid, rng):
    solid = np.ones(cube_grid.shape, dtype=bool)
    solid[1, 2, 3] = False
    values = rng.random(cube_grid.shape) + 1.0
    masked = apply_mask(ScalarField(cube_grid, values), BuildingMask(cube_grid, solid))
    assert np.count_nonzero(masked.values) == 1
    assert masked.values[1, 2, 3] == values[1, 2, 3]


def test_normalize_by_hand(cube_grid, rng):
    stats = NormStats(mean=2.0, std=3.0)
    assert normalize_array(np.array(8.0), stats) == pytest.approx(2.0)
    constant = ScalarField(cube_grid, np.full(cube_grid.shape, 2.0))
    assert np.all(normalize(constant, stats).values == 0)
    field = ScalarField(cube_grid, rng.random(cube_grid.shape))
    np.testing.assert_allclose(denormalize(normalize(field, stats), stats).values, field.values, atol=1e-12)


def test_norm_stats_use_fluid_cells_of_referenced_steps(block_mask):
    grid = block_mask.grid
    fields = []
    for step in range(8):
        values = np.full(grid.shape, float(step))
        values[block_mask.solid] = 0.0
        fields.append(values)
    windows = make_windows(8, 6, 2)[:1]  # steps 0..5
    stats = compute_norm_stats(fields, windows, block_mask)
    assert stats.mean == pytest.approx(2.5)
    assert stats.std == pytest.approx(np.std(np.arange(6.0)))


def test_constant_training_fields_get_unit_std(cube_grid):
    fields = [np.ones(cube_grid.shape)] * 6
    stats = compute_norm_stats(fields, make_windows(6, 6, 2))
    assert stats.std == 1.0


def test_window_dataset_reads_manifest(saved_manifest, block_mask):
    path, arrays = saved_manifest
    grid = block_mask.grid
    loaded = load_manifest(path)
    norm = loaded.norm
    assert loaded.mask == "mask.umsk"
    assert len(loaded.windows) == 3

    dataset = WindowDataset(loaded, path.parent, "train", cache_size=4)
    assert len(dataset) == 2
    inputs, target = dataset[0]
    window = dataset.window(0)
    assert inputs.shape == (5,) + grid.shape
    np.testing.assert_allclose(inputs[0], (arrays[window.start] - norm.mean) / norm.std, rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(target, arrays[window.target_index])
    assert len(dataset._cache) <= 4
    np.testing.assert_array_equal(dataset.mask.solid, block_mask.solid)


def test_manifest_rejects_overlapping_partitions():
    windows = make_windows(10, 6, 2)
    with pytest.raises(ValueError):
        DatasetManifest(
            fields=[f"f{i}" for i in range(10)],
            dt=1.0,
            windows=windows,
            train=[0, 1],
            test=[1, 2],
            seed=0,
            norm=NormStats(mean=0.0, std=1.0),
        )


def test_in_memory_windows_from_sequence(cube_grid, rng):
    stack = rng.random((8,) + cube_grid.shape)
    data = InMemoryWindows.from_sequence(stack, make_windows(8, 6, 1))
    assert len(data) == 3
    inputs, target = data[2]
    np.testing.assert_array_equal(inputs, stack[2:7])
    np.testing.assert_array_equal(target, stack[7])
