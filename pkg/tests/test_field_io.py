from __future__ import annotations

import numpy as np
import pytest

from app.models.grid import BuildingMask, FieldSequence, Grid3, GridError, ScalarField
from app.services.field_io import (
    FieldFormatError,
    field_path,
    list_field_files,
    read_field,
    read_mask,
    read_sequence,
    write_field,
    write_mask,
    write_sequence,
)


def test_field_round_trip_is_bitwise(tmp_path, small_grid, rng):
    values = rng.random(small_grid.shape).astype(np.float32)
    path = write_field(ScalarField(small_grid, values), tmp_path / "a.ufn")
    loaded = read_field(path)
    assert loaded.grid == small_grid
    assert loaded.values.dtype == np.float32
    np.testing.assert_array_equal(loaded.values, values)


def test_wide_fields_are_stored_as_float32(tmp_path, small_grid, rng):
    values = rng.random(small_grid.shape)
    loaded = read_field(write_field(ScalarField(small_grid, values), tmp_path / "wide.ufn"))
    assert loaded.values.dtype == np.float32
    np.testing.assert_array_equal(loaded.values, values.astype(np.float32))
    assert not np.array_equal(loaded.values.astype(np.float64), values)


def test_values_beyond_float32_range_are_refused(tmp_path, small_grid):
    values = np.ones(small_grid.shape)
    values[0, 0, 0] = 1e39
    with pytest.raises(GridError):
        write_field(ScalarField(small_grid, values), tmp_path / "big.ufn")
    assert not (tmp_path / "big.ufn").exists()


def test_field_payload_is_x_fastest(tmp_path, cube_grid):
    values = np.arange(cube_grid.size, dtype=np.float32).reshape(cube_grid.shape, order="F")
    path = write_field(ScalarField(cube_grid, values), tmp_path / "order.ufn")
    payload = np.frombuffer(path.read_bytes()[-cube_grid.size * 4 :], dtype="<f4")
    np.testing.assert_array_equal(payload, np.arange(cube_grid.size, dtype=np.float32))


def test_corrupt_magic_is_a_format_error(tmp_path, cube_grid):
    path = write_field(ScalarField(cube_grid, np.zeros(cube_grid.shape)), tmp_path / "bad.ufn")
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_truncated_payload_is_a_format_error(tmp_path, cube_grid):
    path = write_field(ScalarField(cube_grid, np.zeros(cube_grid.shape)), tmp_path / "short.ufn")
    path.write_bytes(path.read_bytes()[:-4])  # 63 of 64 values
    with pytest.raises(FieldFormatError, match="truncated"):
        read_field(path)


def test_format_errors_are_os_errors():
    assert issubclass(FieldFormatError, OSError)


def test_mask_round_trip(tmp_path, block_mask):
    loaded = read_mask(write_mask(block_mask, tmp_path / "mask.umsk"))
    np.testing.assert_array_equal(loaded.solid, block_mask.solid)
    with pytest.raises(FieldFormatError):
        read_field(tmp_path / "mask.umsk")


def test_sequence_files_are_numbered(tmp_path, cube_grid, rng):
    arrays = [rng.random(cube_grid.shape).astype(np.float32) for _ in range(3)]
    write_sequence(FieldSequence.from_arrays(cube_grid, 0.2, arrays), tmp_path)
    assert [p.name for p in list_field_files(tmp_path)] == [
        "field_00000.ufn",
        "field_00001.ufn",
        "field_00002.ufn",
    ]
    assert field_path(tmp_path, 7).name == "field_00007.ufn"
    loaded = read_sequence(tmp_path, dt=0.2)
    np.testing.assert_array_equal(loaded.stack(), np.stack(arrays))


def test_empty_directory_has_no_sequence(tmp_path):
    with pytest.raises(FieldFormatError):
        read_sequence(tmp_path, dt=1.0)
