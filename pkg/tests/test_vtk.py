from __future__ import annotations

import numpy as np
import pytest

from app.models.grid import Grid3
from app.services.vtk import write_vtk


def _split(raw: bytes, header_lines: int) -> tuple[list[str], bytes]:
    lines = []
    offset = 0
    for _ in range(header_lines):
        end = raw.index(b"\n", offset)
        lines.append(raw[offset:end].decode("ascii"))
        offset = end + 1
    return lines, raw[offset:]


def test_header_and_big_endian_payload(tmp_path):
    grid = Grid3(3, 2, 2, 2.0, 2.0, 1.0, (10.0, 0.0, 0.0))
    values = np.arange(12, dtype=np.float32).reshape(grid.shape)
    path = write_vtk(tmp_path / "out.vtk", grid, {"speed": values})
    lines, payload = _split(path.read_bytes(), 10)
    assert lines == [
        "# vtk DataFile Version 3.0",
        "urban-fno field",
        "BINARY",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS 3 2 2",
        "ORIGIN 11 1 0.5",
        "SPACING 2 2 1",
        "POINT_DATA 12",
        "SCALARS speed float 1",
        "LOOKUP_TABLE default",
    ]
    decoded = np.frombuffer(payload[: 12 * 4], dtype=">f4")
    # x varies fastest
    np.testing.assert_array_equal(decoded, values.ravel(order="F"))
    assert payload[12 * 4 :] == b"\n"


def test_several_scalars_follow_each_other(tmp_path):
    grid = Grid3(2, 2, 2, 1.0, 1.0, 1.0)
    path = write_vtk(
        tmp_path / "two.vtk",
        grid,
        {"truth": np.ones(grid.shape), "abs_error": np.zeros(grid.shape)},
        title="pair",
    )
    raw = path.read_bytes()
    assert raw.count(b"SCALARS ") == 2
    assert b"SCALARS abs_error float 1\nLOOKUP_TABLE default\n" in raw
    assert b"\npair\n" in raw


@pytest.mark.parametrize(
    "scalars",
    [{}, {"bad name": np.zeros((2, 2, 2))}, {"speed": np.zeros((2, 2, 3))}],
)
def test_invalid_exports(tmp_path, scalars):
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "bad.vtk", Grid3(2, 2, 2, 1.0, 1.0, 1.0), scalars)
