"""Binary field and mask files.

Layout (little-endian): magic (4 bytes) | u32 version | u32 nx, ny, nz |
f64 dx, dy, dz | f64 origin x, y, z | payload, x-fastest. Fields carry f32
values under magic ``UFN1``; masks carry u8 flags (1 solid) under ``UMSK``.
"""

from __future__ import annotations

import logging
import os
import struct
from pathlib import Path

import numpy as np

from app.models.grid import BuildingMask, FieldSequence, Grid3, GridError, ScalarField

logger = logging.getLogger(__name__)

FIELD_MAGIC = b"UFN1"
MASK_MAGIC = b"UMSK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI3I3d3d")
FIELD_SUFFIX = ".ufn"
MASK_SUFFIX = ".umsk"


class FieldFormatError(OSError):
    pass


def _pack_header(magic: bytes, grid: Grid3) -> bytes:
    return _HEADER.pack(magic, FORMAT_VERSION, *grid.shape, *grid.spacing, *grid.origin)


def _unpack_header(raw: bytes, magic: bytes, path: Path) -> Grid3:
    if len(raw) < _HEADER.size:
        raise FieldFormatError(f"{path}: header truncated ({len(raw)} bytes)")
    found, version, nx, ny, nz, dx, dy, dz, ox, oy, oz = _HEADER.unpack_from(raw)
    if found != magic:
        raise FieldFormatError(f"{path}: bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    try:
        return Grid3(nx, ny, nz, dx, dy, dz, (ox, oy, oz))
    except GridError as exc:
        raise FieldFormatError(f"{path}: invalid grid header: {exc}") from exc


def _write_atomic(path: Path, payload: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(payload)
    os.replace(tmp, path)
    return path


def _read_payload(path: Path, magic: bytes, dtype: np.dtype) -> tuple[Grid3, np.ndarray]:
    raw = path.read_bytes()
    grid = _unpack_header(raw, magic, path)
    body = raw[_HEADER.size :]
    expected = grid.size * dtype.itemsize
    if len(body) != expected:
        kind = "truncated" if len(body) < expected else "has trailing bytes"
        raise FieldFormatError(
            f"{path}: payload {kind}: {len(body)} bytes for {grid.nx}x{grid.ny}x{grid.nz} "
            f"({expected} expected)"
        )
    flat = np.frombuffer(body, dtype=dtype)
    return grid, flat.reshape(grid.shape, order="F")


def write_field(field: ScalarField, path: str | Path) -> Path:
    """Store ``field`` as little-endian float32.

    Float32 values come back bitwise on read. Wider input is rounded to float32
    first, so only that rounded copy round-trips.
    """

    values = np.asarray(field.values)
    with np.errstate(over="ignore"):
        stored = values.astype("<f4")
    if not np.all(np.isfinite(stored)):
        raise GridError("refusing to write a field with non-finite values")
    if values.dtype != np.float32:
        logger.debug("Rounding %s field to float32 for %s", values.dtype, path)
    payload = stored.tobytes(order="F")
    return _write_atomic(Path(path), _pack_header(FIELD_MAGIC, field.grid) + payload)


def read_field(path: str | Path) -> ScalarField:
    grid, values = _read_payload(Path(path), FIELD_MAGIC, np.dtype("<f4"))
    return ScalarField(grid, values.astype(np.float32))


def write_mask(mask: BuildingMask, path: str | Path) -> Path:
    payload = np.asarray(mask.solid, dtype=np.uint8).tobytes(order="F")
    return _write_atomic(Path(path), _pack_header(MASK_MAGIC, mask.grid) + payload)


def read_mask(path: str | Path) -> BuildingMask:
    path = Path(path)
    grid, flags = _read_payload(path, MASK_MAGIC, np.dtype(np.uint8))
    if np.any(flags > 1):
        raise FieldFormatError(f"{path}: mask flags must be 0 or 1")
    return BuildingMask(grid, flags.astype(bool))


def field_path(directory: str | Path, index: int) -> Path:
    return Path(directory) / f"field_{index:05d}{FIELD_SUFFIX}"


def write_sequence(sequence: FieldSequence, directory: str | Path, start: int = 0) -> list[Path]:
    """Write numbered field files ``field_00000.ufn``...; returns the paths in order."""

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_field(item, field_path(directory, start + i)) for i, item in enumerate(sequence)]


def list_field_files(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob(f"field_*{FIELD_SUFFIX}"))


def read_sequence(directory: str | Path, dt: float) -> FieldSequence:
    paths = list_field_files(directory)
    if not paths:
        raise FieldFormatError(f"{directory}: no field files found")
    logger.debug("Reading %d field files from %s", len(paths), directory)
    return FieldSequence(dt=dt, fields=tuple(read_field(p) for p in paths))


__all__ = [
    "FIELD_MAGIC",
    "FIELD_SUFFIX",
    "FORMAT_VERSION",
    "FieldFormatError",
    "MASK_MAGIC",
    "MASK_SUFFIX",
    "field_path",
    "list_field_files",
    "read_field",
    "read_mask",
    "read_sequence",
    "write_field",
    "write_mask",
    "write_sequence",
]
