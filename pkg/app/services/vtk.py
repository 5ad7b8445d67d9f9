"""Legacy VTK STRUCTURED_POINTS export (ASCII header, big-endian binary payload)."""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Mapping

import numpy as np

from app.models.grid import Grid3

logger = logging.getLogger(__name__)

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def write_vtk(
    path: str | Path,
    grid: Grid3,
    scalars: Mapping[str, np.ndarray],
    title: str = "urban-fno field",
) -> Path:
    """One point per cell center; every array in ``scalars`` becomes a named SCALARS block."""

    if not scalars:
        raise ValueError("nothing to export")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    origin = [o + 0.5 * h for o, h in zip(grid.origin, grid.spacing)]
    header = (
        "# vtk DataFile Version 3.0\n"
        f"{title[:255]}\n"
        "BINARY\n"
        "DATASET STRUCTURED_POINTS\n"
        f"DIMENSIONS {grid.nx} {grid.ny} {grid.nz}\n"
        f"ORIGIN {origin[0]:.9g} {origin[1]:.9g} {origin[2]:.9g}\n"
        f"SPACING {grid.dx:.9g} {grid.dy:.9g} {grid.dz:.9g}\n"
        f"POINT_DATA {grid.size}\n"
    )
    with path.open("wb") as handle:
        handle.write(header.encode("ascii"))
        for name, values in scalars.items():
            if not _NAME.match(name):
                raise ValueError(f"VTK scalar names cannot contain spaces or symbols: {name!r}")
            values = np.asarray(values)
            if values.shape != grid.shape:
                raise ValueError(f"{name} has shape {values.shape}, grid is {grid.shape}")
            handle.write(f"SCALARS {name} float 1\nLOOKUP_TABLE default\n".encode("ascii"))
            handle.write(np.asarray(values, dtype=">f4").tobytes(order="F"))
            handle.write(b"\n")
    logger.debug("Wrote %d scalars to %s", len(scalars), path)
    return path


__all__ = ["write_vtk"]
