"""Block-building scenes: loading and rasterization onto the solver grid."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from app.models.grid import BuildingMask
from app.models.solver import Box, GridSpec, SceneSpec

logger = logging.getLogger(__name__)


def rasterize_scene(scene: SceneSpec) -> BuildingMask:
    """A cell is solid when its center lies inside any box (faces inclusive)."""

    scene.check_domain()
    grid = scene.grid.to_grid()
    xc, yc, zc = (grid.cell_centers(axis) for axis in range(3))
    solid = np.zeros(grid.shape, dtype=bool)
    for box in scene.boxes:
        in_x = (xc >= box.x0) & (xc <= box.x1)
        in_y = (yc >= box.y0) & (yc <= box.y1)
        in_z = (zc >= box.z0) & (zc <= box.z1)
        cells = in_x[:, None, None] & in_y[None, :, None] & in_z[None, None, :]
        if not cells.any():
            logger.warning("Box %s covers no cell center on %s", box.name or box, grid.describe())
        solid |= cells
    mask = BuildingMask(grid, solid)
    logger.debug(
        "Rasterized %s: %d boxes, fluid fraction %.3f",
        scene.name,
        len(scene.boxes),
        mask.fluid_fraction,
    )
    return mask


def load_scene(path: str | Path) -> SceneSpec:
    return SceneSpec.load(path)


def desk_scene() -> SceneSpec:
    """32x32x16 cells at 2 m with three asymmetric blocks."""

    return SceneSpec(
        name="desk",
        grid=GridSpec(nx=32, ny=32, nz=16, dx=2.0, dy=2.0, dz=2.0),
        boxes=[
            Box(name="tower", x0=16.0, x1=26.0, y0=20.0, y1=32.0, height=18.0),
            Box(name="slab", x0=30.0, x1=44.0, y0=34.0, y1=42.0, height=10.0),
            Box(name="block", x0=20.0, x1=28.0, y0=44.0, y1=52.0, height=14.0),
        ],
    )


BUILTIN_SCENES = {"desk": desk_scene}


def rescale_scene(scene: SceneSpec, shape: tuple[int, int, int]) -> SceneSpec:
    """Same domain and boxes on an ``nx x ny x nz`` grid."""

    grid = scene.grid.to_grid()
    nx, ny, nz = shape
    spec = GridSpec(
        nx=nx,
        ny=ny,
        nz=nz,
        dx=grid.extent[0] / nx,
        dy=grid.extent[1] / ny,
        dz=grid.extent[2] / nz,
        origin=grid.origin,
    )
    return scene.model_copy(update={"grid": spec})


def resolve_scene(name_or_path: str | Path) -> SceneSpec:
    """Built-in scene by name, otherwise a scene JSON file."""

    factory = BUILTIN_SCENES.get(str(name_or_path))
    return factory() if factory else load_scene(name_or_path)


__all__ = [
    "BUILTIN_SCENES",
    "desk_scene",
    "load_scene",
    "rasterize_scene",
    "rescale_scene",
    "resolve_scene",
]
