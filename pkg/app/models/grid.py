"""Grid, field and mask records shared by every pipeline stage.

Arrays are held in memory as ``(nx, ny, nz)`` numpy arrays indexed ``[i, j, k]``;
the x-fastest storage order only matters on disk (Fortran order) and is handled
by :mod:`app.services.field_io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GridError(ValueError):
    pass


class MaskError(ValueError):
    pass


@dataclass(frozen=True)
class Grid3:
    """Uniform cell-centred grid; ``origin`` is the lower domain corner in meters."""

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        for name in ("nx", "ny", "nz"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise GridError(f"{name} must be an integer >= 2, got {value}")
            object.__setattr__(self, name, int(value))
        for name in ("dx", "dy", "dz"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise GridError(f"{name} must be a positive spacing, got {value}")
            object.__setattr__(self, name, value)
        origin = tuple(float(v) for v in self.origin)
        if len(origin) != 3 or not all(math.isfinite(v) for v in origin):
            raise GridError(f"origin must be three finite coordinates, got {self.origin}")
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def extent(self) -> tuple[float, float, float]:
        return (self.nx * self.dx, self.ny * self.dy, self.nz * self.dz)

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    def cell_centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def same_extent(self, other: "Grid3", rel_tol: float = 1e-9) -> bool:
        return all(
            math.isclose(a, b, rel_tol=rel_tol, abs_tol=1e-12)
            for a, b in zip(self.extent + self.origin, other.extent + other.origin)
        )

    def describe(self) -> str:
        return f"{self.nx}x{self.ny}x{self.nz} @ ({self.dx:g}, {self.dy:g}, {self.dz:g}) m"

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "dx": self.dx,
            "dy": self.dy,
            "dz": self.dz,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Grid3":
        return cls(
            nx=data["nx"],
            ny=data["ny"],
            nz=data["nz"],
            dx=data["dx"],
            dy=data["dy"],
            dz=data["dz"],
            origin=tuple(data.get("origin", (0.0, 0.0, 0.0))),
        )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ScalarField:
    """A 3D scalar sample (velocity magnitude in m/s unless stated otherwise)."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(np.float64)
        if values.shape != self.grid.shape:
            raise GridError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("field contains non-finite values")
        object.__setattr__(self, "values", _frozen(np.array(values, copy=True)))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))


@dataclass(frozen=True)
class BuildingMask:
    grid: Grid3
    solid: np.ndarray

    def __post_init__(self) -> None:
        solid = np.asarray(self.solid, dtype=bool)
        if solid.shape != self.grid.shape:
            raise GridError(f"mask shape {solid.shape} does not match grid {self.grid.shape}")
        if solid.all():
            raise MaskError("mask has no fluid cell")
        object.__setattr__(self, "solid", _frozen(np.array(solid, copy=True)))

    @property
    def fluid(self) -> np.ndarray:
        return ~self.solid

    @property
    def fluid_fraction(self) -> float:
        return float(self.fluid.mean())

    @classmethod
    def empty(cls, grid: Grid3) -> "BuildingMask":
        return cls(grid, np.zeros(grid.shape, dtype=bool))


@dataclass(frozen=True)
class FieldSequence:
    dt: float
    fields: tuple[ScalarField, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise GridError(f"dt must be positive, got {self.dt}")
        fields = tuple(self.fields)
        if fields:
            grid = fields[0].grid
            for index, item in enumerate(fields[1:], start=1):
                if item.grid != grid:
                    raise GridError(
                        f"field {index} grid {item.grid.describe()} differs from {grid.describe()}"
                    )
        object.__setattr__(self, "fields", fields)

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, index: int) -> ScalarField:
        return self.fields[index]

    @property
    def grid(self) -> Grid3:
        if not self.fields:
            raise GridError("empty sequence has no grid")
        return self.fields[0].grid

    def stack(self) -> np.ndarray:
        return np.stack([item.values for item in self.fields])

    @classmethod
    def from_arrays(cls, grid: Grid3, dt: float, arrays: Sequence[np.ndarray]) -> "FieldSequence":
        return cls(dt=dt, fields=tuple(ScalarField(grid, a) for a in arrays))


__all__ = [
    "BuildingMask",
    "FieldSequence",
    "Grid3",
    "GridError",
    "MaskError",
    "ScalarField",
]
