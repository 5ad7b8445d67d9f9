"""Configuration and state records for the semi-Lagrangian flow solver."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.grid import BuildingMask, Grid3


class SceneError(ValueError):
    pass


class WindDirection(str, Enum):
    """Direction the wind blows from, in the solver's face labelling."""

    WEST = "west"
    NORTH = "north"
    EAST = "east"
    SOUTH = "south"

    @property
    def degrees(self) -> int:
        return {"west": 0, "north": 90, "east": 180, "south": 270}[self.value]

    @classmethod
    def parse(cls, value: "str | int | WindDirection") -> "WindDirection":
        if isinstance(value, WindDirection):
            return value
        if isinstance(value, int) or str(value).lstrip("-").isdigit():
            by_degrees = {d.degrees: d for d in cls}
            degrees = int(value) % 360
            if degrees not in by_degrees:
                raise ValueError(f"unsupported wind direction {value}; use 0, 90, 180 or 270")
            return by_degrees[degrees]
        return cls(str(value).lower())


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    reynolds: float = Field(default=1.0e5, gt=0)
    prandtl: float = Field(default=0.71, gt=0)
    grashof: float = Field(default=0.0, ge=0)
    smagorinsky: float = Field(default=0.17, ge=0.1, le=0.24)
    courant: float = Field(default=0.4, gt=0, lt=1)
    u_ref: float = Field(default=5.0, gt=0)
    z_ref: float = Field(default=10.0, gt=0)
    alpha: float = Field(default=0.25, ge=0)
    # Lowest height the power law is evaluated at when no grid is supplied (m)
    profile_floor: float = Field(default=0.5, gt=0)
    direction: WindDirection = WindDirection.WEST
    thermal: bool = False
    prandtl_turbulent: float = Field(default=0.9, gt=0)
    inflow_temperature: float = 0.0
    interpolation: Literal["linear", "cubic"] = "cubic"
    boundary: Literal["wind_tunnel", "closed_box"] = "wind_tunnel"
    ground: Literal["no_slip", "free_slip"] = "no_slip"
    pressure_solver: Literal["direct", "jacobi"] = "direct"
    pressure_tolerance: float = Field(default=1e-4, gt=0)
    pressure_max_iters: int = Field(default=400, ge=1)
    jacobi_omega: float = Field(default=6.0 / 7.0, gt=0, le=1)
    initial: Literal["profile", "rest"] = "profile"

    @field_validator("direction", mode="before")
    @classmethod
    def _parse_direction(cls, value: object) -> WindDirection:
        return WindDirection.parse(value)  # type: ignore[arg-type]

    @property
    def viscosity(self) -> float:
        """Molecular kinematic viscosity (m^2/s) from Re with U_ref and z_ref as scales."""

        return self.u_ref * self.z_ref / self.reynolds

    @property
    def diffusivity(self) -> float:
        return self.viscosity / self.prandtl

    @property
    def buoyancy_scale(self) -> float:
        """Acceleration per unit dimensionless temperature, sign included."""

        return -(self.grashof / self.reynolds**2) * self.u_ref**2 / self.z_ref

    def time_step(self, grid: Grid3) -> float:
        return self.courant * grid.min_spacing / self.u_ref


class Box(BaseModel):
    """Axis-aligned building block in meters; ``z0`` defaults to the ground."""

    model_config = ConfigDict(frozen=True)

    x0: float
    x1: float
    y0: float
    y1: float
    height: float = Field(gt=0)
    z0: float = 0.0
    name: str | None = None

    @model_validator(mode="after")
    def _check_order(self) -> "Box":
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"box {self.name or ''} has non-positive footprint")
        return self

    @property
    def z1(self) -> float:
        return self.z0 + self.height


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int = Field(ge=2)
    ny: int = Field(ge=2)
    nz: int = Field(ge=2)
    dx: float = Field(gt=0)
    dy: float = Field(gt=0)
    dz: float = Field(gt=0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_grid(self) -> Grid3:
        return Grid3(self.nx, self.ny, self.nz, self.dx, self.dy, self.dz, self.origin)

    @classmethod
    def from_grid(cls, grid: Grid3) -> "GridSpec":
        return cls(**grid.to_dict())


class SceneSpec(BaseModel):
    name: str = "scene"
    grid: GridSpec
    boxes: list[Box] = Field(default_factory=list)

    def check_domain(self) -> "SceneSpec":
        """Raise SceneError when a box pokes out of the domain."""

        grid = self.grid.to_grid()
        lo = grid.origin
        hi = tuple(o + e for o, e in zip(grid.origin, grid.extent))
        tol = 1e-9
        for index, box in enumerate(self.boxes):
            inside = (
                box.x0 >= lo[0] - tol
                and box.x1 <= hi[0] + tol
                and box.y0 >= lo[1] - tol
                and box.y1 <= hi[1] + tol
                and box.z0 >= lo[2] - tol
                and box.z1 <= hi[2] + tol
            )
            if not inside:
                raise SceneError(
                    f"box {box.name or index} [{box.x0},{box.x1}]x[{box.y0},{box.y1}]x"
                    f"[{box.z0},{box.z1}] lies outside the domain"
                )
        return self

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        scene = cls.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
        return scene.check_domain()

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
        return path


@dataclass
class SolverState:
    """Staggered (MAC) velocity, cell pressure/temperature/eddy viscosity.

    ``u`` lives on x-faces ``(nx+1, ny, nz)``, ``v`` on y-faces, ``w`` on z-faces.
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: np.ndarray
    nu_t: np.ndarray
    mask: BuildingMask
    theta: np.ndarray | None = None
    time: float = 0.0
    step_index: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        nx, ny, nz = self.grid.shape
        expected = {
            "u": (nx + 1, ny, nz),
            "v": (nx, ny + 1, nz),
            "w": (nx, ny, nz + 1),
            "p": (nx, ny, nz),
            "nu_t": (nx, ny, nz),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise SceneError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.theta is not None and self.theta.shape != (nx, ny, nz):
            raise SceneError(f"theta has shape {self.theta.shape}, expected {(nx, ny, nz)}")

    @property
    def grid(self) -> Grid3:
        return self.mask.grid

    @classmethod
    def zeros(cls, mask: BuildingMask, thermal: bool = False) -> "SolverState":
        nx, ny, nz = mask.grid.shape
        return cls(
            u=np.zeros((nx + 1, ny, nz)),
            v=np.zeros((nx, ny + 1, nz)),
            w=np.zeros((nx, ny, nz + 1)),
            p=np.zeros((nx, ny, nz)),
            nu_t=np.zeros((nx, ny, nz)),
            mask=mask,
            theta=np.zeros((nx, ny, nz)) if thermal else None,
        )

    def copy(self) -> "SolverState":
        return replace(
            self,
            u=self.u.copy(),
            v=self.v.copy(),
            w=self.w.copy(),
            p=self.p.copy(),
            nu_t=self.nu_t.copy(),
            theta=None if self.theta is None else self.theta.copy(),
            extras=dict(self.extras),
        )

    def cell_velocity(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        uc = 0.5 * (self.u[:-1, :, :] + self.u[1:, :, :])
        vc = 0.5 * (self.v[:, :-1, :] + self.v[:, 1:, :])
        wc = 0.5 * (self.w[:, :, :-1] + self.w[:, :, 1:])
        return uc, vc, wc

    def speed(self) -> np.ndarray:
        """Cell-centred velocity magnitude, exactly zero inside buildings."""

        uc, vc, wc = self.cell_velocity()
        magnitude = np.sqrt(uc * uc + vc * vc + wc * wc)
        magnitude[self.mask.solid] = 0.0
        return magnitude


__all__ = [
    "Box",
    "GridSpec",
    "SceneError",
    "SceneSpec",
    "SolverConfig",
    "SolverState",
    "WindDirection",
]
