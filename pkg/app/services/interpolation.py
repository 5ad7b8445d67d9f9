"""Local trilinear / tricubic sampling and semi-Lagrangian departure points."""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np

from app.models.grid import BuildingMask, Grid3, ScalarField

Order = Literal["linear", "cubic"]
_BISECTION_STEPS = 12


def _axis_stencil(coord: np.ndarray, n: int, order: Order) -> tuple[np.ndarray, list[np.ndarray]]:
    """Base node and per-node weights along one axis (coordinates in index units)."""

    c = np.clip(coord, 0.0, n - 1.0)
    if order == "cubic" and n >= 4:
        base = np.clip(np.floor(c).astype(np.int64) - 1, 0, n - 4)
        t = c - base
        t1, t2, t3 = t - 1.0, t - 2.0, t - 3.0
        weights = [
            -t1 * t2 * t3 / 6.0,
            t * t2 * t3 / 2.0,
            -t * t1 * t3 / 2.0,
            t * t1 * t2 / 6.0,
        ]
        return base, weights
    base = np.clip(np.floor(c).astype(np.int64), 0, n - 2)
    t = c - base
    return base, [1.0 - t, t]


def sample(values: np.ndarray, coords: Sequence[np.ndarray], order: Order = "cubic") -> np.ndarray:
    """Sample a 3D array at fractional index coordinates ``(ci, cj, ck)``.

    Coordinates are clamped to the node range; axes with fewer than four nodes
    fall back to linear weights. Exact at nodes for both orders.
    """

    if order not in ("linear", "cubic"):
        raise ValueError(f"unknown interpolation order {order!r}")
    ci, cj, ck = (np.asarray(c, dtype=np.float64) for c in coords)
    ci, cj, ck = np.broadcast_arrays(ci, cj, ck)
    (bi, wi), (bj, wj), (bk, wk) = (
        _axis_stencil(c, n, order) for c, n in zip((ci, cj, ck), values.shape)
    )
    out = np.zeros(ci.shape, dtype=np.float64)
    for a, wa in enumerate(wi):
        ia = bi + a
        for b, wb in enumerate(wj):
            jb = bj + b
            wab = wa * wb
            for c, wc in enumerate(wk):
                out += wab * wc * values[ia, jb, bk + c]
    return out


def position_to_index(grid: Grid3, positions: np.ndarray, offsets=(0.5, 0.5, 0.5)) -> list[np.ndarray]:
    """Meters -> fractional index; ``offsets`` is where node 0 sits in cell units."""

    positions = np.asarray(positions, dtype=np.float64)
    return [
        (positions[..., axis] - grid.origin[axis]) / grid.spacing[axis] - offsets[axis]
        for axis in range(3)
    ]


def interpolate(field: ScalarField, position: np.ndarray, order: Order = "cubic") -> np.ndarray | float:
    """Value of a cell-centred field at physical position(s) ``(..., 3)`` in meters."""

    position = np.asarray(position, dtype=np.float64)
    coords = position_to_index(field.grid, position)
    result = sample(np.asarray(field.values, dtype=np.float64), coords, order)
    return float(result) if result.ndim == 0 else result


def cell_index(grid: Grid3, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx = []
    for axis in range(3):
        raw = np.floor((positions[..., axis] - grid.origin[axis]) / grid.spacing[axis])
        idx.append(np.clip(raw.astype(np.int64), 0, grid.shape[axis] - 1))
    return idx[0], idx[1], idx[2]


def backtrace(
    positions: np.ndarray,
    velocity: np.ndarray,
    dt: float,
    grid: Grid3,
    mask: BuildingMask | None = None,
) -> np.ndarray:
    """First-order departure points ``x - dt * u``, clamped to the domain box.

    A departure inside a solid cell is pulled back along the trajectory to the
    last fluid point (bisection on the segment from the arrival point).
    """

    positions = np.asarray(positions, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    lo = np.asarray(grid.origin)
    hi = lo + np.asarray(grid.extent)
    departure = np.clip(positions - dt * velocity, lo, hi)
    if mask is None or not mask.solid.any():
        return departure

    solid = mask.solid
    hit = solid[cell_index(grid, departure)]
    if not hit.any():
        return departure
    start = positions[hit]
    end = departure[hit]
    keep = np.zeros(start.shape[:-1])
    cut = np.ones(start.shape[:-1])
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (keep + cut)
        point = start + mid[..., None] * (end - start)
        inside = solid[cell_index(grid, point)]
        keep = np.where(inside, keep, mid)
        cut = np.where(inside, mid, cut)
    departure[hit] = start + keep[..., None] * (end - start)
    return departure


__all__ = ["backtrace", "cell_index", "interpolate", "position_to_index", "sample"]
