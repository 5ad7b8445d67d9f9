"""Natural cubic splines and separable spline downsampling of 3D fields."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from app.models.grid import BuildingMask, Grid3, ScalarField

logger = logging.getLogger(__name__)


class SplineError(ValueError):
    pass


class ResampleError(ValueError):
    pass


@dataclass(frozen=True)
class SplineCoeffs:
    """Per-interval ``a + b t + c t^2 + d t^3`` with ``t = x - x_i``.

    Coefficient arrays have shape ``(n - 1,)`` for one line or ``(n - 1, m)``
    for ``m`` lines sharing the knots.
    """

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    y_last: np.ndarray
    degraded: bool = False

    @property
    def second_derivatives(self) -> np.ndarray:
        """S'' at every knot (``2c`` on the left ends plus the right end value)."""

        h = np.diff(self.x).reshape((-1,) + (1,) * (self.c.ndim - 1))
        last = 2.0 * self.c[-1:] + 6.0 * self.d[-1:] * h[-1:]
        return np.concatenate([2.0 * self.c, last])


def fit_spline(xs: np.ndarray, ys: np.ndarray) -> SplineCoeffs:
    """Natural spline through ``(xs, ys)``; ``ys`` may carry extra trailing line axes."""

    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.shape[0] != x.size:
        raise SplineError(f"knots {x.shape} and values {y.shape} do not line up")
    if x.size < 2:
        raise SplineError("a spline needs at least two knots")
    h = np.diff(x)
    if np.any(h <= 0):
        raise SplineError("knots must be strictly increasing")

    extra = (1,) * (y.ndim - 1)
    hh = h.reshape((-1,) + extra)
    dy = np.diff(y, axis=0)
    slope = dy / hh
    if x.size == 2:
        logger.warning("Spline with two knots degrades to linear interpolation")
        zeros = np.zeros_like(slope)
        return SplineCoeffs(x, y[:-1].copy(), slope, zeros, zeros.copy(), y[-1].copy(), degraded=True)

    n_inner = x.size - 2
    bands = np.zeros((3, n_inner))
    bands[0, 1:] = h[1:-1]
    bands[1, :] = 2.0 * (h[:-1] + h[1:])
    bands[2, :-1] = h[1:-1]
    rhs = 6.0 * (slope[1:] - slope[:-1])
    inner = solve_banded((1, 1), bands, rhs)
    m = np.concatenate([np.zeros((1,) + y.shape[1:]), inner, np.zeros((1,) + y.shape[1:])])

    a = y[:-1].copy()
    b = slope - hh * (2.0 * m[:-1] + m[1:]) / 6.0
    c = m[:-1] / 2.0
    d = (m[1:] - m[:-1]) / (6.0 * hh)
    return SplineCoeffs(x, a, b, c, d, y[-1].copy())


def eval_spline(coeffs: SplineCoeffs, x: float | np.ndarray) -> np.ndarray | float:
    """Evaluate at ``x``; values beyond the knot range are rejected."""

    q = np.asarray(x, dtype=np.float64)
    knots = coeffs.x
    if np.any(q < knots[0]) or np.any(q > knots[-1]):
        raise SplineError(f"x outside the knot range [{knots[0]}, {knots[-1]}]")
    seg = np.clip(np.searchsorted(knots, q, side="right") - 1, 0, knots.size - 2)
    t = q - knots[seg]
    if coeffs.a.ndim > 1:
        t = t.reshape(t.shape + (1,) * (coeffs.a.ndim - 1))
    value = coeffs.a[seg] + t * (coeffs.b[seg] + t * (coeffs.c[seg] + t * coeffs.d[seg]))
    at_end = q == knots[-1]
    if np.any(at_end):
        value = np.where(
            at_end.reshape(at_end.shape + (1,) * (value.ndim - at_end.ndim)), coeffs.y_last, value
        )
    return float(value) if np.ndim(value) == 0 else value


def _resample_axis(values: np.ndarray, axis: int, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    lines = moved.reshape(moved.shape[0], -1)
    coeffs = fit_spline(src, lines)
    # Coarse centers can sit a rounding error outside the fine center range.
    targets = np.clip(dst, src[0], src[-1])
    out = eval_spline(coeffs, targets)
    out = np.asarray(out).reshape((dst.size,) + moved.shape[1:])
    return np.moveaxis(out, 0, axis)


def _check_target(source: Grid3, target: Grid3) -> None:
    if not source.same_extent(target):
        raise ResampleError(
            f"target {target.describe()} does not cover the same domain as {source.describe()}"
        )
    for axis, (n_src, n_dst) in enumerate(zip(source.shape, target.shape)):
        if n_dst > n_src:
            raise ResampleError(f"axis {axis}: upsampling {n_src} -> {n_dst} is not supported")


def downsample(
    field: ScalarField, target: Grid3, mask: BuildingMask | None = None
) -> ScalarField:
    """Separable spline resampling along x, then y, then z onto ``target`` cell centers.

    Axes whose size does not change are passed through untouched.
    """

    source = field.grid
    _check_target(source, target)
    values = np.asarray(field.values, dtype=np.float64)
    for axis in range(3):
        if source.shape[axis] == target.shape[axis]:
            continue
        values = _resample_axis(
            values, axis, source.cell_centers(axis), target.cell_centers(axis)
        )
    if mask is not None:
        if mask.grid != target:
            raise ResampleError("mask must live on the target grid")
        values[mask.solid] = 0.0
    return ScalarField(target, values.astype(field.values.dtype))


def downsample_mask(mask: BuildingMask, target: Grid3) -> BuildingMask:
    """Target cell is solid when the source cell holding its center is solid."""

    source = mask.grid
    _check_target(source, target)
    index = []
    for axis in range(3):
        raw = np.floor((target.cell_centers(axis) - source.origin[axis]) / source.spacing[axis])
        index.append(np.clip(raw.astype(np.int64), 0, source.shape[axis] - 1))
    solid = mask.solid[np.ix_(*index)]
    return BuildingMask(target, solid)


__all__ = [
    "ResampleError",
    "SplineCoeffs",
    "SplineError",
    "downsample",
    "downsample_mask",
    "eval_spline",
    "fit_spline",
]
