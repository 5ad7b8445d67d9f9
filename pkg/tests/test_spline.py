from __future__ import annotations

import numpy as np
import pytest

from app.models.grid import BuildingMask, Grid3, ScalarField
from app.services.spline import (
    ResampleError,
    SplineError,
    downsample,
    downsample_mask,
    eval_spline,
    fit_spline,
)


def test_spline_passes_through_knots(rng):
    xs = np.cumsum(rng.uniform(0.5, 1.5, 9))
    ys = rng.normal(size=9)
    coeffs = fit_spline(xs, ys)
    np.testing.assert_allclose(eval_spline(coeffs, xs), ys, atol=1e-12)


def test_linear_data_is_reproduced():
    xs = np.array([0.0, 0.5, 2.0, 3.0, 4.5])
    coeffs = fit_spline(xs, 3.0 * xs - 1.0)
    q = np.linspace(0.0, 4.5, 37)
    np.testing.assert_allclose(eval_spline(coeffs, q), 3.0 * q - 1.0, atol=1e-12)


def test_natural_end_conditions():
    xs = np.linspace(0.0, 1.0, 6)
    coeffs = fit_spline(xs, xs**3)
    second = coeffs.second_derivatives
    assert second[0] == pytest.approx(0.0, abs=1e-12)
    assert second[-1] == pytest.approx(0.0, abs=1e-12)


def test_error_shrinks_at_fourth_order():
    def max_error(n):
        xs = np.linspace(0.0, np.pi, n)
        coeffs = fit_spline(xs, np.sin(xs))
        q = np.linspace(0.0, np.pi, 1001)
        return np.abs(eval_spline(coeffs, q) - np.sin(q)).max()

    assert max_error(11) / max_error(21) >= 8.0


def test_two_knots_degrade_to_linear(caplog):
    coeffs = fit_spline(np.array([0.0, 2.0]), np.array([1.0, 5.0]))
    assert coeffs.degraded
    assert eval_spline(coeffs, 0.5) == pytest.approx(2.0)
    assert "linear" in caplog.text


def test_many_lines_share_knots(rng):
    xs = np.linspace(0.0, 1.0, 7)
    ys = rng.normal(size=(7, 3))
    together = eval_spline(fit_spline(xs, ys), np.array([0.1, 0.55]))
    for column in range(3):
        alone = eval_spline(fit_spline(xs, ys[:, column]), np.array([0.1, 0.55]))
        np.testing.assert_allclose(together[:, column], alone, atol=1e-12)


@pytest.mark.parametrize(
    "xs, ys",
    [
        (np.array([0.0]), np.array([1.0])),
        (np.array([0.0, 1.0, 1.0]), np.zeros(3)),
        (np.array([0.0, 1.0]), np.zeros(3)),
    ],
)
def test_invalid_knots(xs, ys):
    with pytest.raises(SplineError):
        fit_spline(xs, ys)


def test_evaluation_outside_knots_is_rejected():
    coeffs = fit_spline(np.linspace(0.0, 1.0, 4), np.zeros(4))
    with pytest.raises(SplineError):
        eval_spline(coeffs, 1.5)


def test_downsample_constant_field(small_grid):
    field = ScalarField(small_grid, np.full(small_grid.shape, 3.5))
    coarse = Grid3(4, 3, 5, 4.0, 4.0, 2.0)
    out = downsample(field, coarse)
    assert out.grid == coarse
    np.testing.assert_allclose(out.values, 3.5, atol=1e-12)


def test_downsample_linear_field_is_exact(small_grid):
    x = small_grid.cell_centers(0)
    field = ScalarField(small_grid, np.broadcast_to(x[:, None, None], small_grid.shape).copy())
    coarse = Grid3(4, 6, 5, 4.0, 2.0, 2.0)
    out = downsample(field, coarse)
    expected = np.broadcast_to(coarse.cell_centers(0)[:, None, None], coarse.shape)
    np.testing.assert_allclose(out.values, expected, atol=1e-12)


def test_unchanged_axes_pass_through(small_grid, rng):
    field = ScalarField(small_grid, rng.normal(size=small_grid.shape))
    np.testing.assert_array_equal(downsample(field, small_grid).values, field.values)


def test_downsample_zeroes_solids(small_grid, block_mask):
    coarse = Grid3(4, 3, 5, 4.0, 4.0, 2.0)
    field = ScalarField(small_grid, np.ones(small_grid.shape))
    coarse_mask = downsample_mask(block_mask, coarse)
    out = downsample(field, coarse, coarse_mask)
    assert np.all(out.values[coarse_mask.solid] == 0.0)
    with pytest.raises(ResampleError):
        downsample(field, coarse, block_mask)


def test_downsample_mask_samples_cell_centers(block_mask):
    coarse = Grid3(4, 3, 5, 4.0, 4.0, 2.0)
    mask = downsample_mask(block_mask, coarse)
    assert mask.solid.sum() == 2
    assert mask.solid[1, 1, 0] and mask.solid[1, 1, 1]


def test_upsampling_and_other_domains_are_refused(small_grid):
    field = ScalarField(small_grid, np.zeros(small_grid.shape))
    with pytest.raises(ResampleError):
        downsample(field, Grid3(16, 6, 5, 1.0, 2.0, 2.0))
    with pytest.raises(ResampleError):
        downsample(field, Grid3(4, 3, 5, 2.0, 2.0, 2.0))
    with pytest.raises(ResampleError):
        downsample_mask(BuildingMask.empty(small_grid), Grid3(4, 3, 5, 2.0, 2.0, 2.0))


def test_second_derivatives_match_dense_solve():
    xs = np.array([0.0, 0.7, 1.5, 3.0])
    ys = np.array([1.0, -0.4, 2.2, 0.3])
    h = np.diff(xs)
    slope = np.diff(ys) / h
    system = np.zeros((4, 4))
    rhs = np.zeros(4)
    system[0, 0] = system[3, 3] = 1.0
    for i in (1, 2):
        system[i, i - 1 : i + 2] = [h[i - 1], 2.0 * (h[i - 1] + h[i]), h[i]]
        rhs[i] = 6.0 * (slope[i] - slope[i - 1])
    expected = np.linalg.solve(system, rhs)
    np.testing.assert_allclose(fit_spline(xs, ys).second_derivatives, expected, atol=1e-12)


def test_pieces_join_with_continuous_second_derivative(rng):
    xs = np.cumsum(rng.uniform(0.3, 1.2, 8))
    c = fit_spline(xs, rng.normal(size=8))
    h = np.diff(xs)[:-1]
    left, right = slice(None, -1), slice(1, None)
    value = c.a[left] + c.b[left] * h + c.c[left] * h**2 + c.d[left] * h**3
    slope = c.b[left] + 2.0 * c.c[left] * h + 3.0 * c.d[left] * h**2
    curvature = 2.0 * c.c[left] + 6.0 * c.d[left] * h
    np.testing.assert_allclose(value, c.a[right], atol=1e-12)
    np.testing.assert_allclose(slope, c.b[right], atol=1e-12)
    np.testing.assert_allclose(curvature, 2.0 * c.c[right], atol=1e-12)


def test_downsample_error_shrinks_near_eighth_per_halving():
    length = 64.0

    def max_error(n_fine):
        fine = Grid3(n_fine, 4, 4, length / n_fine, 1.0, 1.0)
        coarse = Grid3(n_fine // 2, 4, 4, 2 * length / n_fine, 1.0, 1.0)
        wave = np.sin(2 * np.pi * fine.cell_centers(0) / length)
        field = ScalarField(fine, np.broadcast_to(wave[:, None, None], fine.shape).copy())
        out = downsample(field, coarse)
        exact = np.sin(2 * np.pi * coarse.cell_centers(0) / length)
        return np.abs(out.values - exact[:, None, None]).max()

    coarse_error, fine_error = max_error(32), max_error(64)
    assert coarse_error < 1e-3
    assert coarse_error / fine_error >= 8.0
