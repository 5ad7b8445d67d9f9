from __future__ import annotations

import numpy as np
import pytest

from app.models.fno import FnoConfig, FnoParameters, ShapeMismatchError
from app.services.fno import (
    NyquistError,
    check_nyquist,
    corner_slices,
    forward,
    forward_with_trace,
    init_parameters,
    param_count,
    spectral_conv,
)


def test_default_parameter_count():
    assert param_count(FnoConfig()) == 6_555_421
    assert init_parameters(FnoConfig(modes=2, width=3)).count() == param_count(
        FnoConfig(modes=2, width=3)
    )


def test_smallest_parameter_count():
    assert param_count(FnoConfig(modes=1, width=1, layers=1, in_channels=1)) == 14


@pytest.mark.parametrize(
    "modes, shape, ok",
    [(8, (32, 32, 16), True), (8, (16, 16, 14), True), (8, (15, 16, 16), False), (3, (6, 6, 2), False)],
)
def test_nyquist_limit(modes, shape, ok):
    if ok:
        check_nyquist(modes, shape)
    else:
        with pytest.raises(NyquistError):
            check_nyquist(modes, shape)


def _spectral_conv_by_loops(v, weights):
    """Same operation, written out mode by mode."""

    c_in, nx, ny, nz = v.shape
    c_out = weights.shape[2]
    m = weights.shape[-1]
    spectrum = np.stack([np.fft.rfftn(v[i]) for i in range(c_in)])
    out = np.zeros((c_out,) + spectrum.shape[1:], dtype=np.complex128)
    x_starts = {"lo": 0, "hi": nx - m}
    y_starts = {"lo": 0, "hi": ny - m}
    for corner, (cx, cy) in enumerate((("lo", "lo"), ("hi", "lo"), ("lo", "hi"), ("hi", "hi"))):
        for a in range(m):
            for b in range(m):
                for c in range(m):
                    kx, ky = x_starts[cx] + a, y_starts[cy] + b
                    for o in range(c_out):
                        for i in range(c_in):
                            out[o, kx, ky, c] += spectrum[i, kx, ky, c] * weights[corner, i, o, a, b, c]
    return np.stack([np.fft.irfftn(out[o], s=(nx, ny, nz)) for o in range(c_out)])


def test_spectral_conv_matches_mode_loops(rng):
    v = rng.normal(size=(2, 8, 6, 6))
    weights = rng.normal(size=(4, 2, 3, 2, 2, 2)) + 1j * rng.normal(size=(4, 2, 3, 2, 2, 2))
    np.testing.assert_allclose(spectral_conv(v, weights), _spectral_conv_by_loops(v, weights), atol=1e-10)


def test_corner_slices_cover_small_spectrum():
    slices = corner_slices(2, (4, 4, 2))
    covered = np.zeros((4, 4, 2), dtype=int)
    for block in slices:
        covered[block] += 1
    assert np.all(covered == 1)


def test_identity_weights_on_full_spectrum(rng):
    v = rng.normal(size=(1, 4, 4, 2))
    weights = np.ones((4, 1, 1, 2, 2, 2), dtype=np.complex128)
    np.testing.assert_allclose(spectral_conv(v, weights), v, atol=1e-12)


def test_forward_shapes_and_trace(tiny_config, rng):
    params = init_parameters(tiny_config, seed=3)
    a = rng.normal(size=(5, 4, 4, 4))
    out = forward(a, params)
    assert out.shape == (1, 4, 4, 4)
    trace = forward_with_trace(a, params)
    np.testing.assert_allclose(trace.output, out, atol=1e-12)
    assert len(trace.hidden) == tiny_config.layers + 1
    assert len(trace.spectra) == tiny_config.layers


def test_forward_is_deterministic_per_seed(tiny_config, rng):
    a = rng.normal(size=(5, 4, 4, 4))
    first = forward(a, init_parameters(tiny_config, seed=9))
    again = forward(a, init_parameters(tiny_config, seed=9))
    other = forward(a, init_parameters(tiny_config, seed=10))
    np.testing.assert_array_equal(first, again)
    assert not np.allclose(first, other)


def test_forward_rejects_bad_inputs(tiny_config):
    params = init_parameters(tiny_config)
    with pytest.raises(ShapeMismatchError):
        forward(np.zeros((4, 4, 4, 4)), params)
    with pytest.raises(ShapeMismatchError):
        forward(np.zeros((5, 4, 4)), params)
    bad = np.zeros((5, 4, 4, 4))
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ShapeMismatchError):
        forward(bad, params)
    with pytest.raises(NyquistError):
        forward(np.zeros((5, 3, 4, 4)), params)


def test_parameters_validate_shapes(tiny_config):
    arrays = dict(init_parameters(tiny_config).items())
    arrays["lift.bias"] = np.zeros(3)
    with pytest.raises(ShapeMismatchError):
        FnoParameters(tiny_config, arrays)
    del arrays["lift.bias"]
    with pytest.raises(ShapeMismatchError):
        FnoParameters(tiny_config, arrays)


def _band_limited(n):
    x, y, z = np.meshgrid(*(np.arange(n) / n,) * 3, indexing="ij")
    return (
        np.cos(2 * np.pi * x)
        + 0.5 * np.sin(2 * np.pi * 2 * y)
        + 0.25 * np.cos(2 * np.pi * (x + 2 * z))
        - 0.3 * np.sin(2 * np.pi * (y - z))
    )


def test_same_weights_on_two_resolutions():
    config = FnoConfig(modes=3, width=2, layers=2, in_channels=1, activation="identity")
    params = init_parameters(config, seed=5, dtype=np.float64)
    coarse = forward(_band_limited(8)[None], params)
    fine = forward(_band_limited(16)[None], params)
    np.testing.assert_allclose(fine[:, ::2, ::2, ::2], coarse, atol=1e-9)


def test_spectral_conv_superposes(rng):
    a, b = rng.normal(size=(2, 2, 8, 6, 6))
    weights = rng.normal(size=(4, 2, 3, 2, 2, 2)) + 1j * rng.normal(size=(4, 2, 3, 2, 2, 2))
    np.testing.assert_allclose(
        spectral_conv(a + b, weights),
        spectral_conv(a, weights) + spectral_conv(b, weights),
        atol=1e-12,
    )


@pytest.mark.parametrize("shift", [(1, 0, 0), (0, 3, 0), (2, 1, 5)])
def test_forward_commutes_with_periodic_shifts(shift, rng):
    config = FnoConfig(modes=3, width=4, layers=2, in_channels=5)
    params = init_parameters(config, seed=5, dtype=np.float64)
    a = rng.normal(size=(5, 8, 8, 8))
    axes = (1, 2, 3)
    rolled_then_mapped = forward(np.roll(a, shift, axis=axes), params)
    mapped_then_rolled = np.roll(forward(a, params), shift, axis=axes)
    np.testing.assert_allclose(rolled_then_mapped, mapped_then_rolled, atol=1e-8)
