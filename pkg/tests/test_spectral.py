from __future__ import annotations

import numpy as np
import pytest

from app.services.spectral import (
    hermitian_weights,
    irfft3,
    irfft3_adjoint,
    rfft3,
    rfft3_adjoint,
)


def _naive_rdft(values):
    nx, ny, nz = values.shape
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    out = np.zeros((nx, ny, nz // 2 + 1), dtype=np.complex128)
    for kx in range(nx):
        for ky in range(ny):
            for kz in range(nz // 2 + 1):
                phase = np.exp(-2j * np.pi * (kx * ix / nx + ky * iy / ny + kz * iz / nz))
                out[kx, ky, kz] = np.sum(values * phase)
    return out


@pytest.mark.parametrize("shape", [(2, 2, 2), (3, 4, 5), (8, 8, 8)])
def test_rfft3_matches_direct_sum(shape, rng):
    values = rng.normal(size=shape)
    np.testing.assert_allclose(rfft3(values), _naive_rdft(values), atol=1e-9)


def test_channels_are_transformed_independently(rng):
    values = rng.normal(size=(3, 4, 4, 6))
    spectrum = rfft3(values)
    assert spectrum.shape == (3, 4, 4, 4)
    np.testing.assert_allclose(spectrum[1], rfft3(values[1]), atol=1e-12)


@pytest.mark.parametrize("shape", [(4, 4, 4), (5, 3, 7)])
def test_round_trip(shape, rng):
    values = rng.normal(size=shape)
    np.testing.assert_allclose(irfft3(rfft3(values), shape), values, atol=1e-12)


def test_parseval(rng):
    shape = (4, 6, 8)
    values = rng.normal(size=shape)
    spectrum = rfft3(values)
    weights = hermitian_weights(shape[2])
    energy = np.sum(weights * np.abs(spectrum) ** 2) / np.prod(shape)
    assert energy == pytest.approx(np.sum(values**2), rel=1e-12)


def test_hermitian_weights():
    np.testing.assert_array_equal(hermitian_weights(6), [1, 2, 2, 1])
    np.testing.assert_array_equal(hermitian_weights(5), [1, 2, 2])


def _real_inner(a, b):
    return float(np.sum(a.real * b.real + a.imag * b.imag))


@pytest.mark.parametrize("shape", [(4, 4, 6), (3, 5, 5)])
def test_rfft3_adjoint_dot_product(shape, rng):
    x = rng.normal(size=shape)
    g = rng.normal(size=shape[:2] + (shape[2] // 2 + 1,)) + 1j * rng.normal(
        size=shape[:2] + (shape[2] // 2 + 1,)
    )
    lhs = _real_inner(rfft3(x), g)
    rhs = float(np.sum(x * rfft3_adjoint(g, shape)))
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("shape", [(4, 4, 6), (3, 5, 5)])
def test_irfft3_adjoint_dot_product(shape, rng):
    # a spectrum that comes from a real field, so irfft3 is a true inverse on it
    spectrum = rfft3(rng.normal(size=shape))
    g = rng.normal(size=shape)
    lhs = float(np.sum(irfft3(spectrum, shape) * g))
    rhs = _real_inner(spectrum, irfft3_adjoint(g, shape))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_transforms_are_linear(rng):
    a, b = rng.normal(size=(2, 6, 4, 5))
    np.testing.assert_allclose(rfft3(2.0 * a - 3.0 * b), 2.0 * rfft3(a) - 3.0 * rfft3(b), atol=1e-10)
    spectrum = rfft3(a) + 1j * rfft3(b)
    shape = a.shape
    combined = irfft3(0.5 * rfft3(a) + rfft3(b), shape)
    np.testing.assert_allclose(combined, 0.5 * a + b, atol=1e-12)
    np.testing.assert_allclose(
        irfft3(2.0 * spectrum, shape), 2.0 * irfft3(spectrum, shape), atol=1e-12
    )
