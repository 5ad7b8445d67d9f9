"""Channel-wise 3D real FFTs over the last three axes and their adjoints.

Forward transforms use the ``exp(-2 pi i k n / N)`` sign and no scaling; the
inverse carries the ``1/N``. Half-spectrum storage is along the last (z) axis.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

_AXES = (-3, -2, -1)


def rfft3(values: np.ndarray) -> np.ndarray:
    """``(..., X, Y, Z)`` real -> ``(..., X, Y, Z//2 + 1)`` complex."""

    return scipy.fft.rfftn(np.asarray(values, dtype=np.float64), axes=_AXES)


def irfft3(spectrum: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    return scipy.fft.irfftn(spectrum, s=shape, axes=_AXES)


def hermitian_weights(nz: int) -> np.ndarray:
    """Multiplicity of each stored kz plane in the full spectrum (1 or 2)."""

    weights = np.full(nz // 2 + 1, 2.0)
    weights[0] = 1.0
    if nz % 2 == 0:
        weights[-1] = 1.0
    return weights


def rfft3_adjoint(grad_spectrum: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Pull a complex gradient ``dL/dRe + i dL/dIm`` back through :func:`rfft3`."""

    n = shape[0] * shape[1] * shape[2]
    return n * scipy.fft.irfftn(grad_spectrum / hermitian_weights(shape[2]), s=shape, axes=_AXES)


def irfft3_adjoint(grad_values: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Complex gradient of the half spectrum given the gradient of :func:`irfft3` output."""

    n = shape[0] * shape[1] * shape[2]
    return hermitian_weights(shape[2]) / n * scipy.fft.rfftn(grad_values, axes=_AXES)


__all__ = ["hermitian_weights", "irfft3", "irfft3_adjoint", "rfft3", "rfft3_adjoint"]
