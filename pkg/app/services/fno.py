"""Fourier Neural Operator forward pass (numpy, float64 compute).

Tensors are channel-first ``(C, X, Y, Z)``. A forward pass lifts the input
channels to ``width`` with ``P``, applies ``layers`` Fourier layers
``sigma(W v + b + K(v))`` where ``K`` mixes channels on the retained Fourier
modes, and projects back with ``Q``. Nothing follows ``Q``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from app.core.metrics import SURROGATE_FORWARD_SECONDS
from app.models.fno import CORNERS, FnoConfig, FnoParameters, ShapeMismatchError
from app.services.spectral import irfft3, rfft3

logger = logging.getLogger(__name__)

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
REFERENCE_PARAMETER_COUNT = 6_560_581


class NyquistError(ValueError):
    pass


def check_nyquist(modes: int, shape: tuple[int, int, int]) -> None:
    nx, ny, nz = shape
    if 2 * modes > nx or 2 * modes > ny or modes > nz // 2 + 1:
        raise NyquistError(
            f"{modes} modes need at least {2 * modes}x{2 * modes}x{max(2, 2 * modes - 2)} cells, "
            f"got {nx}x{ny}x{nz}"
        )


def corner_slices(modes: int, shape: tuple[int, int, int]) -> list[tuple[slice, slice, slice]]:
    nx, ny, _ = shape
    pick = {
        0: {"lo": slice(0, modes), "hi": slice(nx - modes, nx)},
        1: {"lo": slice(0, modes), "hi": slice(ny - modes, ny)},
    }
    return [(pick[0][cx], pick[1][cy], slice(0, modes)) for cx, cy in CORNERS]


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "gelu":
        return 0.5 * z * (1.0 + erf(z / _SQRT2))
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "gelu":
        return 0.5 * (1.0 + erf(z / _SQRT2)) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def param_count(config: FnoConfig) -> int:
    """Trainable real scalars; a complex weight counts twice."""

    return int(sum(np.prod(shape) for shape in config.parameter_shapes().values()))


def init_parameters(
    config: FnoConfig, seed: int = 0, dtype: np.dtype | type = np.float32
) -> FnoParameters:
    """Fan-in uniform init for the pointwise maps, ``U[0, 1) / (w * w)`` for spectral weights."""

    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    w = config.width
    for name, shape in config.parameter_shapes().items():
        if name.endswith("spectral.weight"):
            values = rng.random(shape) / (w * w)
        else:
            fan_in = config.in_channels if name.startswith("lift") else w
            bound = 1.0 / np.sqrt(fan_in)
            values = rng.uniform(-bound, bound, size=shape)
        arrays[name] = values.astype(dtype)
    return FnoParameters(config, arrays)


def pointwise(v: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-cell channel map ``out[o] = sum_i v[i] weight[i, o] + bias[o]``."""

    return np.einsum("ixyz,io->oxyz", v, weight, optimize=True) + bias[:, None, None, None]


def spectral_conv(v: np.ndarray, weights: np.ndarray, spectrum: np.ndarray | None = None) -> np.ndarray:
    """Mix channels on the retained corner modes; every other mode is dropped.

    ``weights`` is complex ``(4, in, out, m, m, m)``.
    """

    shape = v.shape[1:]
    modes = weights.shape[-1]
    check_nyquist(modes, shape)
    if spectrum is None:
        spectrum = rfft3(v)
    out = np.zeros((weights.shape[2],) + spectrum.shape[1:], dtype=np.complex128)
    for corner, block in enumerate(corner_slices(modes, shape)):
        out[(slice(None),) + block] = np.einsum(
            "ixyz,ioxyz->oxyz", spectrum[(slice(None),) + block], weights[corner], optimize=True
        )
    return irfft3(out, shape)


def fourier_layer(
    v: np.ndarray,
    spectral_weights: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    activation: str = "gelu",
) -> np.ndarray:
    if v.shape[0] != weight.shape[0]:
        raise ShapeMismatchError(f"layer expects {weight.shape[0]} channels, got {v.shape[0]}")
    return activate(activation, pointwise(v, weight, bias) + spectral_conv(v, spectral_weights))


@dataclass
class ForwardTrace:
    """Intermediate values kept for the backward pass."""

    inputs: np.ndarray
    hidden: list[np.ndarray] = field(default_factory=list)  # v_0 .. v_L
    spectra: list[np.ndarray] = field(default_factory=list)  # rfft3(v_l)
    pre_activations: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None


def _check_input(a: np.ndarray, config: FnoConfig) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 4:
        raise ShapeMismatchError(f"input must be (channels, X, Y, Z), got shape {a.shape}")
    if a.shape[0] != config.in_channels:
        raise ShapeMismatchError(f"model expects {config.in_channels} channels, got {a.shape[0]}")
    check_nyquist(config.modes, a.shape[1:])
    if not np.all(np.isfinite(a)):
        raise ShapeMismatchError("input contains non-finite values")
    return a


def forward_with_trace(a: np.ndarray, params: FnoParameters) -> ForwardTrace:
    config = params.config
    a = _check_input(a, config)
    trace = ForwardTrace(inputs=a)
    p = {name: array.astype(np.float64) for name, array in params.items()}
    v = pointwise(a, p["lift.weight"], p["lift.bias"])
    trace.hidden.append(v)
    for layer in range(config.layers):
        spectrum = rfft3(v)
        z = pointwise(v, p[f"layers.{layer}.pointwise.weight"], p[f"layers.{layer}.pointwise.bias"])
        z = z + spectral_conv(v, params.spectral(layer), spectrum=spectrum)
        v = activate(config.activation, z)
        trace.spectra.append(spectrum)
        trace.pre_activations.append(z)
        trace.hidden.append(v)
    trace.output = pointwise(v, p["project.weight"], p["project.bias"])
    return trace


def forward(a: np.ndarray, params: FnoParameters) -> np.ndarray:
    """``(in_channels, X, Y, Z)`` -> ``(out_channels, X, Y, Z)`` on any grid meeting the mode limit."""

    started = time.perf_counter()
    config = params.config
    a = _check_input(a, config)
    p = {name: array.astype(np.float64) for name, array in params.items()}
    v = pointwise(a, p["lift.weight"], p["lift.bias"])
    for layer in range(config.layers):
        v = fourier_layer(
            v,
            params.spectral(layer),
            p[f"layers.{layer}.pointwise.weight"],
            p[f"layers.{layer}.pointwise.bias"],
            config.activation,
        )
    out = pointwise(v, p["project.weight"], p["project.bias"])
    SURROGATE_FORWARD_SECONDS.observe(time.perf_counter() - started)
    return out


def log_parameter_count(config: FnoConfig) -> int:
    count = param_count(config)
    logger.info(
        "FNO parameters: %d (reference figure %d, delta %+d)",
        count,
        REFERENCE_PARAMETER_COUNT,
        count - REFERENCE_PARAMETER_COUNT,
    )
    return count


__all__ = [
    "ForwardTrace",
    "NyquistError",
    "REFERENCE_PARAMETER_COUNT",
    "activate",
    "activation_grad",
    "check_nyquist",
    "corner_slices",
    "forward",
    "forward_with_trace",
    "fourier_layer",
    "init_parameters",
    "log_parameter_count",
    "param_count",
    "pointwise",
    "spectral_conv",
]
