"""Layer-wise relative loss and reverse-mode gradients through the FNO."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from app.models.fno import FnoParameters, ShapeMismatchError
from app.services.fno import ForwardTrace, activation_grad, corner_slices, forward, forward_with_trace
from app.services.spectral import irfft3_adjoint, rfft3_adjoint

logger = logging.getLogger(__name__)


class LossError(ValueError):
    pass


class GradientError(ArithmeticError):
    pass


def _as_volume(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 4 and values.shape[0] == 1:
        values = values[0]
    if values.ndim != 3:
        raise ShapeMismatchError(f"expected an (X, Y, Z) volume, got shape {values.shape}")
    return values


def _layer_terms(pred: np.ndarray, truth: np.ndarray):
    u = _as_volume(pred)
    v = _as_volume(truth)
    if u.shape != v.shape:
        raise ShapeMismatchError(f"prediction {u.shape} and truth {v.shape} differ")
    diff = u - v
    err = np.sum(diff * diff, axis=(0, 1))
    ref = np.sum(v * v, axis=(0, 1))
    valid = ref > 0
    if not valid.any():
        raise LossError("every z-layer of the target has zero norm")
    return diff, err, ref, valid


def layerwise_relative_loss(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean over z-layers of ``||u - v|| / ||v||``; layers where ``v`` is all zero are skipped."""

    _, err, ref, valid = _layer_terms(pred, truth)
    return float(np.mean(np.sqrt(err[valid] / ref[valid])))


def loss_gradient(pred: np.ndarray, truth: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``pred`` (shape ``(X, Y, Z)``)."""

    diff, err, ref, valid = _layer_terms(pred, truth)
    loss = float(np.mean(np.sqrt(err[valid] / ref[valid])))
    scale = np.zeros_like(err)
    usable = valid & (err > 0)
    scale[usable] = 1.0 / (np.sqrt(err[usable] * ref[usable]) * valid.sum())
    return loss, diff * scale[None, None, :]


def backward(trace: ForwardTrace, grad_output: np.ndarray, params: FnoParameters) -> dict[str, np.ndarray]:
    """Gradients of every named parameter given ``dL/d output``."""

    config = params.config
    shape = trace.inputs.shape[1:]
    grad_output = np.asarray(grad_output, dtype=np.float64).reshape((config.out_channels,) + shape)
    p = {name: array.astype(np.float64) for name, array in params.items()}
    grads: dict[str, np.ndarray] = {}

    top = trace.hidden[-1]
    grads["project.weight"] = np.einsum("ixyz,oxyz->io", top, grad_output, optimize=True)
    grads["project.bias"] = grad_output.sum(axis=(1, 2, 3))
    g_v = np.einsum("io,oxyz->ixyz", p["project.weight"], grad_output, optimize=True)

    blocks = corner_slices(config.modes, shape)
    for layer in reversed(range(config.layers)):
        v_in = trace.hidden[layer]
        g_z = g_v * activation_grad(config.activation, trace.pre_activations[layer])
        weight = p[f"layers.{layer}.pointwise.weight"]
        grads[f"layers.{layer}.pointwise.weight"] = np.einsum(
            "ixyz,oxyz->io", v_in, g_z, optimize=True
        )
        grads[f"layers.{layer}.pointwise.bias"] = g_z.sum(axis=(1, 2, 3))
        g_prev = np.einsum("io,oxyz->ixyz", weight, g_z, optimize=True)

        g_out_spec = irfft3_adjoint(g_z, shape)
        spectrum = trace.spectra[layer]
        spectral = params.spectral(layer)
        g_spectral = np.zeros(spectral.shape, dtype=np.complex128)
        g_in_spec = np.zeros_like(spectrum)
        for corner, block in enumerate(blocks):
            index = (slice(None),) + block
            g_block = g_out_spec[index]
            g_spectral[corner] = np.einsum(
                "ixyz,oxyz->ioxyz", np.conj(spectrum[index]), g_block, optimize=True
            )
            g_in_spec[index] += np.einsum(
                "ioxyz,oxyz->ixyz", np.conj(spectral[corner]), g_block, optimize=True
            )
        grads[f"layers.{layer}.spectral.weight"] = np.stack(
            [g_spectral.real, g_spectral.imag], axis=-1
        )
        g_v = g_prev + rfft3_adjoint(g_in_spec, shape)

    grads["lift.weight"] = np.einsum("ixyz,oxyz->io", trace.inputs, g_v, optimize=True)
    grads["lift.bias"] = g_v.sum(axis=(1, 2, 3))

    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise GradientError(f"non-finite gradient in parameter group {name}")
    return {name: grads[name] for name in params}


def loss_and_gradients(
    inputs: np.ndarray, target: np.ndarray, params: FnoParameters
) -> tuple[float, dict[str, np.ndarray]]:
    trace = forward_with_trace(inputs, params)
    loss, g_out = loss_gradient(trace.output, target)
    return loss, backward(trace, g_out, params)


def accumulate_gradients(
    samples: Iterable[tuple[np.ndarray, np.ndarray]], params: FnoParameters
) -> tuple[float, dict[str, np.ndarray], int]:
    """Summed loss and gradients over ``samples``; returns the sample count too."""

    total_loss = 0.0
    total: dict[str, np.ndarray] | None = None
    count = 0
    for inputs, target in samples:
        loss, grads = loss_and_gradients(inputs, target, params)
        total_loss += loss
        if total is None:
            total = grads
        else:
            for name in total:
                total[name] += grads[name]
        count += 1
    if total is None:
        raise LossError("no samples to accumulate")
    return total_loss, total, count


@dataclass
class GradientCheckReport:
    max_relative_error: dict[str, float]
    checked: int

    @property
    def worst(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.worst <= tolerance


def gradient_check(
    inputs: np.ndarray,
    target: np.ndarray,
    params: FnoParameters,
    names: Sequence[str] | None = None,
    rel_step: float = 1e-5,
    max_per_group: int | None = None,
    seed: int = 0,
) -> GradientCheckReport:
    """Compare reverse-mode gradients against central differences, in float64."""

    params64 = params.astype(np.float64)
    _, analytic = loss_and_gradients(inputs, target, params64)
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    checked = 0

    def loss_at(arrays: dict[str, np.ndarray]) -> float:
        out = forward(inputs, params64.with_arrays(arrays))
        return layerwise_relative_loss(out, target)

    arrays = {name: array.copy() for name, array in params64.items()}
    for name in names or list(params64):
        flat = arrays[name].reshape(-1)
        positions = np.arange(flat.size)
        if max_per_group is not None and flat.size > max_per_group:
            positions = rng.choice(flat.size, size=max_per_group, replace=False)
        grad = analytic[name].reshape(-1)
        errors = []
        for pos in positions:
            original = flat[pos]
            step = rel_step * max(1.0, abs(original))
            flat[pos] = original + step
            plus = loss_at(arrays)
            flat[pos] = original - step
            minus = loss_at(arrays)
            flat[pos] = original
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(grad[pos]), abs(numeric), 1e-6)
            errors.append(abs(grad[pos] - numeric) / denom)
            checked += 1
        worst[name] = float(max(errors)) if errors else 0.0
        logger.debug("Gradient check %s: max relative error %.2e", name, worst[name])
    return GradientCheckReport(worst, checked)


__all__ = [
    "GradientCheckReport",
    "GradientError",
    "LossError",
    "accumulate_gradients",
    "backward",
    "gradient_check",
    "layerwise_relative_loss",
    "loss_and_gradients",
    "loss_gradient",
]
