"""Adam with bias correction over named parameter arrays."""

from __future__ import annotations

from typing import Mapping, TypeVar

import numpy as np

from app.models.fno import FnoParameters, ShapeMismatchError
from app.models.training import AdamState

P = TypeVar("P", FnoParameters, dict)


def adam_step(
    params: P,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[P, AdamState]:
    """One update; moments are float64, parameters keep their own dtype."""

    arrays = dict(params.items()) if isinstance(params, FnoParameters) else dict(params)
    if set(arrays) != set(grads):
        raise ShapeMismatchError(
            f"gradient names differ from parameters: {sorted(set(arrays) ^ set(grads))}"
        )
    step = state.step + 1
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step
    new_arrays: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, value in arrays.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name, np.zeros(value.shape))
        v = state.v.get(name, np.zeros(value.shape))
        if grad.shape != value.shape or m.shape != value.shape or v.shape != value.shape:
            raise ShapeMismatchError(
                f"{name}: parameter {value.shape}, gradient {grad.shape}, moments {m.shape}/{v.shape}"
            )
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        new_arrays[name] = (value.astype(np.float64) - update).astype(value.dtype)
        new_m[name] = m
        new_v[name] = v

    new_state = AdamState(m=new_m, v=new_v, step=step)
    if isinstance(params, FnoParameters):
        return params.with_arrays(new_arrays), new_state
    return new_arrays, new_state


__all__ = ["adam_step"]
