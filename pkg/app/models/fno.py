"""FNO architecture settings and the parameter container."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Literal, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

# The four retained (kx, ky) corners of the half spectrum: low/high x by low/high y.
CORNERS: tuple[tuple[str, str], ...] = (("lo", "lo"), ("hi", "lo"), ("lo", "hi"), ("hi", "hi"))


class ShapeMismatchError(ValueError):
    pass


class FnoConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    modes: int = Field(default=8, ge=1)
    width: int = Field(default=20, ge=1)
    layers: int = Field(default=4, ge=1)
    in_channels: int = Field(default=5, ge=1)
    out_channels: int = Field(default=1, ge=1)
    activation: Literal["gelu", "relu", "identity"] = "gelu"

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every trainable array, in serialization order."""

        w, m = self.width, self.modes
        shapes: dict[str, tuple[int, ...]] = {
            "lift.weight": (self.in_channels, w),
            "lift.bias": (w,),
        }
        for layer in range(self.layers):
            shapes[f"layers.{layer}.spectral.weight"] = (len(CORNERS), w, w, m, m, m, 2)
            shapes[f"layers.{layer}.pointwise.weight"] = (w, w)
            shapes[f"layers.{layer}.pointwise.bias"] = (w,)
        shapes["project.weight"] = (w, self.out_channels)
        shapes["project.bias"] = (self.out_channels,)
        return shapes


@dataclass
class FnoParameters:
    """Named trainable arrays.

    Spectral weights are stored as real pairs ``(..., 2)`` so every blob in a
    checkpoint is a plain real array; :meth:`spectral` returns the complex view.
    """

    config: FnoConfig
    arrays: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        expected = self.config.parameter_shapes()
        missing = sorted(set(expected) - set(self.arrays))
        extra = sorted(set(self.arrays) - set(expected))
        if missing or extra:
            raise ShapeMismatchError(f"parameter names differ: missing={missing} unexpected={extra}")
        problems = [
            f"{name}: expected {shape}, got {tuple(self.arrays[name].shape)}"
            for name, shape in expected.items()
            if tuple(self.arrays[name].shape) != shape
        ]
        if problems:
            raise ShapeMismatchError("parameter shapes differ: " + "; ".join(problems))
        for name, array in self.arrays.items():
            if not np.all(np.isfinite(array)):
                raise ShapeMismatchError(f"parameter {name} has non-finite entries")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.config.parameter_shapes())

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in self:
            yield name, self.arrays[name]

    @property
    def dtype(self) -> np.dtype:
        return self.arrays["lift.weight"].dtype

    def spectral(self, layer: int) -> np.ndarray:
        """Complex spectral weights of one layer, shape ``(4, w, w, m, m, m)``."""

        pair = self.arrays[f"layers.{layer}.spectral.weight"].astype(np.float64)
        return pair[..., 0] + 1j * pair[..., 1]

    def count(self) -> int:
        return int(sum(array.size for array in self.arrays.values()))

    def astype(self, dtype: np.dtype | type) -> "FnoParameters":
        return FnoParameters(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def copy(self) -> "FnoParameters":
        return FnoParameters(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def with_arrays(self, arrays: Mapping[str, np.ndarray]) -> "FnoParameters":
        return FnoParameters(self.config, dict(arrays))

    @classmethod
    def zeros(cls, config: FnoConfig, dtype: np.dtype | type = np.float32) -> "FnoParameters":
        return cls(config, {k: np.zeros(s, dtype=dtype) for k, s in config.parameter_shapes().items()})


__all__ = ["CORNERS", "FnoConfig", "FnoParameters", "ShapeMismatchError"]
