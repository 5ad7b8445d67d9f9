"""Sliding-window sampling, train/test split, masking and input normalization."""

from __future__ import annotations

import logging
from collections import OrderedDict
from pathlib import Path
from typing import Sequence

import numpy as np

from app.core.config import settings
from app.models.dataset import DatasetManifest, NormStats, SampleWindow
from app.models.grid import BuildingMask, GridError, ScalarField
from app.services.field_io import read_field, read_mask

logger = logging.getLogger(__name__)


class WindowError(ValueError):
    pass


def make_windows(t_total: int, window: int = 6, stride: int = 2) -> list[SampleWindow]:
    """Slide a ``window``-step frame by ``stride``; the last step of each frame is the target."""

    if window < 2:
        raise WindowError(f"window must be >= 2, got {window}")
    if stride < 1:
        raise WindowError(f"stride must be >= 1, got {stride}")
    if t_total < window:
        raise WindowError(f"{t_total} time steps cannot fill a window of {window}")
    count = (t_total - window) // stride + 1
    return [
        SampleWindow(
            input_indices=tuple(range(start, start + window - 1)),
            target_index=start + window - 1,
        )
        for start in (i * stride for i in range(count))
    ]


def split_indices(total: int, n_train: int, seed: int) -> tuple[list[int], list[int]]:
    """Random train/test partition of ``range(total)``, reproducible for a given seed."""

    if not 0 < n_train < total:
        raise WindowError(f"n_train must be in (0, {total}), got {n_train}")
    order = np.random.default_rng(seed).permutation(total)
    train = sorted(int(i) for i in order[:n_train])
    test = sorted(int(i) for i in order[n_train:])
    return train, test


def split_dataset(
    windows: Sequence[SampleWindow], n_train: int, seed: int
) -> tuple[list[SampleWindow], list[SampleWindow]]:
    """The windows themselves, partitioned as ``split_indices`` does."""

    train, test = split_indices(len(windows), n_train, seed)
    return [windows[i] for i in train], [windows[i] for i in test]


def apply_mask(field: ScalarField, mask: BuildingMask) -> ScalarField:
    if field.grid != mask.grid:
        raise GridError(
            f"mask grid {mask.grid.describe()} differs from field grid {field.grid.describe()}"
        )
    values = np.array(field.values, copy=True)
    values[mask.solid] = 0
    return field.with_values(values)


def _check_stats(stats: NormStats) -> None:
    if not stats.std > 0:
        raise WindowError("normalization needs a positive standard deviation")


def normalize_array(values: np.ndarray, stats: NormStats) -> np.ndarray:
    _check_stats(stats)
    return (values - stats.mean) / stats.std


def denormalize_array(values: np.ndarray, stats: NormStats) -> np.ndarray:
    _check_stats(stats)
    return values * stats.std + stats.mean


def normalize(field: ScalarField, stats: NormStats) -> ScalarField:
    return field.with_values(normalize_array(field.values.astype(np.float64), stats))


def denormalize(field: ScalarField, stats: NormStats) -> ScalarField:
    return field.with_values(denormalize_array(field.values.astype(np.float64), stats))


def compute_norm_stats(
    fields: Sequence[ScalarField | np.ndarray],
    windows: Sequence[SampleWindow],
    mask: BuildingMask | None = None,
) -> NormStats:
    """Mean/std over fluid cells of every time index referenced by ``windows``."""

    indices = sorted({i for w in windows for i in w.indices})
    if not indices:
        raise WindowError("no windows to compute statistics from")
    fluid = None if mask is None else mask.fluid
    total = 0.0
    total_sq = 0.0
    count = 0
    for index in indices:
        item = fields[index]
        values = np.asarray(getattr(item, "values", item), dtype=np.float64)
        sample = values if fluid is None else values[fluid]
        total += float(sample.sum())
        total_sq += float(np.square(sample).sum())
        count += sample.size
    mean = total / count
    variance = max(total_sq / count - mean * mean, 0.0)
    std = float(np.sqrt(variance))
    if std == 0.0:
        logger.warning("Training fields are constant (mean %.6g); using unit std", mean)
        std = 1.0
    return NormStats(mean=mean, std=std)


class WindowDataset:
    """Indexable view over a manifest's windows: ``(inputs[C, X, Y, Z], target[X, Y, Z])``.

    Field files are decoded lazily through a small LRU cache shared by all windows.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        root: str | Path,
        subset: str = "all",
        cache_size: int | None = None,
        norm: NormStats | None = None,
    ) -> None:
        self.manifest = manifest
        self.root = Path(root)
        self.norm = norm or manifest.norm
        if subset == "train":
            self.window_ids = list(manifest.train)
        elif subset == "test":
            self.window_ids = list(manifest.test)
        elif subset == "all":
            self.window_ids = list(range(len(manifest.windows)))
        else:
            raise WindowError(f"unknown subset {subset!r}")
        self.cache_size = cache_size or settings.field_cache_size
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.mask = read_mask(self.root / manifest.mask) if manifest.mask else None

    def __len__(self) -> int:
        return len(self.window_ids)

    def field(self, index: int) -> np.ndarray:
        cached = self._cache.get(index)
        if cached is not None:
            self._cache.move_to_end(index)
            return cached
        values = np.asarray(read_field(self.root / self.manifest.fields[index]).values, dtype=np.float64)
        self._cache[index] = values
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return values

    def window(self, position: int) -> SampleWindow:
        return self.manifest.windows[self.window_ids[position]]

    def __getitem__(self, position: int) -> tuple[np.ndarray, np.ndarray]:
        window = self.window(position)
        inputs = np.stack([self.field(i) for i in window.input_indices])
        if self.manifest.normalize_inputs:
            inputs = normalize_array(inputs, self.norm)
        return inputs, self.field(window.target_index)

    def __iter__(self):
        for position in range(len(self)):
            yield self[position]


class InMemoryWindows:
    """Windows already held as arrays, for synthetic data and scenario sequences."""

    def __init__(self, samples: Sequence[tuple[np.ndarray, np.ndarray]]) -> None:
        self.samples = [
            (np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)) for x, y in samples
        ]

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, position: int) -> tuple[np.ndarray, np.ndarray]:
        return self.samples[position]

    def __iter__(self):
        return iter(self.samples)

    @classmethod
    def from_sequence(
        cls,
        stack: np.ndarray,
        windows: Sequence[SampleWindow],
        norm: NormStats | None = None,
    ) -> "InMemoryWindows":
        samples = []
        for window in windows:
            inputs = stack[list(window.input_indices)].astype(np.float64)
            if norm is not None:
                inputs = normalize_array(inputs, norm)
            samples.append((inputs, stack[window.target_index].astype(np.float64)))
        return cls(samples)


__all__ = [
    "InMemoryWindows",
    "WindowDataset",
    "WindowError",
    "apply_mask",
    "compute_norm_stats",
    "denormalize",
    "denormalize_array",
    "make_windows",
    "normalize",
    "normalize_array",
    "split_dataset",
    "split_indices",
]
