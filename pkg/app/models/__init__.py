"""Typed domain records."""

from .dataset import DatasetManifest, NormStats, SampleWindow, load_manifest, save_manifest
from .fno import FnoConfig, FnoParameters, ShapeMismatchError
from .grid import BuildingMask, FieldSequence, Grid3, GridError, MaskError, ScalarField
from .report import MetricsReport
from .solver import Box, GridSpec, SceneError, SceneSpec, SolverConfig, SolverState, WindDirection
from .training import AdamState, Checkpoint, LossRecord, TrainConfig

__all__ = [
    "AdamState",
    "Box",
    "BuildingMask",
    "Checkpoint",
    "DatasetManifest",
    "FieldSequence",
    "FnoConfig",
    "FnoParameters",
    "Grid3",
    "GridError",
    "GridSpec",
    "LossRecord",
    "MaskError",
    "MetricsReport",
    "NormStats",
    "SampleWindow",
    "SceneError",
    "SceneSpec",
    "ShapeMismatchError",
    "SolverConfig",
    "SolverState",
    "TrainConfig",
    "WindDirection",
    "load_manifest",
    "save_manifest",
]
