"""Run configuration loader for the CLI (YAML file layered under flags)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field

from app.core.config import settings

logger = logging.getLogger(__name__)

BUILTIN_SCENE_NAMES = ("desk",)

Subcommand = Literal["generate", "prepare", "train", "eval", "rollout", "bench", "export-vtk"]


class RunConfig(BaseModel):
    """Effective configuration of one CLI invocation, echoed into index.json."""

    subcommand: Subcommand
    out: str
    scene: str | None = None
    manifest: str | None = None
    checkpoint: str | None = None
    fields: str | None = None
    direction: str | None = None
    steps: int | None = Field(default=None, ge=1)
    resolution: tuple[int, int, int] | None = None
    seed: int = 0
    threads: int = Field(default_factory=lambda: settings.threads, ge=1)
    verbosity: int = 0
    options: dict[str, Any] = Field(default_factory=dict)

    def required_paths(self) -> dict[str, str | None]:
        needs = {
            "generate": ("scene",),
            "prepare": ("fields",),
            "train": ("manifest",),
            "eval": ("checkpoint",),
            "rollout": ("checkpoint",),
            "bench": ("checkpoint", "scene"),
            "export-vtk": (),
        }[self.subcommand]
        return {name: getattr(self, name) for name in needs}

    def check_paths(self) -> None:
        """Raise ValueError when a required input is missing."""

        for name, value in self.required_paths().items():
            if not value:
                raise ValueError(f"{self.subcommand} needs --{name}")
            if name == "scene" and value in BUILTIN_SCENE_NAMES:
                continue
            if not Path(value).exists():
                raise ValueError(f"{name} path {value} does not exist")


def load_run_config_file(path: str | Path | None, subcommand: str) -> dict[str, Any]:
    """Return file values for one subcommand: ``defaults`` merged under ``<subcommand>``."""

    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise ValueError(f"config file {config_path} does not exist")
    data = yaml.safe_load(config_path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {config_path} must hold a mapping")
    merged: dict[str, Any] = dict(data.get("defaults") or {})
    merged.update(data.get(subcommand) or {})
    logger.debug("Loaded %d config keys for %s from %s", len(merged), subcommand, config_path)
    return {key.replace("-", "_"): value for key, value in merged.items()}


def merge_options(file_values: dict[str, Any], flag_values: dict[str, Any]) -> dict[str, Any]:
    """Flags that were given explicitly win over file values."""

    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return merged


__all__ = ["RunConfig", "Subcommand", "load_run_config_file", "merge_options"]
