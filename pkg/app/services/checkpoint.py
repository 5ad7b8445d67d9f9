"""Checkpoint persistence.

Layout (little-endian): ``UFCK`` | u32 version | u32 length + UTF-8 JSON
config block | u32 blob count | per blob: u16 name length, name, u8 ndim,
u32 dims, f32 payload (C order). Blob names are ``param/<name>``,
``adam.m/<name>`` and ``adam.v/<name>``.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from pathlib import Path
from typing import Any

import numpy as np

from app.models.dataset import NormStats
from app.models.fno import FnoConfig, FnoParameters, ShapeMismatchError
from app.models.training import AdamState, Checkpoint, LossRecord, TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"UFCK"
VERSION = 1


class CheckpointError(OSError):
    pass


class CheckpointMismatchError(ValueError):
    pass


def _config_block(ckpt: Checkpoint) -> dict[str, Any]:
    return {
        "fno_config": ckpt.fno_config.model_dump(mode="json"),
        "train_config": ckpt.train_config.model_dump(mode="json"),
        "epoch": ckpt.epoch,
        "history": [record.as_row() for record in ckpt.history],
        "manifest_hash": ckpt.manifest_hash,
        "seed": ckpt.seed,
        "adam_step": ckpt.adam.step,
        "optimizer": ckpt.optimizer,
        "norm": ckpt.norm.model_dump() if ckpt.norm else None,
        "normalize_inputs": ckpt.normalize_inputs,
        "grid": ckpt.grid,
    }


def _pack_blob(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    dims = array.shape
    head = struct.pack(f"<H{len(encoded)}sB{len(dims)}I", len(encoded), encoded, len(dims), *dims)
    return head + np.ascontiguousarray(array, dtype="<f4").tobytes()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Write atomically (temp file then rename)."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    block = json.dumps(_config_block(ckpt), sort_keys=True).encode("utf-8")
    blobs: list[bytes] = []
    for name, array in ckpt.params.items():
        blobs.append(_pack_blob(f"param/{name}", array))
    for name in ckpt.params:
        if name in ckpt.adam.m:
            blobs.append(_pack_blob(f"adam.m/{name}", ckpt.adam.m[name]))
            blobs.append(_pack_blob(f"adam.v/{name}", ckpt.adam.v[name]))
    payload = b"".join(
        [MAGIC, struct.pack("<II", VERSION, len(block)), block, struct.pack("<I", len(blobs))] + blobs
    )
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(payload)
    os.replace(tmp, path)
    logger.debug("Saved checkpoint epoch %d to %s (%d bytes)", ckpt.epoch, path, len(payload))
    return path


class _Reader:
    def __init__(self, raw: bytes, path: Path) -> None:
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated at byte {self.offset} (wanted {size} more)")
        chunk = self.raw[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _shape_diagnostics(expected: FnoConfig, found: FnoConfig) -> str:
    want = expected.parameter_shapes()
    have = found.parameter_shapes()
    lines = []
    for name in sorted(set(want) | set(have)):
        if want.get(name) != have.get(name):
            lines.append(f"{name}: expected {want.get(name)}, checkpoint has {have.get(name)}")
    return "; ".join(lines) or "activation differs"


def _group(blobs: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {k.removeprefix(prefix): v.astype(np.float64) for k, v in blobs.items() if k.startswith(prefix)}


def load_checkpoint(path: str | Path, expected: FnoConfig | None = None) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    reader = _Reader(raw, path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, block_len = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        block = json.loads(reader.take(block_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt config block: {exc}") from exc

    try:
        fno_config = FnoConfig.model_validate(block["fno_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed config block: {exc!r}") from exc
    if expected is not None and expected != fno_config:
        raise CheckpointMismatchError(
            f"{path}: checkpoint config differs: {_shape_diagnostics(expected, fno_config)}"
        )

    (count,) = reader.unpack("<I")
    blobs: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(reader.take(size * 4), dtype="<f4").astype(np.float32)
        blobs[name] = data.reshape(dims)
    if reader.offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - reader.offset} trailing bytes")

    arrays = {k.removeprefix("param/"): v for k, v in blobs.items() if k.startswith("param/")}
    try:
        params = FnoParameters(fno_config, arrays)
    except ShapeMismatchError as exc:
        raise CheckpointError(f"{path}: parameters do not match the stored config: {exc}") from exc
    try:
        adam = AdamState(
            m=_group(blobs, "adam.m/"),
            v=_group(blobs, "adam.v/"),
            step=int(block.get("adam_step", 0)),
        )
        norm = block.get("norm")
        train_config = TrainConfig.model_validate(block.get("train_config") or {})
        history = [LossRecord(**row) for row in block.get("history", [])]
        epoch = int(block.get("epoch", 0))
        seed = int(block.get("seed", 0))
        norm_stats = NormStats(**norm) if norm else None
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed training metadata: {exc!r}") from exc
    return Checkpoint(
        fno_config=fno_config,
        params=params,
        adam=adam,
        train_config=train_config,
        epoch=epoch,
        history=history,
        manifest_hash=block.get("manifest_hash"),
        seed=seed,
        norm=norm_stats,
        normalize_inputs=bool(block.get("normalize_inputs", True)),
        grid=block.get("grid"),
        optimizer=block.get("optimizer", "adam"),
    )


__all__ = ["CheckpointError", "CheckpointMismatchError", "load_checkpoint", "save_checkpoint"]
