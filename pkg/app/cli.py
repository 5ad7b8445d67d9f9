"""Command-line entry point: generate, prepare, train, eval, rollout, bench, export-vtk.

Exit codes: 0 success, 2 usage or configuration, 3 numeric failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy.fft

from app.core.config import settings
from app.core.logging_config import setup_logging
from app.core.metrics import start_metrics_server
from app.core.run_config import RunConfig, load_run_config_file, merge_options
from app.models.dataset import DatasetManifest, load_manifest, save_manifest
from app.models.fno import FnoConfig
from app.models.grid import BuildingMask, FieldSequence, Grid3, GridError
from app.models.report import MetricsReport
from app.models.solver import SolverConfig
from app.models.training import TrainConfig
from app.services.bench import bench
from app.services.checkpoint import load_checkpoint
from app.services.evaluation import (
    OneStepResult,
    accumulated_error,
    check_resolution,
    conditional_error,
    evaluate_scenario,
    height_profile,
    horizontal_slice,
    one_step_eval,
    rollout,
    velocity_pdf,
    vertical_slice,
)
from app.services.field_io import (
    list_field_files,
    read_field,
    read_mask,
    read_sequence,
    write_mask,
    write_sequence,
)
from app.services.fno import init_parameters, param_count
from app.services.gradients import GradientCheckReport, GradientError, gradient_check
from app.services.reporting import ReportWriter
from app.services.scene import rasterize_scene, rescale_scene, resolve_scene
from app.services.solver import run_simulation
from app.services.spline import downsample, downsample_mask
from app.services.training import train_from_manifests
from app.services.vtk import write_vtk
from app.services.windows import WindowDataset, compute_norm_stats, make_windows, split_indices

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_RUN_FIELDS = set(RunConfig.model_fields) - {"subcommand", "options"}
_NOT_OPTIONS = {"config", "verbose", "quiet", "metrics_port", "subcommand"}

Handler = Callable[[RunConfig, ReportWriter], "dict[str, Any] | None"]


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    if isinstance(exc, ArithmeticError):
        return EXIT_NUMERIC
    return EXIT_IO


# --- shared helpers -------------------------------------------------------------


def _solver_config(run: RunConfig) -> SolverConfig:
    values = {
        name: run.options[name]
        for name in SolverConfig.model_fields
        if run.options.get(name) is not None
    }
    if run.direction:
        values["direction"] = run.direction
    values.setdefault("pressure_tolerance", settings.pressure_tolerance)
    values.setdefault("pressure_max_iters", settings.pressure_max_iters)
    return SolverConfig(**values)


def _fields_source(path: str | Path) -> tuple[Path, Path]:
    """(directory holding field files, run directory holding summary.json and mask.umsk)."""

    path = Path(path)
    if (path / "fields").is_dir():
        return path / "fields", path
    return path, path.parent


def _load_sequence(
    path: str | Path, dt: float | None = None
) -> tuple[FieldSequence, BuildingMask | None, dict[str, Any]]:
    fields_dir, run_dir = _fields_source(path)
    summary_path = run_dir / "summary.json"
    summary = json.loads(summary_path.read_text(encoding="utf-8")) if summary_path.exists() else {}
    dt = dt or summary.get("output_dt") or summary.get("dt")
    if not dt:
        raise ValueError(f"{path}: no summary.json with a time step; pass --dt")
    sequence = read_sequence(fields_dir, float(dt))
    mask_path = run_dir / "mask.umsk"
    mask = read_mask(mask_path) if mask_path.exists() else None
    return sequence, mask, summary


def _target_grid(source: Grid3, resolution: Sequence[int] | None) -> Grid3:
    if resolution is None:
        return source
    nx, ny, nz = resolution
    ex, ey, ez = source.extent
    return Grid3(nx, ny, nz, ex / nx, ey / ny, ez / nz, source.origin)


def _smoke_gradient_check(seed: int) -> GradientCheckReport:
    """Full central-difference check on a two-layer, width-2 network over a 4^3 grid."""

    config = FnoConfig(modes=2, width=2, layers=2, in_channels=5)
    rng = np.random.default_rng(seed)
    params = init_parameters(config, seed=seed, dtype=np.float64)
    inputs = rng.standard_normal((config.in_channels, 4, 4, 4))
    target = rng.random((4, 4, 4)) + 0.5
    return gradient_check(inputs, target, params, seed=seed)


def _metrics_report(
    label: str,
    result: OneStepResult,
    grid: Grid3,
    pdf_width: float,
    cond_width: float,
) -> MetricsReport:
    predictions = np.stack(result.predictions)
    targets = np.stack(result.targets)
    # Samples are laid side by side along x so each z-layer pools every (sample, x, y).
    pooled_truth = np.concatenate(list(targets), axis=0)
    pooled_pred = np.concatenate(list(predictions), axis=0)
    return MetricsReport(
        scenario=label,
        one_step_loss=result.mean_loss,
        per_sample_losses=result.per_sample,
        pdf_bin_width=pdf_width,
        pdf_truth=velocity_pdf(targets, pdf_width),
        pdf_prediction=velocity_pdf(predictions, pdf_width),
        conditional_error=conditional_error(predictions, targets, cond_width),
        height_profile_truth=height_profile(pooled_truth, grid),
        height_profile_prediction=height_profile(pooled_pred, grid),
    )


def _write_slices(
    writer: ReportWriter,
    grid: Grid3,
    prediction: np.ndarray,
    truth: np.ndarray,
    heights: Sequence[float],
    y_m: float,
) -> None:
    for height in heights:
        k, truth_plane = horizontal_slice(truth, grid, height)
        _, pred_plane = horizontal_slice(prediction, grid, height)
        writer.write_slice(f"slice_z{height:g}m_truth", truth_plane)
        writer.write_slice(f"slice_z{height:g}m_prediction", pred_plane)
        logger.debug("Horizontal slice at %.1f m uses layer %d", height, k)
    j, truth_plane = vertical_slice(truth, grid, y_m)
    _, pred_plane = vertical_slice(prediction, grid, y_m)
    writer.write_slice(f"slice_y{y_m:g}m_truth", truth_plane)
    writer.write_slice(f"slice_y{y_m:g}m_prediction", pred_plane)
    logger.debug("Vertical slice at y=%.1f m uses row %d", y_m, j)


# --- subcommands ----------------------------------------------------------------


def cmd_generate(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    scene = resolve_scene(run.scene)
    if run.resolution:
        scene = rescale_scene(scene, run.resolution)
    cfg = _solver_config(run)
    steps = run.steps or 1200
    stride = run.options.get("stride") or 1
    out = Path(run.out)
    writer.track("scene", scene.dump(out / "scene.json"))
    mask = rasterize_scene(scene)
    writer.track("mask", write_mask(mask, out / "mask.umsk"))
    base = {
        "scene": scene.name,
        "direction": cfg.direction.value,
        "threads": run.threads,
        "config": cfg.model_dump(mode="json"),
    }
    try:
        result = run_simulation(mask, cfg, steps, stride=stride)
    except ArithmeticError as exc:
        writer.write_json(
            "summary", dict(base, status="failed", exit_code=EXIT_NUMERIC, error=str(exc))
        )
        raise
    write_sequence(result.sequence, out / "fields")
    writer.track("fields", out / "fields")
    writer.write_json(
        "summary",
        dict(result.summary, **base, status="ok", exit_code=EXIT_OK, n_fields=len(result.sequence)),
    )
    return {"n_fields": len(result.sequence), "dt": result.summary["output_dt"]}


def cmd_prepare(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    opts = run.options
    sequence, mask, summary = _load_sequence(run.fields, opts.get("dt"))
    if opts.get("mask"):
        mask = read_mask(opts["mask"])
    window = opts.get("window") or 6
    stride = opts.get("stride") or 2
    windows = make_windows(len(sequence), window=window, stride=stride)
    n_train = opts.get("n_train") or max(1, int(len(windows) * 0.8))
    train_ids, test_ids = split_indices(len(windows), n_train, run.seed)

    source = sequence.grid
    target = _target_grid(source, run.resolution)
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    notes: list[str] = []
    skipped = target.shape == source.shape
    if skipped:
        notes.append("downsampling skipped: target dims equal source dims")
        fields_dir, _ = _fields_source(run.fields)
        paths = [Path(os.path.relpath(p, out)).as_posix() for p in list_field_files(fields_dir)]
        fields = sequence.fields
        target_mask = mask
    else:
        target_mask = downsample_mask(mask, target) if mask is not None else None
        fields = tuple(downsample(item, target, target_mask) for item in sequence.fields)
        written = write_sequence(FieldSequence(dt=sequence.dt, fields=fields), out / "fields")
        paths = [p.relative_to(out).as_posix() for p in written]
        writer.track("fields", out / "fields")
        logger.info("Downsampled %d fields %s -> %s", len(fields), source.describe(), target.describe())

    mask_name = None
    if target_mask is not None:
        writer.track("mask", write_mask(target_mask, out / "mask.umsk"))
        mask_name = "mask.umsk"
    norm = compute_norm_stats(fields, [windows[i] for i in train_ids], target_mask)
    manifest = DatasetManifest(
        fields=paths,
        dt=sequence.dt,
        windows=windows,
        train=train_ids,
        test=test_ids,
        seed=run.seed,
        norm=norm,
        normalize_inputs=opts.get("normalize_inputs") is not False,
        grid=target.to_dict(),
        mask=mask_name,
        window=window,
        stride=stride,
        downsampled=not skipped,
        scenario=opts.get("scenario") or summary.get("direction") or "west",
        notes=notes,
    )
    writer.track("manifest", save_manifest(manifest, out / "manifest.json"))
    logger.info(
        "Prepared %d windows (%d train / %d test), norm mean=%.4f std=%.4f",
        len(windows),
        len(train_ids),
        len(test_ids),
        norm.mean,
        norm.std,
    )
    return {"windows": len(windows), "train": len(train_ids), "test": len(test_ids)}


def cmd_train(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    opts = run.options
    manifests = opts.get("manifest_list") or [run.manifest]
    lead = load_manifest(manifests[0])
    fno_values = {k: opts[k] for k in ("modes", "width", "layers", "activation") if opts.get(k) is not None}
    fno_config = FnoConfig(in_channels=lead.window - 1, **fno_values)
    train_values = {
        k: opts[k]
        for k in ("epochs", "learning_rate", "batch_size", "log_every", "divergence_threshold")
        if opts.get(k) is not None
    }
    train_config = TrainConfig(seed=run.seed, **train_values)
    if opts.get("gradient_check"):
        report = _smoke_gradient_check(run.seed)
        logger.info(
            "Gradient check on %d entries: worst relative error %.2e", report.checked, report.worst
        )
        if not report.passed():
            raise GradientError(f"gradient check failed: {report.max_relative_error}")
    result = train_from_manifests(manifests, fno_config, train_config, run.out)
    for name, path in result.paths.items():
        writer.track(name, path)
    return {
        "best_epoch": result.best.epoch,
        "best_test_loss": result.best.best_test_loss,
        "final_train_loss": result.history[-1].train_loss,
        "parameters": param_count(fno_config),
    }


def cmd_eval(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    opts = run.options
    checkpoint = load_checkpoint(run.checkpoint)
    allow = bool(opts.get("allow_resolution_change"))
    pdf_width = opts.get("pdf_bin_width") or 0.25
    cond_width = opts.get("cond_bin_width") or 0.25
    heights = opts.get("slice_heights") or [2.0, 10.0]
    scenarios = opts.get("fields_list") or ([run.fields] if run.fields else [])
    labels = opts.get("labels") or []
    if not run.manifest and not scenarios:
        raise ValueError("eval needs --manifest or --fields")

    evaluated: list[tuple[str, OneStepResult, Grid3]] = []
    if run.manifest:
        manifest = load_manifest(run.manifest)
        root = Path(run.manifest).parent
        grid = (
            Grid3.from_dict(manifest.grid)
            if manifest.grid
            else read_field(root / manifest.fields[0]).grid
        )
        check_resolution(checkpoint, grid, allow)
        if manifest.normalize_inputs != checkpoint.normalize_inputs:
            raise ValueError("manifest and checkpoint disagree on input normalization")
        dataset = WindowDataset(manifest, root, "test", norm=checkpoint.norm)
        result = one_step_eval(checkpoint, dataset, keep=len(dataset))
        evaluated.append((manifest.scenario, result, grid))
    for index, path in enumerate(scenarios):
        sequence, _, summary = _load_sequence(path, opts.get("dt"))
        label = labels[index] if index < len(labels) else summary.get("direction") or Path(path).name
        result = evaluate_scenario(
            checkpoint, sequence, keep=len(sequence), allow_resolution_change=allow
        )
        evaluated.append((label, result, sequence.grid))

    losses: dict[str, float] = {}
    for label, result, grid in evaluated:
        key = label if label not in losses else f"{label}_{len(losses)}"
        target = writer if len(evaluated) == 1 else ReportWriter(writer.out_dir / key)
        target.write_report(_metrics_report(key, result, grid, pdf_width, cond_width))
        y_m = opts.get("slice_y")
        if y_m is None:
            y_m = grid.origin[1] + grid.extent[1] / 2
        _write_slices(target, grid, result.predictions[0], result.targets[0], heights, y_m)
        if target is not writer:
            for name, path in target.artifacts.items():
                writer.track(f"{key}/{name}", path)
        losses[key] = result.mean_loss
        logger.info("One-step loss for %s: %.5f over %d windows", key, result.mean_loss, len(result.per_sample))
    if len(losses) > 1:
        writer.write_json("generalization", {"one_step_loss": losses})
    return {"one_step_loss": losses}


def cmd_rollout(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    opts = run.options
    checkpoint = load_checkpoint(run.checkpoint)
    if not run.fields:
        raise ValueError("rollout needs --fields")
    sequence, mask, summary = _load_sequence(run.fields, opts.get("dt"))
    if opts.get("mask"):
        mask = read_mask(opts["mask"])
    check_resolution(checkpoint, sequence.grid, bool(opts.get("allow_resolution_change")))
    width = checkpoint.fno_config.in_channels
    start = opts.get("start") or 0
    steps = run.steps or 50
    if start < 0 or start + width > len(sequence):
        raise ValueError(f"start {start} leaves fewer than {width} initial fields")
    initial = FieldSequence(dt=sequence.dt, fields=sequence.fields[start : start + width])
    following = sequence.fields[start + width : start + width + steps]
    truth = FieldSequence(dt=sequence.dt, fields=following) if following else None
    teacher_forced = bool(opts.get("teacher_forced"))

    predicted = rollout(
        checkpoint, initial, steps, mask=mask, truth=truth, teacher_forced=teacher_forced
    )
    notes = [f"rollout from step {start}, {'teacher-forced' if teacher_forced else 'autoregressive'}"]
    rows = []
    if truth is not None:
        if len(truth) < steps:
            notes.append(f"truth covers only {len(truth)} of {steps} steps")
        compared = FieldSequence(dt=predicted.dt, fields=predicted.fields[: len(truth)])
        rows = accumulated_error(compared, truth)
    if opts.get("write_fields"):
        write_sequence(predicted, Path(run.out) / "fields")
        writer.track("fields", Path(run.out) / "fields")
    label = summary.get("direction") or Path(run.fields).name
    writer.write_report(MetricsReport(scenario=label, rollout_error=rows, notes=notes))
    return {
        "steps": steps,
        "final_mean_abs_error": rows[-1].mean_abs_error if rows else None,
    }


def cmd_bench(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    opts = run.options
    checkpoint = load_checkpoint(run.checkpoint)
    scene = resolve_scene(run.scene)
    if run.resolution:
        scene = rescale_scene(scene, run.resolution)
    records, summary = bench(
        checkpoint,
        scene,
        _solver_config(run),
        n_repeats=opts.get("repeats") or 10,
        warmup=opts.get("warmup"),
    )
    writer.write_bench(records, summary)
    writer.write_report(MetricsReport(scenario=scene.name, timings=records, bench=summary))
    return {"speedup": summary.speedup}


def cmd_export_vtk(run: RunConfig, writer: ReportWriter) -> dict[str, Any]:
    opts = run.options
    inputs = opts.get("inputs") or ([run.fields] if run.fields else [])
    if not inputs:
        raise ValueError("export-vtk needs at least one --field")
    fields = [read_field(path) for path in inputs]
    names = opts.get("names") or [Path(path).stem for path in inputs]
    if len(names) != len(fields):
        raise ValueError(f"{len(fields)} fields but {len(names)} names")
    grid = fields[0].grid
    for name, item in zip(names, fields):
        if item.grid != grid:
            raise GridError(f"{name} lives on {item.grid.describe()}, expected {grid.describe()}")
    scalars = {name: item.values for name, item in zip(names, fields)}
    if opts.get("with_error"):
        if len(fields) < 2:
            raise ValueError("--with-error needs a truth and a prediction field")
        scalars["abs_error"] = np.abs(
            fields[1].values.astype(np.float64) - fields[0].values.astype(np.float64)
        )
    if opts.get("mask"):
        scalars["solid"] = read_mask(opts["mask"]).solid.astype(np.float32)
    path = write_vtk(Path(run.out) / (opts.get("output") or "fields.vtk"), grid, scalars)
    writer.track("vtk", path)
    return {"scalars": list(scalars)}


COMMANDS: dict[str, Handler] = {
    "generate": cmd_generate,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "rollout": cmd_rollout,
    "bench": cmd_bench,
    "export-vtk": cmd_export_vtk,
}


# --- argument parsing -----------------------------------------------------------


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("solver")
    group.add_argument("--direction", help="Wind from west, north, east, south (or 0/90/180/270).")
    group.add_argument("--resolution", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    group.add_argument("--reynolds", type=float)
    group.add_argument("--prandtl", type=float)
    group.add_argument("--grashof", type=float)
    group.add_argument("--smagorinsky", type=float, help="Smagorinsky constant in [0.1, 0.24].")
    group.add_argument("--courant", type=float)
    group.add_argument("--u-ref", dest="u_ref", type=float, help="Inflow speed at z_ref (m/s).")
    group.add_argument("--z-ref", dest="z_ref", type=float)
    group.add_argument("--alpha", type=float, help="Power-law exponent of the inflow profile.")
    group.add_argument("--thermal", action="store_true", default=None)
    group.add_argument("--interpolation", choices=("linear", "cubic"))
    group.add_argument("--boundary", choices=("wind_tunnel", "closed_box"))
    group.add_argument("--ground", choices=("no_slip", "free_slip"))
    group.add_argument("--pressure-solver", dest="pressure_solver", choices=("direct", "jacobi"))
    group.add_argument("--pressure-tolerance", dest="pressure_tolerance", type=float)
    group.add_argument("--pressure-max-iters", dest="pressure_max_iters", type=int)
    group.add_argument("--initial", choices=("profile", "rest"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with `defaults` and per-subcommand mappings.")
    common.add_argument("--out", help="Output directory (default: <run_root>/<subcommand>).")
    common.add_argument("--threads", type=int, help="scipy.fft worker count.")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="count", default=0)
    common.add_argument("--metrics-port", dest="metrics_port", type=int)

    parser = argparse.ArgumentParser(
        prog="urban-fno", description="Urban wind simulation and FNO surrogate pipeline."
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    generate = sub.add_parser("generate", parents=[common], help="Simulate a scene.")
    generate.add_argument("--scene", help="Scene JSON path or a built-in name (desk).")
    generate.add_argument("--steps", type=int, help="Solver steps (default 1200).")
    generate.add_argument("--stride", type=int, help="Write a field every N steps.")
    _add_solver_flags(generate)

    prepare = sub.add_parser("prepare", parents=[common], help="Downsample and window fields.")
    prepare.add_argument("--fields", help="generate output directory or a field directory.")
    prepare.add_argument("--mask")
    prepare.add_argument("--dt", type=float)
    prepare.add_argument("--window", type=int)
    prepare.add_argument("--stride", type=int)
    prepare.add_argument("--n-train", dest="n_train", type=int)
    prepare.add_argument("--resolution", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    prepare.add_argument("--scenario")
    prepare.add_argument(
        "--no-normalize", dest="normalize_inputs", action="store_false", default=None
    )

    train = sub.add_parser("train", parents=[common], help="Train the surrogate.")
    train.add_argument("--manifest", nargs="+", help="One manifest, or several to train jointly.")
    train.add_argument("--epochs", type=int)
    train.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--modes", type=int)
    train.add_argument("--width", type=int)
    train.add_argument("--layers", type=int)
    train.add_argument("--activation", choices=("gelu", "relu", "identity"))
    train.add_argument("--log-every", dest="log_every", type=int)
    train.add_argument("--divergence-threshold", dest="divergence_threshold", type=float)
    train.add_argument("--gradient-check", dest="gradient_check", action="store_true", default=None)

    evaluate = sub.add_parser("eval", parents=[common], help="One-step evaluation and statistics.")
    evaluate.add_argument("--checkpoint")
    evaluate.add_argument("--manifest", help="Evaluate the manifest's test windows.")
    evaluate.add_argument("--fields", action="append", help="Scenario run directory (repeatable).")
    evaluate.add_argument("--label", dest="labels", action="append")
    evaluate.add_argument("--dt", type=float)
    evaluate.add_argument(
        "--allow-resolution-change", dest="allow_resolution_change", action="store_true", default=None
    )
    evaluate.add_argument("--pdf-bin-width", dest="pdf_bin_width", type=float)
    evaluate.add_argument("--cond-bin-width", dest="cond_bin_width", type=float)
    evaluate.add_argument("--slice-heights", dest="slice_heights", type=float, nargs="+")
    evaluate.add_argument("--slice-y", dest="slice_y", type=float)

    roll = sub.add_parser("rollout", parents=[common], help="Autoregressive forecast.")
    roll.add_argument("--checkpoint")
    roll.add_argument("--fields", help="Scenario run directory with the initial and truth fields.")
    roll.add_argument("--mask")
    roll.add_argument("--dt", type=float)
    roll.add_argument("--start", type=int)
    roll.add_argument("--steps", type=int, help="Forecast length (default 50).")
    roll.add_argument("--teacher-forced", dest="teacher_forced", action="store_true", default=None)
    roll.add_argument("--write-fields", dest="write_fields", action="store_true", default=None)
    roll.add_argument(
        "--allow-resolution-change", dest="allow_resolution_change", action="store_true", default=None
    )

    timing = sub.add_parser("bench", parents=[common], help="Time solver against surrogate.")
    timing.add_argument("--checkpoint")
    timing.add_argument("--scene")
    timing.add_argument("--repeats", type=int)
    timing.add_argument("--warmup", type=int)
    _add_solver_flags(timing)

    export = sub.add_parser("export-vtk", parents=[common], help="Write fields as legacy VTK.")
    export.add_argument("--field", dest="inputs", nargs="+")
    export.add_argument("--names", nargs="+")
    export.add_argument("--mask")
    export.add_argument("--with-error", dest="with_error", action="store_true", default=None)
    export.add_argument("--output", help="File name inside --out (default fields.vtk).")
    return parser


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Layer flags over the config file and split run fields from subcommand options."""

    flags = {k: v for k, v in vars(args).items() if k not in _NOT_OPTIONS}
    merged = merge_options(load_run_config_file(args.config, args.subcommand), flags)
    run_values: dict[str, Any] = {"verbosity": args.verbose - args.quiet}
    options: dict[str, Any] = {}
    for key, value in merged.items():
        if key in _RUN_FIELDS:
            run_values[key] = value
        else:
            options[key] = value
    for key in ("manifest", "fields"):
        value = run_values.get(key)
        if isinstance(value, (list, tuple)):
            options[f"{key}_list"] = [str(v) for v in value]
            run_values[key] = str(value[0]) if value else None
    run_values.setdefault("out", str(Path(settings.run_root) / args.subcommand))
    return RunConfig(subcommand=args.subcommand, options=options, **run_values)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = "DEBUG" if args.verbose > args.quiet else "WARNING" if args.quiet > args.verbose else None
    setup_logging(service_name="urban-fno", level=level)
    if args.metrics_port or settings.metrics_enabled:
        start_metrics_server(args.metrics_port)

    run: RunConfig | None = None
    writer: ReportWriter | None = None
    code = EXIT_OK
    extra: dict[str, Any] = {}
    try:
        run = build_run_config(args)
        run.check_paths()
        writer = ReportWriter(run.out)
        with scipy.fft.set_workers(run.threads):
            extra = COMMANDS[args.subcommand](run, writer) or {}
    except (ValueError, ArithmeticError, OSError) as exc:
        code = exit_code_for(exc)
        logger.error("%s failed with exit code %d: %s", args.subcommand, code, exc)
        print(f"urban-fno {args.subcommand}: {exc}", file=sys.stderr)
        extra = {"error": str(exc), "error_type": type(exc).__name__}

    if writer is not None and run is not None:
        try:
            writer.write_index(args.subcommand, run.model_dump(mode="json"), run.threads, code, extra)
        except OSError as exc:
            logger.error("Could not write index.json: %s", exc)
            code = code or EXIT_IO
    return code


__all__ = ["COMMANDS", "build_parser", "build_run_config", "exit_code_for", "main"]
