"""Report writer: MetricsReport JSON plus one CSV per table."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import BaseModel

from app.models.report import (
    BenchSummary,
    ConditionalErrorBin,
    HeightProfileRow,
    MetricsReport,
    PdfBin,
    RolloutErrorRow,
    TimingRecord,
)

logger = logging.getLogger(__name__)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ReportWriter:
    """Writes evaluation tables under one output directory and remembers every artifact."""

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, Path] = {}

    def track(self, name: str, path: str | Path) -> Path:
        path = Path(path)
        self.artifacts[name] = path
        return path

    def _rows(self, filename: str, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> Path:
        path = self.out_dir / filename
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
        return self.track(Path(filename).stem, path)

    def _models(self, filename: str, model: type[BaseModel], rows: Sequence[BaseModel]) -> Path:
        return self._rows(filename, list(model.model_fields), (r.model_dump() for r in rows))

    def write_pdf(self, truth: Sequence[PdfBin], prediction: Sequence[PdfBin] = ()) -> Path:
        """Truth and prediction histograms side by side, joined on the bin edges."""

        def key(b: PdfBin) -> tuple[float, float]:
            return round(b.lower, 12), round(b.upper, 12)

        truth_by_edge = {key(b): b for b in truth}
        predicted = {key(b): b for b in prediction}
        rows = []
        for edge in sorted(set(truth_by_edge) | set(predicted)):
            t = truth_by_edge.get(edge)
            p = predicted.get(edge)
            rows.append(
                {
                    "lower": edge[0],
                    "upper": edge[1],
                    "density_truth": t.density if t else 0.0,
                    "density_prediction": (p.density if p else 0.0) if prediction else None,
                }
            )
        return self._rows(
            "pdf.csv", ("lower", "upper", "density_truth", "density_prediction"), rows
        )

    def write_conditional_error(self, bins: Sequence[ConditionalErrorBin]) -> Path:
        return self._models("cond_error.csv", ConditionalErrorBin, bins)

    def write_height_profile(
        self,
        truth: Sequence[HeightProfileRow],
        prediction: Sequence[HeightProfileRow] = (),
    ) -> Path:
        rows = []
        for index, t in enumerate(truth):
            row = {"k": t.k, "z_m": t.z_m, "mean_truth": t.mean, "std_truth": t.std}
            if index < len(prediction):
                row["mean_prediction"] = prediction[index].mean
                row["std_prediction"] = prediction[index].std
            rows.append(row)
        return self._rows(
            "height_profile.csv",
            ("k", "z_m", "mean_truth", "std_truth", "mean_prediction", "std_prediction"),
            rows,
        )

    def write_rollout_error(self, rows: Sequence[RolloutErrorRow]) -> Path:
        return self._models("rollout_error.csv", RolloutErrorRow, rows)

    def write_bench(self, records: Sequence[TimingRecord], summary: BenchSummary) -> tuple[Path, Path]:
        table = self._models("bench.csv", TimingRecord, records)
        path = self.out_dir / "bench_summary.json"
        path.write_text(json.dumps(summary.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
        return table, self.track("bench_summary", path)

    def write_slice(self, name: str, plane: np.ndarray) -> Path:
        """A 2D plane as a headerless CSV grid, first index down the rows."""

        path = self.out_dir / f"{name}.csv"
        np.savetxt(path, np.asarray(plane, dtype=np.float64), delimiter=",", fmt="%.6g")
        return self.track(name, path)

    def write_losses(self, losses: Sequence[float], filename: str = "per_sample_loss.csv") -> Path:
        return self._rows(
            filename, ("sample", "loss"), ({"sample": i, "loss": v} for i, v in enumerate(losses))
        )

    def write_json(self, name: str, payload: dict[str, Any]) -> Path:
        path = self.out_dir / f"{name}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return self.track(name, path)

    def write_report(self, report: MetricsReport, filename: str = "metrics.json") -> Path:
        """JSON report plus the CSV tables it carries."""

        if report.pdf_truth:
            self.write_pdf(report.pdf_truth, report.pdf_prediction)
        if report.conditional_error:
            self.write_conditional_error(report.conditional_error)
        if report.height_profile_truth:
            self.write_height_profile(report.height_profile_truth, report.height_profile_prediction)
        if report.rollout_error:
            self.write_rollout_error(report.rollout_error)
        if report.per_sample_losses:
            self.write_losses(report.per_sample_losses)
        path = report.write_json(self.out_dir / filename)
        logger.info("Report for %s written to %s", report.scenario, path)
        return self.track(Path(filename).stem, path)

    def write_index(
        self,
        subcommand: str,
        config: dict[str, Any],
        threads: int,
        exit_code: int,
        extra: dict[str, Any] | None = None,
    ) -> Path:
        """index.json: every tracked artifact with its sha256, plus the effective config."""

        artifacts = {}
        for name, path in sorted(self.artifacts.items()):
            if path.is_file():
                artifacts[name] = {
                    "path": str(_relative(path, self.out_dir)),
                    "sha256": sha256_file(path),
                    "bytes": path.stat().st_size,
                }
            elif path.is_dir():
                files = sorted(p for p in path.rglob("*") if p.is_file())
                artifacts[name] = {
                    "path": str(_relative(path, self.out_dir)),
                    "files": len(files),
                    "sha256": _tree_digest(files, path),
                }
        payload = {
            "subcommand": subcommand,
            "exit_code": exit_code,
            "threads": threads,
            "config": config,
            "artifacts": artifacts,
        }
        if extra:
            payload.update(extra)
        path = self.out_dir / "index.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path


def _relative(path: Path, root: Path) -> Path:
    try:
        return path.resolve().relative_to(root.resolve())
    except ValueError:
        return path


def _tree_digest(files: Sequence[Path], root: Path) -> str:
    digest = hashlib.sha256()
    for file in files:
        digest.update(str(file.relative_to(root)).encode("utf-8"))
        digest.update(sha256_file(file).encode("ascii"))
    return digest.hexdigest()


__all__ = ["ReportWriter", "sha256_file"]
