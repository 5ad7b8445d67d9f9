from __future__ import annotations

import csv
import json

import pytest

from app.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, exit_code_for, main
from app.models.solver import Box, GridSpec, SceneSpec
from app.services.checkpoint import CheckpointError
from app.services.field_io import list_field_files
from app.services.reporting import sha256_file


@pytest.fixture
def scene_file(tmp_path):
    scene = SceneSpec(
        name="tiny",
        grid=GridSpec(nx=8, ny=8, nz=4, dx=2.0, dy=2.0, dz=2.0),
        boxes=[Box(name="block", x0=6.0, x1=10.0, y0=6.0, y1=10.0, height=4.0)],
    )
    return scene.dump(tmp_path / "tiny_scene.json")


def _index(directory):
    data = json.loads((directory / "index.json").read_text(encoding="utf-8"))
    for entry in data["artifacts"].values():
        if "bytes" in entry:
            assert entry["sha256"] == sha256_file(directory / entry["path"])
    return data


def test_pipeline_end_to_end(tmp_path, scene_file):
    gen, prep, trn = tmp_path / "gen", tmp_path / "prep", tmp_path / "train"
    ev, ro, bn, vt = tmp_path / "eval", tmp_path / "rollout", tmp_path / "bench", tmp_path / "vtk"

    assert main(["generate", "--scene", str(scene_file), "--steps", "14", "--out", str(gen)]) == EXIT_OK
    assert len(list_field_files(gen / "fields")) == 14
    summary = json.loads((gen / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "ok" and summary["direction"] == "west"
    assert max(summary["residuals"]) <= 1e-4
    assert _index(gen)["exit_code"] == 0

    code = main(
        ["prepare", "--fields", str(gen), "--out", str(prep), "--window", "6", "--stride", "2", "--n-train", "4"]
    )
    assert code == EXIT_OK
    manifest = json.loads((prep / "manifest.json").read_text(encoding="utf-8"))
    assert (len(manifest["train"]), len(manifest["test"])) == (4, 1)
    assert manifest["notes"] == ["downsampling skipped: target dims equal source dims"]
    assert manifest["mask"] == "mask.umsk"

    code = main(
        [
            "train", "--manifest", str(prep / "manifest.json"), "--out", str(trn),
            "--epochs", "2", "--modes", "2", "--width", "2", "--layers", "1",
        ]
    )
    assert code == EXIT_OK
    with (trn / "losses.csv").open(newline="") as handle:
        assert len(list(csv.DictReader(handle))) == 2
    assert {"best", "final", "losses"} <= set(_index(trn)["artifacts"])
    checkpoint = str(trn / "best.ufck")

    code = main(
        [
            "eval", "--checkpoint", checkpoint, "--manifest", str(prep / "manifest.json"),
            "--out", str(ev), "--slice-heights", "3",
        ]
    )
    assert code == EXIT_OK
    metrics = json.loads((ev / "metrics.json").read_text(encoding="utf-8"))
    assert metrics["scenario"] == "west"
    assert len(metrics["per_sample_losses"]) == 1
    for name in ("pdf.csv", "cond_error.csv", "height_profile.csv", "slice_z3m_truth.csv", "slice_y8m_prediction.csv"):
        assert (ev / name).exists(), name
    _index(ev)

    code = main(["rollout", "--checkpoint", checkpoint, "--fields", str(gen), "--steps", "3", "--out", str(ro)])
    assert code == EXIT_OK
    with (ro / "rollout_error.csv").open(newline="") as handle:
        assert [row["step"] for row in csv.DictReader(handle)] == ["1", "2", "3"]

    code = main(
        [
            "bench", "--checkpoint", checkpoint, "--scene", str(scene_file),
            "--repeats", "2", "--warmup", "0", "--out", str(bn),
        ]
    )
    assert code == EXIT_OK
    bench_summary = json.loads((bn / "bench_summary.json").read_text(encoding="utf-8"))
    assert bench_summary["n_repeats"] == 2
    assert bench_summary["speedup"] > 0

    fields = list_field_files(gen / "fields")
    code = main(
        [
            "export-vtk", "--field", str(fields[0]), str(fields[1]), "--names", "truth", "prediction",
            "--with-error", "--mask", str(gen / "mask.umsk"), "--out", str(vt),
        ]
    )
    assert code == EXIT_OK
    raw = (vt / "fields.vtk").read_bytes()
    for name in (b"truth", b"prediction", b"abs_error", b"solid"):
        assert b"SCALARS " + name + b" float 1" in raw
    assert _index(vt)["artifacts"]["vtk"]["path"] == "fields.vtk"


def test_missing_scene_is_a_usage_error(tmp_path, capsys):
    code = main(["generate", "--scene", str(tmp_path / "nope.json"), "--out", str(tmp_path / "g")])
    assert code == EXIT_USAGE
    assert "does not exist" in capsys.readouterr().err


def test_corrupt_checkpoint_is_an_io_error(tmp_path, scene_file):
    bad = tmp_path / "bad.ufck"
    bad.write_bytes(b"garbage")
    out = tmp_path / "eval"
    code = main(["eval", "--checkpoint", str(bad), "--fields", str(tmp_path), "--out", str(out)])
    assert code == EXIT_IO
    index = _index(out)
    assert index["exit_code"] == EXIT_IO
    assert index["error_type"] == "CheckpointError"


def test_projection_failure_is_a_numeric_error(tmp_path, scene_file):
    out = tmp_path / "gen"
    code = main(
        [
            "generate", "--scene", str(scene_file), "--steps", "2", "--out", str(out),
            "--pressure-solver", "jacobi", "--pressure-max-iters", "1",
        ]
    )
    assert code == EXIT_NUMERIC
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "failed"
    assert summary["exit_code"] == EXIT_NUMERIC


def test_argparse_errors_exit_with_usage_code():
    with pytest.raises(SystemExit) as excinfo:
        main(["simulate"])
    assert excinfo.value.code == EXIT_USAGE


def test_exit_code_mapping():
    assert exit_code_for(ValueError("x")) == EXIT_USAGE
    assert exit_code_for(ZeroDivisionError()) == EXIT_NUMERIC
    assert exit_code_for(CheckpointError("x")) == EXIT_IO
