"""Desk-scale end-to-end experiment: simulate, train, evaluate, roll out and time.

Runs the full pipeline through the CLI and checks the desk-scale targets:
held-out one-step loss, generalization ordering across wind directions,
rollout error growth and the solver/surrogate speedup.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from app.cli import main as cli

OTHER_DIRECTIONS = ("north", "east", "south")


def _run(argv: list[str]) -> None:
    print("$ urban-fno " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {' '.join(argv)}")


def _check(name: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description="Desk-scale surrogate experiment.")
    parser.add_argument("--root", default="runs/desk", help="Directory for every run.")
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--eval-steps", type=int, default=120, help="Steps per held-out direction.")
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--loss-target", type=float, default=0.05)
    parser.add_argument("--skip-generate", action="store_true", help="Reuse existing simulations.")
    args = parser.parse_args()

    root = Path(args.root)
    common = ["--threads", str(args.threads), "--seed", str(args.seed)]
    if not args.skip_generate:
        _run(["generate", "--scene", "desk", "--direction", "west", "--steps", str(args.steps),
              "--out", str(root / "west"), *common])
        for direction in OTHER_DIRECTIONS:
            _run(["generate", "--scene", "desk", "--direction", direction,
                  "--steps", str(args.eval_steps), "--out", str(root / direction), *common])

    _run(["prepare", "--fields", str(root / "west"), "--window", "6", "--stride", "2",
          "--n-train", "160", "--out", str(root / "dataset"), *common])
    _run(["train", "--manifest", str(root / "dataset" / "manifest.json"),
          "--epochs", str(args.epochs), "--out", str(root / "model"), *common])
    checkpoint = str(root / "model" / "best.ufck")

    eval_argv = ["eval", "--checkpoint", checkpoint, "--manifest",
                 str(root / "dataset" / "manifest.json"), "--out", str(root / "eval"), *common]
    for direction in OTHER_DIRECTIONS:
        eval_argv += ["--fields", str(root / direction), "--label", direction]
    _run(eval_argv)
    _run(["rollout", "--checkpoint", checkpoint, "--fields", str(root / "west"),
          "--start", str(max(0, args.steps - 60)), "--steps", "50",
          "--out", str(root / "rollout"), *common])
    _run(["bench", "--checkpoint", checkpoint, "--scene", "desk", "--repeats", "10",
          "--out", str(root / "bench"), *common])

    losses = json.loads((root / "eval" / "generalization.json").read_text())["one_step_loss"]
    with (root / "rollout" / "rollout_error.csv").open(newline="") as handle:
        errors = [float(row["mean_abs_error"]) for row in csv.DictReader(handle)]
    speedup = json.loads((root / "bench" / "bench_summary.json").read_text())["speedup"]

    west = losses["west"]
    results = [
        _check("held-out one-step loss", west <= args.loss_target, f"{west:.4f} <= {args.loss_target}"),
        _check(
            "generalization ordering",
            west < min(losses["north"], losses["south"]) and west < losses["east"],
            ", ".join(f"{k}={v:.4f}" for k, v in losses.items()),
        ),
        _check(
            "rollout error growth",
            len(errors) >= 50
            and errors[49] > errors[0]
            and sum(errors[40:50]) > sum(errors[:10]),
            f"step 1 {errors[0]:.4f}, step {len(errors)} {errors[-1]:.4f}" if errors else "no rows",
        ),
        _check("speedup", speedup >= 5.0, f"{speedup:.1f}x"),
    ]
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
