"""Produce the trained artifacts the acceptance suite reads.

Trains two 32x32 models on the ShapesEdit corpus (CPU path, reduced size and
step budget recorded in each run.json):
    model_a  --disable-iir  (condition carries the intact image)
    model_b  full information-removal pipeline
then runs the four evaluation protocols criteria 1-3 consume.

Idempotent: finished stages are skipped, an interrupted training run resumes
from its latest checkpoint. Run from the repository root:

    python3 scripts/run_acceptance.py [--steps 6000] [--out runs/acceptance]
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from iir_edit.cli import run

TRAIN_DATA = ("runs/data32/train", 2000, 7)
TEST_DATA = ("runs/data32/test", 150, 8)
SIZE = 32
K = 250


def _sh(args: list[str]) -> None:
    print("+ iir-edit", " ".join(args), flush=True)
    code = run(args)
    if code != 0:
        sys.exit(f"step failed with exit code {code}: {args}")


def _ensure_data() -> None:
    for path, n, seed in (TRAIN_DATA, TEST_DATA):
        if not (Path(path) / "manifest.json").exists():
            _sh(["gen-data", "--n", str(n), "--size", str(SIZE),
                 "--seed", str(seed), "--out", path])


def _train(out: Path, name: str, steps: int, disable_iir: bool) -> Path:
    model_dir = out / name
    args = ["train", "--data", TRAIN_DATA[0], "--out", str(model_dir),
            "--steps", str(steps), "--seed", "0", "--size", str(SIZE),
            "--set", "ckpt_every=1000", "--set", f"K={K}",
            "--set", "canny_low=30", "--set", "canny_high=45"]
    if disable_iir:
        args.append("--disable-iir")
    final = model_dir / f"ckpt_{steps:07d}.ckpt"
    if final.exists():
        print(f"{name}: already trained ({final})", flush=True)
    else:
        _sh(args)
    return final


def _eval(out: Path, name: str, ckpt: Path, mode: str, ks: str) -> None:
    report_dir = out / name
    if (report_dir / "report.json").exists():
        print(f"{name}: report exists, skipping", flush=True)
        return
    _sh(["eval", "--ckpt", str(ckpt), "--data", TEST_DATA[0],
         "--mode", mode, "--ks", ks, "--n", "150", "--batch-size", "25",
         "--out", str(report_dir)])


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=6000)
    ap.add_argument("--out", default="runs/acceptance")
    args = ap.parse_args()
    out = Path(args.out)

    _ensure_data()
    ckpt_b = _train(out, "model_b", args.steps, disable_iir=False)
    ckpt_a = _train(out, "model_a", args.steps, disable_iir=True)

    _eval(out, "eval_b_color", ckpt_b, "color", "0")
    _eval(out, "eval_a_color", ckpt_a, "color", "0")
    _eval(out, "eval_b_texture", ckpt_b, "texture", f"0,{K}")
    _eval(out, "eval_b_recon", ckpt_b, "reconstruction", "0")
    print("acceptance artifacts complete", flush=True)


if __name__ == "__main__":
    main()
