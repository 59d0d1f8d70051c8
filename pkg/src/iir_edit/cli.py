"""Command-line entry point: gen-data, train, edit, ablate, eval,
inspect-condition. Every run echoes its effective config to run.json in the
output directory. Exit codes: 0 success, 1 validation error, 2 runtime
failure."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np


class CliError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _resolve_out(out, subcommand: str) -> Path:
    if out:
        return Path(out)
    home = os.environ.get("IIR_EDIT_HOME")
    if home:
        return Path(home) / subcommand
    raise CliError(f"--out is required (or set IIR_EDIT_HOME) for {subcommand}")


def _versions() -> dict:
    import torch
    from . import __version__
    return {"iir_edit": __version__, "python": sys.version.split()[0],
            "numpy": np.__version__, "torch": torch.__version__}


def _write_run_json(out_dir: Path, subcommand: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"subcommand": subcommand, "config": config,
               "versions": _versions()}
    with open(out_dir / "run.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1, sort_keys=True)


def _load_mask(mask_arg: str, image: np.ndarray) -> np.ndarray:
    from .data import load_mask_png
    if mask_arg == "all":
        return np.ones(image.shape[:2], dtype=np.uint8)
    return load_mask_png(mask_arg)


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _merged_train_config(args) -> "TrainConfig":
    from .train import TrainConfig
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            file_cfg = json.load(f)
        unknown = set(file_cfg) - fields
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for pair in args.set or []:
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        if key not in fields:
            raise CliError(f"unknown config key {key!r}")
        cfg[key] = _coerce(value)
    flag_map = {"dataset": args.data, "out_dir": str(args.out),
                "total_steps": args.steps, "seed": args.seed,
                "image_size": args.size, "batch_size": args.batch_size,
                "lr": args.lr, "disable_iir": args.disable_iir or None,
                "K": args.k_max}
    for key, value in flag_map.items():
        if value is not None:
            cfg[key] = value
    return TrainConfig(**cfg)


def cmd_gen_data(args) -> int:
    from .data import gen_dataset
    out = _resolve_out(args.out, "gen-data")
    config = {"n": args.n, "size": args.size, "seed": args.seed,
              "workers": args.workers, "out": str(out)}
    _write_run_json(out, "gen-data", config)
    gen_dataset(args.n, args.size, args.seed, out, workers=args.workers)
    print(f"wrote {args.n} examples to {out}")
    return 0


def cmd_train(args) -> int:
    from .train import train
    args.out = _resolve_out(args.out, "train")
    cfg = _merged_train_config(args)
    _write_run_json(Path(cfg.out_dir), "train", dataclasses.asdict(cfg))
    state = train(cfg)
    print(f"trained to step {state.step}; checkpoints in {cfg.out_dir}")
    return 0


def _load_state(ckpt_path):
    from .checkpoint import load_checkpoint
    state, _ = load_checkpoint(ckpt_path)
    return state


def cmd_edit(args) -> int:
    from .data import load_png, save_png
    from .sample import EditRequest, edit
    from .text import tokenize
    image = load_png(args.image)
    roi = _load_mask(args.mask, image)
    state = _load_state(args.ckpt)
    req = EditRequest(image=image, roi=roi, prompt=tokenize(args.prompt),
                      k=args.k, cfg_scale=args.cfg, ddim_steps=args.steps,
                      seed=args.seed)
    out_path = Path(args.out)
    _write_run_json(out_path.parent if out_path.suffix else out_path, "edit", {
        "image": args.image, "mask": args.mask, "prompt": args.prompt,
        "k": args.k, "cfg_scale": args.cfg, "ddim_steps": args.steps,
        "seed": args.seed, "ckpt": args.ckpt, "out": str(out_path)})
    result = edit(req, state)
    save_png(out_path, result)
    print(f"wrote {out_path}")
    return 0


def cmd_ablate(args) -> int:
    from .data import load_png, save_png
    from .sample import EditRequest, ablate_noise_grid
    from .text import tokenize
    image = load_png(args.image)
    roi = _load_mask(args.mask, image)
    state = _load_state(args.ckpt)
    if args.ks:
        ks = [int(v) for v in args.ks.split(",")]
    else:
        k_max = state.config.get("K", 250)
        ks = [0, k_max // 4, k_max // 2, k_max]
    out = _resolve_out(args.out, "ablate")
    _write_run_json(out, "ablate", {
        "image": args.image, "mask": args.mask, "prompt": args.prompt,
        "ks": ks, "cfg_scale": args.cfg, "ddim_steps": args.steps,
        "seed": args.seed, "ckpt": args.ckpt})
    req = EditRequest(image=image, roi=roi, prompt=tokenize(args.prompt),
                      cfg_scale=args.cfg, ddim_steps=args.steps, seed=args.seed)
    results = ablate_noise_grid(req, state, ks)
    manifest = []
    for k, img in results:
        name = f"k_{k:04d}.png"
        save_png(out / name, img)
        manifest.append({"k": k, "filename": name})
    sheet = np.concatenate([img for _, img in results], axis=1)
    save_png(out / "contact_sheet.png", sheet)
    with open(out / "grid.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)
    print(f"wrote {len(results)} edits + contact sheet to {out}")
    return 0


def cmd_eval(args) -> int:
    from .data import ShapesDataset
    from .evaluate import EvalProtocol, evaluate, write_report
    state = _load_state(args.ckpt)
    testset = ShapesDataset(args.data)
    ks = tuple(int(v) for v in args.ks.split(",")) if args.ks else (0,)
    proto = EvalProtocol(mode=args.mode, ks=ks, cfg_scale=args.cfg,
                         ddim_steps=args.steps, seed=args.seed,
                         max_examples=args.n, batch_size=args.batch_size)
    out = _resolve_out(args.out, "eval")
    _write_run_json(out, "eval", {**dataclasses.asdict(proto),
                                  "ckpt": args.ckpt, "data": args.data})
    report = evaluate(state, testset, proto)
    write_report(report, out)
    agg = report["aggregates"]
    print(f"success_rate={agg['success_rate']:.3f} "
          f"mean_rmse_outside={agg['mean_rmse_outside']:.4f} "
          f"mean_psnr={agg['mean_psnr']:.2f}")
    return 0


def cmd_inspect_condition(args) -> int:
    from . import iirm
    from .data import load_png, save_png
    from .schedule import make_schedule
    image = load_png(args.image)
    roi = _load_mask(args.mask, image)
    sched = make_schedule(args.T)
    out = _resolve_out(args.out, "inspect-condition")
    _write_run_json(out, "inspect-condition", {
        "image": args.image, "mask": args.mask, "k": args.k,
        "seed": args.seed, "T": args.T, "noise_roi_only": args.noise_roi_only})
    cond = iirm.assemble_condition(image, roi, args.k, sched, args.seed,
                                   noise_roi_only=args.noise_roi_only)
    for c in range(4):
        save_png(out / f"channel_{c}.png", np.clip(cond[:, :, c], 0.0, 1.0))
    print(f"wrote 4 channel images to {out}")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="iir-edit",
                description="Text-conditioned diffusion image editor")
    sub = p.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic corpus")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override; wins over the config file")
    t.add_argument("--data", help="dataset directory")
    t.add_argument("--out")
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--size", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--lr", type=float)
    t.add_argument("--k-max", type=int, dest="k_max")
    t.add_argument("--disable-iir", action="store_true", dest="disable_iir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("edit", help="edit one image")
    e.add_argument("--image", required=True)
    e.add_argument("--mask", required=True, help="mask PNG path, or 'all'")
    e.add_argument("--prompt", required=True)
    e.add_argument("--k", type=int, default=0)
    e.add_argument("--cfg", type=float, default=9.0)
    e.add_argument("--steps", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--out", required=True, help="output PNG path")
    e.set_defaults(func=cmd_edit)

    a = sub.add_parser("ablate", help="one edit at several noise levels")
    a.add_argument("--image", required=True)
    a.add_argument("--mask", required=True)
    a.add_argument("--prompt", required=True)
    a.add_argument("--ks", help="comma-separated levels; default 0,K/4,K/2,K")
    a.add_argument("--cfg", type=float, default=9.0)
    a.add_argument("--steps", type=int, default=20)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--ckpt", required=True)
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    v = sub.add_parser("eval", help="run the evaluation protocol")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--mode", default="color",
                   choices=["color", "texture", "reconstruction"])
    v.add_argument("--ks", help="comma-separated condition noise levels")
    v.add_argument("--n", type=int, default=150)
    v.add_argument("--cfg", type=float, default=9.0)
    v.add_argument("--steps", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--batch-size", type=int, default=25, dest="batch_size")
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect-condition",
                       help="dump the 4 condition channels as PNGs")
    i.add_argument("--image", required=True)
    i.add_argument("--mask", required=True)
    i.add_argument("--k", type=int, default=0)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--T", type=int, default=1000)
    i.add_argument("--noise-roi-only", action="store_true", dest="noise_roi_only")
    i.add_argument("--out")
    i.set_defaults(func=cmd_inspect_condition)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
