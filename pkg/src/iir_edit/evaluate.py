"""Editability / fidelity proxies and the evaluation protocol.

Edit success for colors is nearest-palette-color matching of the RoI mean;
for textures it is an FFT-band classifier over the background region.
Fidelity is masked RMSE outside the RoI; reconstruction quality is PSNR.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import COLOR_TABLE, ShapesDataset, edit_prompt
from .model import ModelState
from .sample import (DEFAULT_CFG_SCALE, DEFAULT_DDIM_STEPS, EditRequest,
                     edit_batch)
from .text import COLORS, TEXTURES, parse_caption, tokenize

DEFAULT_COLOR_TOL = 0.25

# Texture classifier knobs, calibrated on clean generator output.
_VAR_SOLID_MAX = 4e-3      # region luma variance below this -> solid
_HF_CUTOFF = 0.15          # cycles/pixel; start of the high-frequency band
_AXIS_HALF_ANGLE = 0.414   # tan(22.5 deg): axis vs diagonal sector split


def edit_success_color(img: np.ndarray, roi: np.ndarray, target_rgb,
                       tol: float = DEFAULT_COLOR_TOL) -> tuple[bool, float]:
    """Distance of the RoI mean color to the target; success iff the target
    is the nearest palette color and the distance is below tol."""
    roi = np.asarray(roi)
    if roi.sum() == 0:
        raise ValueError("empty RoI")
    mean = np.asarray(img)[roi > 0].mean(axis=0)
    target = np.asarray(target_rgb, dtype=np.float64)
    score = float(np.linalg.norm(mean - target))
    dists = {name: float(np.linalg.norm(mean - np.asarray(rgb)))
             for name, rgb in COLOR_TABLE.items()}
    nearest = min(dists, key=dists.get)
    target_name = min(COLOR_TABLE,
                      key=lambda n: np.linalg.norm(np.asarray(COLOR_TABLE[n]) - target))
    return nearest == target_name and score < tol, score


def texture_features(img: np.ndarray, region: np.ndarray) -> dict:
    """Spectral features of the luma inside the region (mean-filled outside)."""
    from .iirm import GRAY_WEIGHTS
    region = np.asarray(region) > 0
    if region.sum() == 0 or (~region).sum() == 0:
        raise ValueError("region must be a proper nonempty subset of the image")
    luma = np.asarray(img, dtype=np.float64) @ GRAY_WEIGHTS
    mean = luma[region].mean()
    var = float(luma[region].var())
    field = np.where(region, luma - mean, 0.0)
    spec = np.abs(np.fft.fft2(field)) ** 2
    spec[0, 0] = 0.0
    h, w = luma.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.hypot(fx, fy)
    hf = r >= _HF_CUTOFF
    e_total = spec.sum()
    e_hf = spec[hf].sum()
    ax_x = hf & (np.abs(fy) <= _AXIS_HALF_ANGLE * np.abs(fx))
    ax_y = hf & (np.abs(fx) <= _AXIS_HALF_ANGLE * np.abs(fy))
    e_axis = spec[ax_x].sum() + spec[ax_y].sum()
    e_diag = e_hf - e_axis
    return {"variance": var, "hf_frac": float(e_hf / max(e_total, 1e-12)),
            "e_axis": float(e_axis), "e_diag": float(e_diag),
            "e_hf": float(e_hf)}


def classify_texture(img: np.ndarray, region: np.ndarray) -> tuple[str, float]:
    """Returns (label, margin). Solid when the region is nearly flat; else
    stripes vs checker by axis- vs diagonal-band energy."""
    f = texture_features(img, region)
    if f["variance"] < _VAR_SOLID_MAX:
        return "solid", float(_VAR_SOLID_MAX - f["variance"]) / _VAR_SOLID_MAX
    ratio = (f["e_axis"] - f["e_diag"]) / max(f["e_hf"], 1e-12)
    return ("stripes", ratio) if ratio > 0 else ("checker", -ratio)


def edit_success_texture(img: np.ndarray, region: np.ndarray,
                         target: str) -> tuple[bool, float]:
    if target not in TEXTURES:
        raise ValueError(f"unknown texture class {target!r}")
    label, margin = classify_texture(img, region)
    return label == target, float(margin)


def fidelity_outside_roi(orig: np.ndarray, edited: np.ndarray,
                         roi: np.ndarray) -> float:
    """RMSE over pixels with mask == 0."""
    orig, edited, roi = np.asarray(orig), np.asarray(edited), np.asarray(roi)
    if orig.shape != edited.shape:
        raise ValueError("image shapes disagree")
    outside = roi == 0
    if not outside.any():
        raise ValueError("RoI covers the whole image; nothing outside to measure")
    diff = (orig - edited)[outside]
    return float(np.sqrt(np.mean(diff ** 2)))


def psnr(orig: np.ndarray, recon: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(orig, dtype=np.float64) - recon) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


@dataclass
class EvalProtocol:
    mode: str = "color"                 # color | texture | reconstruction
    ks: tuple[int, ...] = (0,)
    cfg_scale: float = DEFAULT_CFG_SCALE
    ddim_steps: int = DEFAULT_DDIM_STEPS
    seed: int = 0
    max_examples: int = 150
    batch_size: int = 25
    color_tol: float = DEFAULT_COLOR_TOL

    def __post_init__(self):
        if self.mode not in ("color", "texture", "reconstruction"):
            raise ValueError(f"unknown eval mode {self.mode!r}")


def _request_seed(base: int, example_id: int, k: int) -> int:
    return int(np.random.SeedSequence([base, example_id, k]).generate_state(1)[0])


def _build_request(dataset, i: int, k: int, proto: EvalProtocol):
    """Returns (request, roi-for-metrics, target descriptor)."""
    img, mask, caption = dataset.load(i)
    color, shape, texture = parse_caption(caption)
    if proto.mode == "color":
        choices = [c for c in COLORS if c != color]
        target = choices[i % len(choices)]
        prompt = edit_prompt(caption, "color", target)
        roi = mask
    elif proto.mode == "texture":
        choices = [t for t in TEXTURES if t != texture]
        target = choices[i % len(choices)]
        prompt = edit_prompt(caption, "texture", target)
        roi = (1 - mask).astype(np.uint8)
    else:
        target = caption
        prompt = tokenize(caption)
        roi = mask
    req = EditRequest(image=img, roi=roi, prompt=prompt, k=k,
                      cfg_scale=proto.cfg_scale, ddim_steps=proto.ddim_steps,
                      seed=_request_seed(proto.seed, i, k))
    return i, req, roi, target, img


def evaluate(state: ModelState, testset: ShapesDataset,
             proto: EvalProtocol) -> dict:
    """Run the edit pipeline over the test set; returns the report dict."""
    n = min(len(testset), proto.max_examples)
    records = []
    for k in proto.ks:
        built = [_build_request(testset, i, k, proto) for i in range(n)]
        for lo in range(0, n, proto.batch_size):
            chunk = built[lo:lo + proto.batch_size]
            outs = edit_batch([c[1] for c in chunk], state)
            for (i, req, roi, target, orig), out in zip(chunk, outs):
                records.append(_score_record(proto, i, req, roi, target, orig, out))
    agg = aggregate(records)
    return {
        "protocol": asdict(proto),
        "records": records,
        "aggregates": agg,
    }


def _score_record(proto: EvalProtocol, example_id: int, req: EditRequest,
                  roi, target, orig, out) -> dict:
    if proto.mode == "color":
        success, score = edit_success_color(out, roi, COLOR_TABLE[target],
                                            tol=proto.color_tol)
    elif proto.mode == "texture":
        success, score = edit_success_texture(out, roi, target)
    else:
        success, score = True, 0.0
    return {
        "example_id": int(example_id),
        "prompt": req.prompt.raw,
        "k": int(req.k),
        "success": bool(success),
        "score": float(score),
        "rmse_outside": fidelity_outside_roi(orig, out, roi),
        "rmse_full": float(np.sqrt(np.mean((np.asarray(out, np.float64)
                                            - np.asarray(orig, np.float64)) ** 2))),
        "psnr": psnr(orig, out),
        "seed": int(req.seed),
        "target": target,
    }


def aggregate(records: list[dict]) -> dict:
    if not records:
        return {"success_rate": 0.0, "mean_rmse_outside": 0.0,
                "mean_rmse_full": 0.0, "mean_psnr": 0.0}
    by_k: dict[int, list[dict]] = {}
    for r in records:
        by_k.setdefault(r["k"], []).append(r)

    def summarize(rs):
        return {
            "count": len(rs),
            "success_rate": float(np.mean([r["success"] for r in rs])),
            "mean_rmse_outside": float(np.mean([r["rmse_outside"] for r in rs])),
            "mean_rmse_full": float(np.mean([r["rmse_full"] for r in rs])),
            "mean_psnr": float(np.mean([min(r["psnr"], 99.0) for r in rs])),
        }

    agg = summarize(records)
    agg["by_k"] = {str(k): summarize(rs) for k, rs in sorted(by_k.items())}
    return agg


def write_report(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["example_id", "prompt", "k", "success", "score",
                    "rmse_outside", "rmse_full", "psnr"])
        for r in report["records"]:
            w.writerow([r["example_id"], r["prompt"], r["k"], int(r["success"]),
                        f"{r['score']:.6f}", f"{r['rmse_outside']:.6f}",
                        f"{r['rmse_full']:.6f}", f"{r['psnr']:.4f}"])
