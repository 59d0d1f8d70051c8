"""Training loop for the conditional denoiser: per-example timestep,
condition-noise level and text dropout draws, Adam updates, CSV loss log,
atomic checkpoints, resume."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import iirm
from .checkpoint import load_checkpoint, save_checkpoint
from .data import ShapesDataset
from .model import (ModelConfig, ModelState, encode_condition, encode_text,
                    init_state, predict_noise)
from .schedule import BetaSchedule, make_schedule, q_sample
from .text import NULL_PROMPT, Prompt, tokenize

LATEST_CKPT = "ckpt_latest.ckpt"


@dataclass
class TrainConfig:
    dataset: str = ""
    out_dir: str = ""
    T: int = 1000
    K: int = 250
    beta_start: float = 1e-4
    beta_end: float = 0.02
    batch_size: int = 8
    lr: float = 1e-4
    total_steps: int = 20000
    text_dropout: float = 0.1
    seed: int = 0
    image_size: int = 64
    ckpt_every: int = 1000
    canny_low: float = iirm.DEFAULT_CANNY_LOW
    canny_high: float = iirm.DEFAULT_CANNY_HIGH
    canny_sigma: float = iirm.DEFAULT_CANNY_SIGMA
    noise_roi_only: bool = False
    disable_iir: bool = False
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.text_dropout <= 1.0:
            raise ValueError("text_dropout must be in [0, 1]")
        if not 0 <= self.K <= self.T:
            raise ValueError("need 0 <= K <= T")


@dataclass
class NoiseDraws:
    """Per-example randomness for one training step."""
    t: np.ndarray          # (B,) int, 1..T
    k: np.ndarray          # (B,) int, 0..K
    eps: np.ndarray        # (B, H, W, 3) standard normal
    cond_seed: np.ndarray  # (B,) int seeds for condition noising
    drop_text: np.ndarray  # (B,) bool, True -> NULL prompt


def draw_batch_noise(rng: np.random.Generator, batch_size: int, size: int,
                     cfg: TrainConfig) -> NoiseDraws:
    return NoiseDraws(
        t=rng.integers(1, cfg.T + 1, size=batch_size),
        k=rng.integers(0, cfg.K + 1, size=batch_size),
        eps=rng.standard_normal((batch_size, size, size, 3)),
        cond_seed=rng.integers(0, 2**31 - 1, size=batch_size),
        drop_text=rng.random(batch_size) < cfg.text_dropout,
    )


def training_loss(batch: Sequence[tuple[np.ndarray, np.ndarray, Prompt]],
                  draws: NoiseDraws, state: ModelState, sched: BetaSchedule,
                  cfg: TrainConfig) -> torch.Tensor:
    """Mean squared noise-prediction error over the batch; graph attached.

    The condition is rebuilt per example from (image, mask) with the drawn
    noise level k; the target is the noise injected into the main process.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    xs, conds, prompts = [], [], []
    for i, (img, roi, prompt) in enumerate(batch):
        x_t = q_sample(img.astype(np.float64), int(draws.t[i]), draws.eps[i], sched)
        cond = iirm.assemble_condition(
            img, roi, int(draws.k[i]), sched, int(draws.cond_seed[i]),
            low=cfg.canny_low, high=cfg.canny_high, sigma=cfg.canny_sigma,
            noise_roi_only=cfg.noise_roi_only, disable_removal=cfg.disable_iir)
        xs.append(x_t)
        conds.append(cond)
        prompts.append(NULL_PROMPT if draws.drop_text[i] else prompt)

    dtype = next(state.model.parameters()).dtype
    x_t = torch.from_numpy(np.stack(xs)).permute(0, 3, 1, 2).to(dtype)
    cond = torch.from_numpy(np.stack(conds)).permute(0, 3, 1, 2).to(dtype)
    eps = torch.from_numpy(np.stack(draws.eps)).permute(0, 3, 1, 2).to(dtype)
    t = torch.from_numpy(draws.t.astype(np.int64))

    text = encode_text(prompts, state)
    cond_feats = encode_condition(cond, state)
    eps_hat = predict_noise(x_t, t, text, cond_feats, state)
    return torch.mean((eps - eps_hat) ** 2)


def _load_examples(dataset: ShapesDataset):
    examples = []
    for i in range(len(dataset)):
        img, mask, caption = dataset.load(i)
        examples.append((img, mask, tokenize(caption)))
    return examples


def train(cfg: TrainConfig, dataset: ShapesDataset | None = None) -> ModelState:
    """Run (or resume) training; writes checkpoints and loss.csv to out_dir."""
    if dataset is None:
        dataset = ShapesDataset(cfg.dataset)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    opt_factory = lambda params: torch.optim.Adam(params, lr=cfg.lr)

    latest = out / LATEST_CKPT
    if latest.exists():
        state, optimizer = load_checkpoint(latest, optimizer_factory=opt_factory)
    else:
        model_cfg = ModelConfig(image_size=cfg.image_size)
        # Filesystem paths stay out of the checkpoint so identical runs in
        # different directories produce byte-identical files.
        ckpt_cfg = {k: v for k, v in asdict(cfg).items()
                    if k not in ("dataset", "out_dir")}
        state = init_state(model_cfg, train_config=ckpt_cfg, seed=cfg.seed)
        optimizer = opt_factory(state.model.parameters())

    examples = _load_examples(dataset)
    if examples[0][0].shape[0] != cfg.image_size:
        raise ValueError(
            f"dataset image size {examples[0][0].shape[0]} != config {cfg.image_size}")

    log_path = out / "loss.csv"
    new_log = not log_path.exists()
    start = time.monotonic()
    with open(log_path, "a", newline="") as log_f:
        log = csv.writer(log_f)
        if new_log:
            log.writerow(["step", "loss", "seconds"])
        while state.step < cfg.total_steps:
            step = state.step
            rng = np.random.default_rng([cfg.seed, 7, step])
            idx = rng.integers(0, len(examples), size=cfg.batch_size)
            batch = [examples[i] for i in idx]
            draws = draw_batch_noise(rng, cfg.batch_size, cfg.image_size, cfg)

            loss = training_loss(batch, draws, state, sched, cfg)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at step {step} (t={draws.t.tolist()}, "
                    f"k={draws.k.tolist()}); aborting")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            state.step = step + 1

            log.writerow([state.step, f"{loss.item():.8f}",
                          f"{time.monotonic() - start:.3f}"])
            if state.step % cfg.ckpt_every == 0 or state.step == cfg.total_steps:
                log_f.flush()
                save_checkpoint(out / f"ckpt_{state.step:07d}.ckpt", state, optimizer)
                save_checkpoint(latest, state, optimizer)
    return state
