"""Deterministic DDIM sampling with classifier-free guidance, and the
end-to-end edit pipeline: assemble the condition once, then denoise pure
noise under the target prompt."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import torch

from . import iirm
from .model import ModelState, encode_condition, encode_text, predict_noise
from .schedule import BetaSchedule, make_schedule
from .text import NULL_PROMPT, Prompt

DEFAULT_CFG_SCALE = 9.0
DEFAULT_DDIM_STEPS = 20


@dataclass(frozen=True)
class EditRequest:
    image: np.ndarray
    roi: np.ndarray
    prompt: Prompt
    k: int = 0
    cfg_scale: float = DEFAULT_CFG_SCALE
    ddim_steps: int = DEFAULT_DDIM_STEPS
    seed: int = 0

    def __post_init__(self):
        if self.ddim_steps < 1:
            raise ValueError("ddim_steps must be >= 1")
        if self.cfg_scale < 0:
            raise ValueError("cfg_scale must be >= 0")
        if self.k < 0:
            raise ValueError("condition noise level must be >= 0")


def ddim_step(x_t: np.ndarray, eps_hat: np.ndarray, t: int, t_prev: int,
              sched: BetaSchedule) -> np.ndarray:
    """One eta=0 DDIM update from step t to t_prev (t_prev=0 returns the
    current clean-image estimate)."""
    if not 0 <= t_prev < t <= sched.num_steps:
        raise ValueError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    abar_t = sched.alpha_bar(t)
    assert abar_t > 0.0
    x0_hat = (x_t - np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(abar_t)
    if t_prev == 0:
        return x0_hat
    abar_prev = sched.alpha_bar(t_prev)
    return np.sqrt(abar_prev) * x0_hat + np.sqrt(1.0 - abar_prev) * eps_hat


def ddim_timesteps(T: int, steps: int) -> list[tuple[int, int]]:
    """Descending (t, t_prev) pairs, uniform stride over [1, T], ending at
    (1-ish, 0); the final step always maps to the clean estimate."""
    ts = np.unique(np.linspace(1, T, steps).round().astype(int))[::-1]
    prevs = list(ts[1:]) + [0]
    return list(zip(ts.tolist(), [int(p) for p in prevs]))


def _schedule_from_state(state: ModelState) -> BetaSchedule:
    cfg = state.config
    return make_schedule(cfg.get("T", 1000), cfg.get("beta_start", 1e-4),
                         cfg.get("beta_end", 0.02))


def _assemble_for_state(req: EditRequest, state: ModelState,
                        sched: BetaSchedule) -> np.ndarray:
    cfg = state.config
    return iirm.assemble_condition(
        req.image, req.roi, req.k, sched, req.seed,
        low=cfg.get("canny_low", iirm.DEFAULT_CANNY_LOW),
        high=cfg.get("canny_high", iirm.DEFAULT_CANNY_HIGH),
        sigma=cfg.get("canny_sigma", iirm.DEFAULT_CANNY_SIGMA),
        noise_roi_only=cfg.get("noise_roi_only", False),
        disable_removal=cfg.get("disable_iir", False))


@torch.no_grad()
def _ddim_loop(x: torch.Tensor, pairs, conds: torch.Tensor,
               prompts: Sequence[Prompt], state: ModelState,
               scale: float) -> torch.Tensor:
    b = x.shape[0]
    cond_feats = encode_condition(conds, state)
    text_c = encode_text(list(prompts), state)
    text_u = encode_text([NULL_PROMPT] * b, state)
    sched = _schedule_from_state(state)
    for t, t_prev in pairs:
        tt = torch.full((b,), t, dtype=torch.int64)
        eps_c = predict_noise(x, tt, text_c, cond_feats, state)
        eps_u = predict_noise(x, tt, text_u, cond_feats, state)
        eps_hat = eps_u + scale * (eps_c - eps_u)
        x = torch.from_numpy(
            ddim_step(x.numpy().astype(np.float64),
                      eps_hat.numpy().astype(np.float64), t, t_prev, sched)
        ).to(x.dtype)
    return x


def edit_batch(reqs: Sequence[EditRequest], state: ModelState) -> list[np.ndarray]:
    """Batched edits; all requests must share cfg_scale, ddim_steps and size."""
    if not reqs:
        return []
    scale = reqs[0].cfg_scale
    steps = reqs[0].ddim_steps
    for r in reqs:
        if r.cfg_scale != scale or r.ddim_steps != steps:
            raise ValueError("batched requests must share cfg_scale and ddim_steps")
    sched = _schedule_from_state(state)
    state.model.eval()
    conds = np.stack([_assemble_for_state(r, state, sched) for r in reqs])
    x0s = np.stack([
        np.random.default_rng([r.seed, 1]).standard_normal(r.image.shape)
        for r in reqs])
    x = torch.from_numpy(x0s).permute(0, 3, 1, 2).float()
    cond = torch.from_numpy(conds).permute(0, 3, 1, 2).float()
    pairs = ddim_timesteps(sched.num_steps, steps)
    out = _ddim_loop(x, pairs, cond, [r.prompt for r in reqs], state, scale)
    out = out.permute(0, 2, 3, 1).numpy()
    # Clamp to the pixel range only at the very end.
    return [np.clip(o, 0.0, 1.0).astype(np.float32) for o in out]


def edit(req: EditRequest, state: ModelState) -> np.ndarray:
    """Single edit: returns an HxWx3 image in [0, 1]."""
    return edit_batch([req], state)[0]


def ablate_noise_grid(req: EditRequest, state: ModelState,
                      ks: Sequence[int]) -> list[tuple[int, np.ndarray]]:
    """The same edit at several condition-noise levels, shared seed."""
    return [(int(k), edit(replace(req, k=int(k)), state)) for k in ks]
