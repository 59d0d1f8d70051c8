"""Forward-process diffusion math: beta schedules and closed-form noising.

One schedule is shared by the denoiser's timestep process and the condition
noising process; only the step index differs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BetaSchedule:
    """Linear-beta diffusion schedule with cached cumulative products.

    Step indices are 1-based in formulas and 0-based in the arrays:
    ``alpha_bars[k-1]`` is the cumulative product after k steps. k=0 means
    "no noise" and never touches the arrays.
    """

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D vector")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie strictly in (0, 1)")
        object.__setattr__(self, "betas", betas)
        alphas = 1.0 - betas
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", np.cumprod(alphas))

    @property
    def num_steps(self) -> int:
        return self.betas.size

    def alpha_bar(self, k: int) -> float:
        """Cumulative product after k steps; k=0 gives 1 (no noising)."""
        if not 0 <= k <= self.num_steps:
            raise ValueError(f"step index {k} outside [0, {self.num_steps}]")
        return 1.0 if k == 0 else float(self.alpha_bars[k - 1])


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02,
                  kind: str = "linear") -> BetaSchedule:
    """Build a T-step schedule. Only the linear ramp is supported."""
    if kind != "linear":
        raise ValueError(f"unknown schedule kind: {kind!r}")
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return BetaSchedule(betas=betas)


def q_sample(x0: np.ndarray, k: int, eps: np.ndarray, sched: BetaSchedule) -> np.ndarray:
    """Marginal sample of the k-step noising process.

    Returns sqrt(abar_k) * x0 + sqrt(1 - abar_k) * eps; k=0 returns x0
    unchanged. Equivalent in distribution to applying the one-step kernel
    k times.
    """
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    if k == 0:
        return x0
    abar = sched.alpha_bar(k)
    out = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
    return out.astype(x0.dtype, copy=False)
