"""Pure numpy fallback for the Canny inner loops.

Must stay output-identical to the Cython backend; the parity test in
tests/test_kernels.py enforces that.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin ridges of the gradient magnitude along the quantized direction.

    Directions are binned to 0/45/90/135 degrees; a pixel survives iff it is
    strictly greater than its first neighbor and >= the second, so a
    perfectly symmetric step keeps exactly one ridge. Border pixels are
    zeroed.
    """
    mag = np.asarray(mag, dtype=np.float64)
    d = (np.degrees(np.arctan2(gy, gx)) + 180.0) % 180.0

    h, w = mag.shape
    out = np.zeros_like(mag)
    if h < 3 or w < 3:
        return out

    # Padded view so every interior pixel has all 8 neighbors.
    p = np.pad(mag, 1, mode="constant")

    def shifted(di, dj):
        return p[1 + di:1 + di + h, 1 + dj:1 + dj + w]

    sector0 = (d < 22.5) | (d >= 157.5)          # horizontal gradient
    sector45 = (d >= 22.5) & (d < 67.5)
    sector90 = (d >= 67.5) & (d < 112.5)         # vertical gradient
    sector135 = (d >= 112.5) & (d < 157.5)

    n1 = np.where(sector0, shifted(0, -1),
         np.where(sector45, shifted(-1, 1),
         np.where(sector90, shifted(-1, 0), shifted(-1, -1))))
    n2 = np.where(sector0, shifted(0, 1),
         np.where(sector45, shifted(1, -1),
         np.where(sector90, shifted(1, 0), shifted(1, 1))))

    keep = (mag > n1) & (mag >= n2)
    out[keep] = mag[keep]
    out[0, :] = out[-1, :] = 0.0
    out[:, 0] = out[:, -1] = 0.0
    return out


def hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Double threshold then keep weak pixels 8-connected to a strong one."""
    strong = mag >= high
    weak = mag >= low
    reach = strong.copy()
    structure = np.ones((3, 3), dtype=bool)
    while True:
        grown = ndimage.binary_dilation(reach, structure=structure) & weak
        if np.array_equal(grown, reach):
            break
        reach = grown
    return reach.astype(np.uint8)
