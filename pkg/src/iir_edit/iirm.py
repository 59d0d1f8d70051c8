"""Image information removal: RoI grayscale, condition noising, Canny edges,
and assembly of the 4-channel condition tensor."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import kernels
from .schedule import BetaSchedule, q_sample

# ITU-R BT.601 luma weights.
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)

DEFAULT_CANNY_LOW = 100.0
DEFAULT_CANNY_HIGH = 200.0
DEFAULT_CANNY_SIGMA = 1.4


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {img.shape}")
    return img


def _check_mask(mask: np.ndarray, img: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    return mask


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """BT.601 luma replicated to all 3 channels."""
    img = _check_image(img)
    luma = img.astype(np.float64) @ GRAY_WEIGHTS
    out = np.repeat(luma[:, :, None], 3, axis=2)
    return out.astype(img.dtype, copy=False)


def remove_color(img: np.ndarray, roi: np.ndarray) -> np.ndarray:
    """Grayscale the RoI, keep every outside pixel bit-identical."""
    img = _check_image(img)
    roi = _check_mask(roi, img)
    gray = rgb_to_gray(img)
    return np.where(roi[:, :, None] > 0, gray, img)


def noise_condition(img: np.ndarray, k: int, sched: BetaSchedule, seed: int) -> np.ndarray:
    """k-step forward-noised condition image, deterministic per (img, k, seed)."""
    img = _check_image(img)
    if not 0 <= k <= sched.num_steps:
        raise ValueError(f"condition noise level {k} outside [0, {sched.num_steps}]")
    if k == 0:
        return img
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(img.shape)
    return q_sample(img.astype(np.float64), k, eps, sched).astype(img.dtype, copy=False)


def _gaussian_kernel_1d(sigma: float, radius: int = 2) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def canny_edges(img: np.ndarray, low: float = DEFAULT_CANNY_LOW,
                high: float = DEFAULT_CANNY_HIGH,
                sigma: float = DEFAULT_CANNY_SIGMA) -> np.ndarray:
    """Classic Canny pipeline on the luma channel; binary HxW output.

    Thresholds are on the 0-255 gradient-magnitude scale. Blur uses a 5x5
    Gaussian (separable), gradients use 3x3 Sobel.
    """
    img = _check_image(img)
    if not low < high:
        raise ValueError(f"need low < high, got {low} >= {high}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    luma = img.astype(np.float64) @ GRAY_WEIGHTS * 255.0
    k1 = _gaussian_kernel_1d(sigma)
    blurred = ndimage.convolve1d(luma, k1, axis=0, mode="nearest")
    blurred = ndimage.convolve1d(blurred, k1, axis=1, mode="nearest")

    sobel_x = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
    gx = ndimage.convolve(blurred, sobel_x, mode="nearest")
    gy = ndimage.convolve(blurred, sobel_x.T, mode="nearest")
    mag = np.hypot(gx, gy)

    # Replicated-border convolution leaves spurious gradients in the outer
    # two pixel rings; suppress them before tracing.
    mag[:2, :] = mag[-2:, :] = 0.0
    mag[:, :2] = mag[:, -2:] = 0.0
    thin = kernels.nonmax_suppress(mag, gx, gy)
    edges = kernels.hysteresis(thin, low, high)
    return edges.astype(np.float32)


def assemble_condition(x0: np.ndarray, roi: np.ndarray, k: int, sched: BetaSchedule,
                       seed: int, *, low: float = DEFAULT_CANNY_LOW,
                       high: float = DEFAULT_CANNY_HIGH,
                       sigma: float = DEFAULT_CANNY_SIGMA,
                       noise_roi_only: bool = False,
                       disable_removal: bool = False) -> np.ndarray:
    """Build the HxWx4 condition: color-removed + noised image, then edges.

    The edge channel is always computed from the original image. With
    ``noise_roi_only`` the noise is confined to the RoI; with
    ``disable_removal`` channels 0-2 are the raw image (ablation fixture for
    the identity-mapping failure mode).
    """
    x0 = _check_image(x0)
    roi = _check_mask(roi, x0)
    if disable_removal:
        degraded = x0.astype(np.float32, copy=True)
    else:
        color_removed = remove_color(x0, roi).astype(np.float32)
        noised = noise_condition(color_removed, k, sched, seed)
        if noise_roi_only and k > 0:
            degraded = np.where(roi[:, :, None] > 0, noised, color_removed)
        else:
            degraded = noised
    edges = canny_edges(x0, low=low, high=high, sigma=sigma)
    return np.concatenate([degraded, edges[:, :, None]], axis=2).astype(np.float32)
