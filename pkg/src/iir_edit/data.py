"""ShapesEdit: a synthetic captioned editing corpus at desk scale.

Each example is one colored shape on a textured background, with an exact
binary mask of the shape support and a grammar caption. Everything is
deterministic given the corpus seed.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .text import COLORS, SHAPES, TEXTURES, Prompt, make_caption, parse_caption, tokenize

MANIFEST_VERSION = 1

# Fixed name -> RGB table written into the manifest.
COLOR_TABLE: dict[str, tuple[float, float, float]] = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "orange": (1.0, 0.5, 0.0),
    "purple": (0.5, 0.0, 0.5),
}

# Background tints: moderate luma contrast so the texture is visible but the
# shape outline stays the dominant edge.
_BG_LIGHT = ((0.68, 0.64, 0.60), (0.60, 0.66, 0.68), (0.64, 0.60, 0.68))
_BG_DARK = ((0.40, 0.36, 0.32), (0.32, 0.38, 0.40), (0.36, 0.32, 0.40))
_BG_SOLID = ((0.55, 0.52, 0.50), (0.50, 0.54, 0.56), (0.52, 0.50, 0.56))

STRIPE_WIDTH = 2
CHECKER_CELL = 2


@dataclass(frozen=True)
class SceneSpec:
    shape: str
    color: str
    texture: str
    bg_choice: int        # index into the tint tables
    orientation: str      # "h" or "v"; only meaningful for stripes
    cx: float             # center, fraction of the canvas
    cy: float
    radius: float         # half-extent, fraction of the canvas
    seed: int

    def caption(self) -> str:
        return make_caption(self.color, self.shape, self.texture)


def sample_scene_spec(rng: np.random.Generator, seed: int) -> SceneSpec:
    return SceneSpec(
        shape=SHAPES[rng.integers(len(SHAPES))],
        color=COLORS[rng.integers(len(COLORS))],
        texture=TEXTURES[rng.integers(len(TEXTURES))],
        bg_choice=int(rng.integers(3)),
        orientation="hv"[rng.integers(2)],
        cx=float(rng.uniform(0.38, 0.62)),
        cy=float(rng.uniform(0.38, 0.62)),
        radius=float(rng.uniform(0.20, 0.30)),
        seed=seed,
    )


def _shape_mask(spec: SceneSpec, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    cx, cy, r = spec.cx * size, spec.cy * size, spec.radius * size
    if spec.shape == "circle":
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r ** 2
    elif spec.shape == "square":
        inside = (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
    else:  # triangle, apex up
        ax, ay = cx, cy - r
        bx, by = cx - 0.95 * r, cy + 0.75 * r
        dx, dy = cx + 0.95 * r, cy + 0.75 * r

        def half_plane(px, py, qx, qy):
            return (qx - px) * (yy - py) - (qy - py) * (xx - px)

        s1 = half_plane(ax, ay, bx, by)
        s2 = half_plane(bx, by, dx, dy)
        s3 = half_plane(dx, dy, ax, ay)
        inside = (s1 <= 0) & (s2 <= 0) & (s3 <= 0)
    return inside.astype(np.uint8)


def render_background(spec: SceneSpec, size: int) -> np.ndarray:
    light = np.array(_BG_LIGHT[spec.bg_choice])
    dark = np.array(_BG_DARK[spec.bg_choice])
    yy, xx = np.mgrid[0:size, 0:size]
    if spec.texture == "solid":
        bg = np.broadcast_to(np.array(_BG_SOLID[spec.bg_choice]), (size, size, 3)).copy()
    elif spec.texture == "stripes":
        coord = yy if spec.orientation == "h" else xx
        sel = (coord // STRIPE_WIDTH) % 2 == 0
        bg = np.where(sel[:, :, None], light, dark)
    else:  # checker
        sel = ((yy // CHECKER_CELL) + (xx // CHECKER_CELL)) % 2 == 0
        bg = np.where(sel[:, :, None], light, dark)
    return bg.astype(np.float32)


def render_scene(spec: SceneSpec, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize image and exact binary mask (the shape support)."""
    mask = _shape_mask(spec, size)
    img = render_background(spec, size)
    color = np.array(COLOR_TABLE[spec.color], dtype=np.float32)
    img = np.where(mask[:, :, None] > 0, color, img)
    return img.astype(np.float32), mask


def save_png(path: Path, arr: np.ndarray) -> None:
    """arr in [0,1] float (HxW or HxWx3) to 8-bit PNG."""
    a8 = np.clip(np.rint(np.asarray(arr) * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(a8).save(path, format="PNG")


def load_png(path) -> np.ndarray:
    arr = np.asarray(PILImage.open(path))
    return arr.astype(np.float32) / 255.0


def load_mask_png(path) -> np.ndarray:
    arr = np.asarray(PILImage.open(path).convert("L"))
    return (arr >= 128).astype(np.uint8)


def gen_dataset(n: int, size: int, seed: int, out_dir, workers: int = 1) -> dict:
    """Write n examples plus manifest.json under out_dir; returns the manifest."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    def build(i: int) -> dict:
        rng = np.random.default_rng([seed, i])
        spec = sample_scene_spec(rng, seed=i)
        img, mask = render_scene(spec, size)
        img_rel = f"images/{i:05d}.png"
        mask_rel = f"masks/{i:05d}.png"
        save_png(out / img_rel, img)
        save_png(out / mask_rel, mask.astype(np.float64))
        return {
            "id": i,
            "image": img_rel,
            "mask": mask_rel,
            "caption": spec.caption(),
            "scene": asdict(spec),
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(build, range(n)))
    else:
        records = [build(i) for i in range(n)]

    manifest = {
        "version": MANIFEST_VERSION,
        "image_size": size,
        "count": n,
        "seed": seed,
        "caption_grammar": "a {color} {shape} on {texture} background",
        "color_table": {k: list(v) for k, v in COLOR_TABLE.items()},
        "examples": records,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


class ShapesDataset:
    """Loaded view over a generated corpus directory."""

    def __init__(self, root):
        self.root = Path(root)
        with open(self.root / "manifest.json", encoding="utf-8") as f:
            self.manifest = json.load(f)
        self.examples = self.manifest["examples"]
        self.image_size = self.manifest["image_size"]

    def __len__(self) -> int:
        return len(self.examples)

    def load(self, i: int) -> tuple[np.ndarray, np.ndarray, str]:
        rec = self.examples[i]
        img = load_png(self.root / rec["image"])
        mask = load_mask_png(self.root / rec["mask"])
        return img, mask, rec["caption"]


def edit_prompt(caption: str, slot: str, new_value: str) -> Prompt:
    """Substitute one grammar slot of a caption and retokenize."""
    color, shape, texture = parse_caption(caption)
    if slot == "color":
        if new_value not in COLORS:
            raise ValueError(f"unknown color {new_value!r}")
        color = new_value
    elif slot == "texture":
        if new_value not in TEXTURES:
            raise ValueError(f"unknown texture {new_value!r}")
        texture = new_value
    else:
        raise ValueError(f"unknown slot {slot!r} (expected 'color' or 'texture')")
    return tokenize(make_caption(color, shape, texture))
