"""Fabricated sprite banks for demos and tests.

Real side-scan captures show fish as small bright oval returns and dolphins
as larger elongated silhouettes; these generators draw the same shapes
procedurally so the full pipeline can run without any field data.
"""

from __future__ import annotations

import numpy as np

from .augment import gaussian_blur
from .raster import Raster, SeedStream, clipped_raster, derive_stream
from .scenegen import Sprite, SpriteBank


def _radial_field(h: int, w: int, rx: float, ry: float) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2


def make_fish_sprite(stream: SeedStream, index: int = 0) -> Sprite:
    """A small bright oval blob with a soft edge."""
    w = stream.integer(8, 13)
    h = stream.integer(6, 10)
    rr = _radial_field(h, w, rx=w / 2.2, ry=h / 2.2)
    base = stream.uniform(0.82, 1.0)
    body = base * np.clip(1.0 - 0.3 * rr, 0.0, 1.0)
    body += stream.normals((h, w), scale=0.02)
    alpha = np.clip((1.1 - rr) / 0.35, 0.0, 1.0)
    return Sprite(
        species="fish",
        patch=clipped_raster(body[:, :, None]),
        alpha=clipped_raster(alpha[:, :, None]),
        source_id=f"demo-fish-{index}",
    )


def make_dolphin_sprite(stream: SeedStream, index: int = 0) -> Sprite:
    """A larger elongated crescent silhouette with a bright upper rim."""
    length = stream.integer(16, 24)
    girth = max(6, int(length * stream.uniform(0.34, 0.44)))
    rr = _radial_field(girth, length, rx=length / 2.1, ry=girth / 2.1)
    # carve a crescent by subtracting a shifted inner ellipse
    ys, xs = np.mgrid[0:girth, 0:length]
    cx, cy = (length - 1) / 2.0, (girth - 1) / 2.0
    inner = (((xs - cx) / (length / 2.6)) ** 2
             + ((ys - cy - girth * 0.22) / (girth / 2.6)) ** 2)
    shape = np.clip(1.0 - rr, 0.0, 1.0) - 0.65 * np.clip(1.0 - inner, 0.0, 1.0)
    shape = np.clip(shape, 0.0, 1.0)
    base = stream.uniform(0.55, 0.75)
    rim = np.clip(1.0 - np.abs(rr - 0.75) / 0.25, 0.0, 1.0)
    body = base * (shape > 0.05) + 0.25 * rim * (shape > 0.05)
    body += stream.normals((girth, length), scale=0.015)
    alpha = np.clip(shape / 0.3, 0.0, 1.0)
    if alpha.max() <= 0.0:
        alpha[girth // 2, length // 2] = 1.0
    return Sprite(
        species="dolphin",
        patch=clipped_raster(body[:, :, None]),
        alpha=clipped_raster(alpha[:, :, None]),
        source_id=f"demo-dolphin-{index}",
    )


def make_background(stream: SeedStream, size: int = 96) -> Raster:
    """Dark seabed texture: low-frequency structure plus speckle."""
    coarse = stream.normals((size, size))
    coarse = gaussian_blur(clipped_raster(np.clip(coarse * 0.25 + 0.5, 0, 1)[:, :, None]), 5.0)
    texture = (coarse.pixels[:, :, 0] - 0.5) * 0.2
    speckle = stream.normals((size, size), scale=0.025)
    base = stream.uniform(0.10, 0.18)
    img = base + texture + speckle
    return clipped_raster(np.clip(img, 0.02, 0.45)[:, :, None])


def make_demo_bank(seed: int = 0, n_fish: int = 8, n_dolphins: int = 5,
                   n_backgrounds: int = 8, background_size: int = 96) -> SpriteBank:
    """A deterministic synthetic bank; same seed, same bank."""
    root = derive_stream(seed, ["demo-bank"])
    bank = SpriteBank()
    for i in range(n_fish):
        bank.fish.append(make_fish_sprite(root.child("fish", i), i))
    for i in range(n_dolphins):
        bank.dolphins.append(make_dolphin_sprite(root.child("dolphin", i), i))
    for i in range(n_backgrounds):
        bank.backgrounds.append(make_background(root.child("background", i), background_size))
    return bank
