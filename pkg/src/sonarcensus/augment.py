"""Deterministic augmentation kernels and the two randomized policies.

Background policy (mirror, affine, blur) roughens empty canvases before
sprites are pasted; the global policy (color shift, brightness, grayscale,
blur, coarse dropout) runs on completed scenes. Both draw every parameter
from a SeedStream in a fixed order, so a replayed stream reproduces the
output bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .raster import Raster, SeedStream, bilinear_sample, clipped_raster

Interval = tuple[float, float]


class ChannelMismatchError(ValueError):
    """Operation requires a 3-channel raster."""


def _require_rgb(r: Raster, op: str):
    if r.channels != 3:
        raise ChannelMismatchError(f"{op} requires 3 channels, got {r.channels}")


# --- kernels -----------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(r: Raster, sigma: float) -> Raster:
    """Separable Gaussian blur, reflect padding (edge pixel not repeated)."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if 2.0 * sigma * sigma == 0.0:  # includes subnormal sigma whose kernel is a delta
        return r
    taps = gaussian_kernel(sigma)
    out = correlate1d(r.pixels, taps, axis=0, mode="mirror")
    out = correlate1d(out, taps, axis=1, mode="mirror")
    return clipped_raster(out)


def mirror(r: Raster, axis: str) -> Raster:
    """Flip left-right ("horizontal") or top-bottom ("vertical")."""
    if axis == "horizontal":
        return Raster(r.pixels[:, ::-1, :])
    if axis == "vertical":
        return Raster(r.pixels[::-1, :, :])
    raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


@dataclass(frozen=True)
class AffineParams:
    """Rotation (degrees, about center), isotropic scale, pixel translation.

    The forward map is p' = R(rotation) * scale * (p - center) + center +
    (translate_x, translate_y); composing with inverse() recovers the
    identity up to interpolation error.
    """

    rotation_deg: float = 0.0
    scale: float = 1.0
    translate_x: float = 0.0
    translate_y: float = 0.0
    center: tuple[float, float] | None = None  # None: image center

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def is_identity(self) -> bool:
        return (
            self.rotation_deg % 360.0 == 0.0
            and self.scale == 1.0
            and self.translate_x == 0.0
            and self.translate_y == 0.0
        )

    def inverse(self) -> "AffineParams":
        th = math.radians(-self.rotation_deg)
        c, s = math.cos(th), math.sin(th)
        tx, ty = self.translate_x, self.translate_y
        return AffineParams(
            rotation_deg=-self.rotation_deg,
            scale=1.0 / self.scale,
            translate_x=-(c * tx - s * ty) / self.scale,
            translate_y=-(s * tx + c * ty) / self.scale,
            center=self.center,
        )


def affine(r: Raster, p: AffineParams) -> Raster:
    """Inverse-mapped affine warp with bilinear sampling; fill value 0."""
    if p.is_identity():
        return r
    cx, cy = p.center if p.center is not None else ((r.width - 1) / 2.0, (r.height - 1) / 2.0)
    th = math.radians(p.rotation_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    xs, ys = np.meshgrid(
        np.arange(r.width, dtype=np.float64), np.arange(r.height, dtype=np.float64)
    )
    # invert p' = R S (p - c) + c + t  =>  p = S^-1 R^-1 (p' - c - t) + c
    dx = xs - cx - p.translate_x
    dy = ys - cy - p.translate_y
    src_x = (cos_t * dx + sin_t * dy) / p.scale + cx
    src_y = (-sin_t * dx + cos_t * dy) / p.scale + cy
    out = bilinear_sample(r.pixels, src_x, src_y, fill=0.0)
    return clipped_raster(out)


def adjust_brightness(r: Raster, factor: float) -> Raster:
    if factor <= 0:
        raise ValueError(f"brightness factor must be positive, got {factor}")
    if factor == 1.0:
        return r
    return clipped_raster(r.pixels * factor)


def color_shift(r: Raster, deltas) -> Raster:
    """Add a per-channel offset, clamping into [0, 1]."""
    _require_rgb(r, "color_shift")
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.shape != (3,):
        raise ValueError(f"deltas must have shape (3,), got {deltas.shape}")
    if np.all(deltas == 0.0):
        return r
    return clipped_raster(r.pixels + deltas[None, None, :])


GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(r: Raster) -> Raster:
    """Luma-weighted grayscale, returned as 3 equal channels."""
    _require_rgb(r, "to_grayscale")
    luma = r.pixels @ GRAY_WEIGHTS
    return clipped_raster(np.repeat(luma[:, :, None], 3, axis=2))


def coarse_dropout(r: Raster, stream: SeedStream, rate: float, block: int) -> Raster:
    """Zero block-aligned squares until at least `rate` of pixels is covered.

    Squares come from a stream-drawn permutation of the block grid, so the
    covered fraction overshoots `rate` by less than one block's worth.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    h, w = r.height, r.width
    target = rate * h * w
    if target <= 0:
        return r
    rows = -(-h // block)
    cols = -(-w // block)
    order = stream.permutation(rows * cols)
    out = np.array(r.pixels)
    covered = 0
    for cell in order:
        if covered >= target:
            break
        cy, cx = divmod(int(cell), cols)
        y0, x0 = cy * block, cx * block
        y1, x1 = min(y0 + block, h), min(x0 + block, w)
        out[y0:y1, x0:x1, :] = 0.0
        covered += (y1 - y0) * (x1 - x0)
    return Raster(out)


# --- policies ----------------------------------------------------------------

def _interval(lo, hi) -> Interval:
    return (float(lo), float(hi))


@dataclass(frozen=True)
class BackgroundPolicy:
    mirror_h_prob: float = 0.5
    mirror_v_prob: float = 0.25
    rotation_deg: Interval = (-15.0, 15.0)
    scale: Interval = (0.9, 1.1)
    translate_frac: Interval = (-0.05, 0.05)
    blur_sigma: Interval = (0.0, 1.5)


@dataclass(frozen=True)
class GlobalPolicy:
    color_delta: Interval = (-0.1, 0.1)
    brightness: Interval = (0.8, 1.2)
    grayscale_prob: float = 0.2
    blur_sigma: Interval = (0.0, 1.0)
    dropout_rate: Interval = (0.0, 0.03)
    dropout_block: tuple[int, int] = (4, 8)


@dataclass(frozen=True)
class PolicyConfig:
    background_policy: BackgroundPolicy = field(default_factory=BackgroundPolicy)
    global_policy: GlobalPolicy = field(default_factory=GlobalPolicy)

    def __post_init__(self):
        problems = validate_policies(self)
        if problems:
            raise ValueError("; ".join(problems))

    @staticmethod
    def degenerate() -> "PolicyConfig":
        """A config under which both policies are exact identities."""
        return PolicyConfig(
            background_policy=BackgroundPolicy(
                mirror_h_prob=0.0,
                mirror_v_prob=0.0,
                rotation_deg=(0.0, 0.0),
                scale=(1.0, 1.0),
                translate_frac=(0.0, 0.0),
                blur_sigma=(0.0, 0.0),
            ),
            global_policy=GlobalPolicy(
                color_delta=(0.0, 0.0),
                brightness=(1.0, 1.0),
                grayscale_prob=0.0,
                blur_sigma=(0.0, 0.0),
                dropout_rate=(0.0, 0.0),
                dropout_block=(4, 4),
            ),
        )


def validate_policies(cfg: PolicyConfig) -> list[str]:
    problems = []
    bg, gp = cfg.background_policy, cfg.global_policy
    for name, p in [("mirror_h_prob", bg.mirror_h_prob), ("mirror_v_prob", bg.mirror_v_prob),
                    ("grayscale_prob", gp.grayscale_prob)]:
        if not 0.0 <= p <= 1.0:
            problems.append(f"{name} must be in [0, 1], got {p}")
    for name, iv in [("rotation_deg", bg.rotation_deg), ("scale", bg.scale),
                     ("translate_frac", bg.translate_frac), ("blur_sigma", bg.blur_sigma),
                     ("color_delta", gp.color_delta), ("brightness", gp.brightness),
                     ("global blur_sigma", gp.blur_sigma), ("dropout_rate", gp.dropout_rate),
                     ("dropout_block", gp.dropout_block)]:
        if iv[0] > iv[1]:
            problems.append(f"{name} interval is empty: {iv}")
    if bg.scale[0] <= 0:
        problems.append(f"scale interval must be positive, got {bg.scale}")
    if bg.blur_sigma[0] < 0 or gp.blur_sigma[0] < 0:
        problems.append("blur_sigma must be non-negative")
    if gp.dropout_rate[0] < 0 or gp.dropout_rate[1] > 1:
        problems.append(f"dropout_rate must be within [0, 1], got {gp.dropout_rate}")
    if gp.dropout_block[0] < 1:
        problems.append(f"dropout_block must be >= 1, got {gp.dropout_block}")
    if gp.brightness[0] <= 0:
        problems.append(f"brightness interval must be positive, got {gp.brightness}")
    return problems


@dataclass(frozen=True)
class BackgroundDraw:
    mirror_h: bool
    mirror_v: bool
    rotation_deg: float
    scale: float
    translate_fx: float
    translate_fy: float
    blur_sigma: float


@dataclass(frozen=True)
class GlobalDraw:
    color_deltas: tuple[float, float, float]
    brightness: float
    grayscale: bool
    blur_sigma: float
    dropout_rate: float
    dropout_block: int


def draw_background_params(stream: SeedStream, policy: BackgroundPolicy) -> BackgroundDraw:
    """Consume a fixed-length draw sequence regardless of which ops fire."""
    return BackgroundDraw(
        mirror_h=stream.uniform() < policy.mirror_h_prob,
        mirror_v=stream.uniform() < policy.mirror_v_prob,
        rotation_deg=stream.uniform(*policy.rotation_deg),
        scale=stream.uniform(*policy.scale),
        translate_fx=stream.uniform(*policy.translate_frac),
        translate_fy=stream.uniform(*policy.translate_frac),
        blur_sigma=stream.uniform(*policy.blur_sigma),
    )


def draw_global_params(stream: SeedStream, policy: GlobalPolicy) -> GlobalDraw:
    return GlobalDraw(
        color_deltas=(
            stream.uniform(*policy.color_delta),
            stream.uniform(*policy.color_delta),
            stream.uniform(*policy.color_delta),
        ),
        brightness=stream.uniform(*policy.brightness),
        grayscale=stream.uniform() < policy.grayscale_prob,
        blur_sigma=stream.uniform(*policy.blur_sigma),
        dropout_rate=stream.uniform(*policy.dropout_rate),
        dropout_block=stream.integer(policy.dropout_block[0], policy.dropout_block[1] + 1),
    )


def apply_background_draw(r: Raster, draw: BackgroundDraw) -> Raster:
    if draw.mirror_h:
        r = mirror(r, "horizontal")
    if draw.mirror_v:
        r = mirror(r, "vertical")
    r = affine(r, AffineParams(
        rotation_deg=draw.rotation_deg,
        scale=draw.scale,
        translate_x=draw.translate_fx * r.width,
        translate_y=draw.translate_fy * r.height,
    ))
    return gaussian_blur(r, draw.blur_sigma)


def apply_background_policy(r: Raster, stream: SeedStream, cfg: PolicyConfig) -> Raster:
    """Fixed order: mirror, affine, blur."""
    return apply_background_draw(r, draw_background_params(stream, cfg.background_policy))


def apply_global_policy(r: Raster, stream: SeedStream, cfg: PolicyConfig) -> Raster:
    """Fixed order: color shift, brightness, grayscale, blur, coarse dropout."""
    _require_rgb(r, "apply_global_policy")
    draw = draw_global_params(stream, cfg.global_policy)
    r = color_shift(r, draw.color_deltas)
    r = adjust_brightness(r, draw.brightness)
    if draw.grayscale:
        r = to_grayscale(r)
    r = gaussian_blur(r, draw.blur_sigma)
    return coarse_dropout(r, stream, draw.dropout_rate, draw.dropout_block)
