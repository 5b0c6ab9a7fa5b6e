"""Image representation, PNG I/O, resizing, and seeded randomness streams.

Pixels are stored as float64 in [0, 1]; 8-bit integers appear only at the
file boundary. All operations are pure: inputs are never mutated, every
returned raster is clamped back into [0, 1].
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class UnsupportedFormatError(ValueError):
    """File is not an 8-bit grayscale/RGB PNG."""


class CorruptImageError(ValueError):
    """File has a PNG signature but cannot be decoded."""


def _as_pixels(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"pixels must be HxWxC, got shape {a.shape}")
    if a.shape[2] not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {a.shape[2]}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"empty raster shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("pixels contain non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("pixels outside [0, 1]")
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Raster:
    """A height x width x channels image, channels 1 or 3, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _as_pixels(self.pixels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def clipped_raster(values) -> Raster:
    """Build a Raster from an array, clamping into [0, 1] first."""
    return Raster(np.clip(values, 0.0, 1.0))


def ensure_rgb(r: Raster) -> Raster:
    """Broadcast a grayscale raster to 3 identical channels; pass RGB through."""
    if r.channels == 3:
        return r
    return Raster(np.repeat(r.pixels, 3, axis=2))


def load_raster(path) -> Raster:
    """Load an 8-bit grayscale or RGB PNG, mapping values to [0, 1] via v/255."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    data = path.read_bytes()
    if not data.startswith(PNG_SIGNATURE):
        raise UnsupportedFormatError(f"not a PNG file: {path}")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except Exception as exc:
        raise CorruptImageError(f"cannot decode PNG {path}: {exc}") from exc
    if mode not in ("L", "RGB"):
        raise UnsupportedFormatError(
            f"unsupported PNG mode {mode!r} in {path} (need 8-bit L or RGB)"
        )
    return Raster(arr.astype(np.float64) / 255.0)


def save_raster(r: Raster, path) -> None:
    """Write a raster as an 8-bit PNG, quantizing with v' = round(v * 255)."""
    arr = np.rint(r.pixels * 255.0).astype(np.uint8)
    if r.channels == 1:
        im = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        im = Image.fromarray(arr, mode="RGB")
    im.save(Path(path), format="PNG")


def encode_png(r: Raster) -> bytes:
    """PNG bytes for a raster; same quantization as save_raster."""
    arr = np.rint(r.pixels * 255.0).astype(np.uint8)
    im = Image.fromarray(arr[:, :, 0] if r.channels == 1 else arr,
                         mode="L" if r.channels == 1 else "RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    fill: float | None = 0.0) -> np.ndarray:
    """Sample an HxWxC array at real-valued (xs, ys) positions.

    With fill=None coordinates are clamped to the image rectangle; otherwise
    out-of-bounds corner taps contribute the fill value.
    """
    h, w = pixels.shape[:2]
    if fill is None:
        xs = np.clip(xs, 0.0, w - 1.0)
        ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    def tap(yi, xi):
        if fill is None:
            yc = np.clip(yi, 0, h - 1)
            xc = np.clip(xi, 0, w - 1)
            return pixels[yc, xc]
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        vals = pixels[yc, xc]
        return np.where(inside[..., None], vals, fill)

    v00 = tap(y0, x0)
    v01 = tap(y0, x0 + 1)
    v10 = tap(y0 + 1, x0)
    v11 = tap(y0 + 1, x0 + 1)
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def resize(r: Raster, width: int, height: int) -> Raster:
    """Bilinear resize to exactly (width, height), half-pixel-center convention."""
    if width <= 0 or height <= 0:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    if width == r.width and height == r.height:
        return r
    sx = r.width / width
    sy = r.height / height
    xs = (np.arange(width, dtype=np.float64) + 0.5) * sx - 0.5
    ys = (np.arange(height, dtype=np.float64) + 0.5) * sy - 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    out = bilinear_sample(r.pixels, grid_x, grid_y, fill=None)
    return clipped_raster(out)


# --- seeded randomness ------------------------------------------------------

_MAX_SEED = 2**64


def _label_to_int(label) -> int:
    if isinstance(label, str):
        return int.from_bytes(
            hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little"
        )
    label = int(label)
    if not 0 <= label < _MAX_SEED:
        raise ValueError(f"label out of 64-bit range: {label}")
    return label


def _entropy(root_seed: int, path: tuple[int, ...]) -> int:
    h = hashlib.sha256()
    h.update(root_seed.to_bytes(8, "little"))
    for label in path:
        h.update(label.to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


@dataclass(eq=False)
class SeedStream:
    """Splittable random stream: a pure function of (root_seed, path).

    Sibling paths hash to independent PCG64 states, so scene i can use
    path (i,) and be generated in any order, on any worker, with identical
    results. A stream is single-consumer; derive children for parallel work.
    """

    root_seed: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.root_seed = int(self.root_seed)
        if not 0 <= self.root_seed < _MAX_SEED:
            raise ValueError(f"root seed out of 64-bit range: {self.root_seed}")
        self.path = tuple(_label_to_int(p) for p in self.path)
        seq = np.random.SeedSequence(_entropy(self.root_seed, self.path))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *labels) -> "SeedStream":
        return SeedStream(self.root_seed, self.path + tuple(labels))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self._gen.uniform(low, high))

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=n)

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in the half-open range [low, high)."""
        return int(self._gen.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normals(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)


def derive_stream(root_seed: int, labels=()) -> SeedStream:
    """Stream at a derivation point; identical (root_seed, labels) replays exactly."""
    return SeedStream(root_seed, tuple(labels))


def derive_seed(root_seed: int, *labels) -> int:
    """A stable 64-bit seed derived from (root_seed, labels)."""
    path = tuple(_label_to_int(l) for l in labels)
    return _entropy(int(root_seed), path) % _MAX_SEED
