"""Sprite extraction, scene composition, and deterministic dataset generation.

A scene is assembled as: pick a background, roughen it with the background
policy, paste a uniform-random number of fish and dolphin sprites (each
rescaled and rotated) at uniform-random positions with full containment,
then run the global policy over the finished canvas. Scene i draws all of
its randomness from the stream derived at path (i,), so datasets are
byte-identical no matter the generation order or worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import PolicyConfig, apply_background_policy, apply_global_policy
from .raster import (
    Raster,
    SeedStream,
    bilinear_sample,
    clipped_raster,
    derive_stream,
    encode_png,
    ensure_rgb,
    load_raster,
    resize,
    save_raster,
)

GENERATOR_VERSION = "1"
SPECIES = ("fish", "dolphin")
SCENE_FILE_PATTERN = "scene_{:07d}.png"


class PlacementInfeasibleError(RuntimeError):
    """No containing position found for a sprite after the attempt cap."""

    def __init__(self, message, scene_id=None):
        super().__init__(message)
        self.scene_id = scene_id


@dataclass(frozen=True)
class Sprite:
    species: str
    patch: Raster
    alpha: Raster
    source_id: str = ""

    def __post_init__(self):
        if self.species not in SPECIES:
            raise ValueError(f"unknown species {self.species!r}")
        if (self.patch.height, self.patch.width) != (self.alpha.height, self.alpha.width):
            raise ValueError("patch and alpha dimensions differ")
        if self.alpha.channels != 1:
            raise ValueError("alpha must be single-channel")
        if self.alpha.pixels.max() <= 0.0:
            raise ValueError("alpha is fully transparent")


@dataclass
class SpriteBank:
    fish: list[Sprite] = field(default_factory=list)
    dolphins: list[Sprite] = field(default_factory=list)
    backgrounds: list[Raster] = field(default_factory=list)

    def sprites_of(self, species: str) -> list[Sprite]:
        return self.fish if species == "fish" else self.dolphins


@dataclass(frozen=True)
class Placement:
    species: str
    sprite_index: int
    x: int
    y: int
    scale: float
    rotation_deg: float


@dataclass(frozen=True)
class SceneRecord:
    id: int
    seed_path: tuple[int, ...]
    background_index: int
    placements: tuple[Placement, ...]
    fish_count: int
    dolphin_count: int
    file: str


@dataclass(frozen=True)
class SceneConfig:
    canvas_width: int = 224
    canvas_height: int = 224
    max_fish: int = 34
    max_dolphin: int = 3
    sprite_scale: tuple[float, float] = (0.7, 1.3)
    max_place_attempts: int = 100
    policies: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        if self.canvas_width < 1 or self.canvas_height < 1:
            raise ValueError("canvas dimensions must be positive")
        if self.max_fish < 0 or self.max_dolphin < 0:
            raise ValueError("count maxima must be non-negative")
        if not 0 < self.sprite_scale[0] <= self.sprite_scale[1]:
            raise ValueError(f"bad sprite scale range {self.sprite_scale}")


@dataclass
class DatasetManifest:
    root_seed: int
    generator_version: str
    max_fish: int
    max_dolphin: int
    canvas_width: int
    canvas_height: int
    records: list[SceneRecord] = field(default_factory=list)


# --- sprite extraction --------------------------------------------------------

@dataclass(frozen=True)
class Annotation:
    species: str
    x: int
    y: int
    w: int
    h: int
    mask: Raster | None = None


def _fill_holes_by_row(pixels: np.ndarray, hole: np.ndarray) -> np.ndarray:
    """Each hole pixel takes the mean of its nearest non-hole row neighbors
    (the median of a one- or two-point set)."""
    out = np.array(pixels)
    h, w = hole.shape
    if hole.all():
        out[:] = 0.5
        return out
    global_fill = np.median(pixels[~hole], axis=0)
    for yi in range(h):
        row_hole = hole[yi]
        if not row_hole.any():
            continue
        if row_hole.all():
            out[yi, :] = global_fill
            continue
        padded = np.concatenate([[False], row_hole, [False]])
        starts = np.flatnonzero(~padded[:-2] & padded[1:-1])
        ends = np.flatnonzero(padded[1:-1] & ~padded[2:])
        for a, b in zip(starts, ends):
            vals = []
            if a > 0:
                vals.append(pixels[yi, a - 1])
            if b + 1 < w:
                vals.append(pixels[yi, b + 1])
            out[yi, a : b + 1] = np.mean(vals, axis=0)
    return out


def extract_sprites(image: Raster, annotations: list[Annotation]) -> tuple[list[Sprite], Raster]:
    """Cut annotated boxes into sprites and return a hole-filled background.

    Hole pixels take the median of their nearest non-hole row neighbors and
    the filled region is then smoothed with a sigma=1 blur.
    """
    from .augment import gaussian_blur

    if not annotations:
        return [], image
    hole = np.zeros((image.height, image.width), dtype=bool)
    sprites = []
    for i, ann in enumerate(annotations):
        if ann.species not in SPECIES:
            raise ValueError(f"annotation {i}: unknown species {ann.species!r}")
        if ann.w <= 0 or ann.h <= 0:
            raise ValueError(f"annotation {i}: empty box {ann.w}x{ann.h}")
        if ann.x < 0 or ann.y < 0 or ann.x + ann.w > image.width or ann.y + ann.h > image.height:
            raise ValueError(f"annotation {i}: box outside image bounds")
        patch = Raster(image.pixels[ann.y : ann.y + ann.h, ann.x : ann.x + ann.w, :])
        if ann.mask is not None:
            if (ann.mask.height, ann.mask.width) != (ann.h, ann.w):
                raise ValueError(f"annotation {i}: mask dimensions differ from box")
            alpha = ann.mask
        else:
            alpha = Raster(np.ones((ann.h, ann.w, 1)))
        sprites.append(Sprite(species=ann.species, patch=patch, alpha=alpha))
        hole[ann.y : ann.y + ann.h, ann.x : ann.x + ann.w] = True
    filled = _fill_holes_by_row(image.pixels, hole)
    smoothed = gaussian_blur(clipped_raster(filled), 1.0).pixels
    background = np.where(hole[:, :, None], smoothed, image.pixels)
    return sprites, clipped_raster(background)


# --- sprite transform and compositing ------------------------------------------

def transform_sprite(sprite: Sprite, scale: float, rotation_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotate and scale a sprite into a minimally-sized canvas.

    Returns (patch, alpha) arrays; out-of-source samples are transparent.
    """
    patch = sprite.patch.pixels
    alpha = sprite.alpha.pixels
    h, w = patch.shape[:2]
    th = math.radians(rotation_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    half_x = ((w - 1) * abs(cos_t) + (h - 1) * abs(sin_t)) * scale / 2.0
    half_y = ((w - 1) * abs(sin_t) + (h - 1) * abs(cos_t)) * scale / 2.0
    out_w = 2 * math.ceil(half_x) + 1
    out_h = 2 * math.ceil(half_y) + 1
    cx_out, cy_out = (out_w - 1) / 2.0, (out_h - 1) / 2.0
    cx_src, cy_src = (w - 1) / 2.0, (h - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    dx = xs - cx_out
    dy = ys - cy_out
    src_x = (cos_t * dx + sin_t * dy) / scale + cx_src
    src_y = (-sin_t * dx + cos_t * dy) / scale + cy_src
    both = np.concatenate([patch, alpha], axis=2)
    warped = bilinear_sample(both, src_x, src_y, fill=0.0)
    return warped[:, :, :-1], warped[:, :, -1:]


def paste(canvas: np.ndarray, patch: np.ndarray, alpha: np.ndarray, x: int, y: int) -> None:
    """Alpha-composite patch over canvas in place: out = a*sprite + (1-a)*canvas."""
    h, w = patch.shape[:2]
    region = canvas[y : y + h, x : x + w, :]
    region[:] = alpha * patch + (1.0 - alpha) * region


def draw_counts(stream: SeedStream, cfg: SceneConfig) -> tuple[int, int]:
    return stream.integer(0, cfg.max_fish + 1), stream.integer(0, cfg.max_dolphin + 1)


def compose_scene(bank: SpriteBank, stream: SeedStream, cfg: SceneConfig,
                  scene_id: int = 0) -> tuple[Raster, SceneRecord]:
    """Build one scene and the record of every random choice made for it."""
    if not bank.fish or not bank.dolphins or not bank.backgrounds:
        raise ValueError("sprite bank must contain fish, dolphins, and backgrounds")
    background_index = stream.integer(0, len(bank.backgrounds))
    canvas_r = resize(bank.backgrounds[background_index], cfg.canvas_width, cfg.canvas_height)
    canvas_r = apply_background_policy(canvas_r, stream, cfg.policies)
    canvas = np.array(ensure_rgb(canvas_r).pixels)

    n_fish, n_dolphin = draw_counts(stream, cfg)
    placements = []
    for species, count in (("fish", n_fish), ("dolphin", n_dolphin)):
        pool = bank.sprites_of(species)
        for _ in range(count):
            placements.append(
                _place_one(canvas, pool, species, stream, cfg, scene_id)
            )

    scene = apply_global_policy(clipped_raster(canvas), stream, cfg.policies)
    record = SceneRecord(
        id=scene_id,
        seed_path=stream.path,
        background_index=background_index,
        placements=tuple(placements),
        fish_count=n_fish,
        dolphin_count=n_dolphin,
        file=SCENE_FILE_PATTERN.format(scene_id),
    )
    return scene, record


def _place_one(canvas, pool, species, stream, cfg, scene_id) -> Placement:
    ch, cw = canvas.shape[:2]
    for _ in range(cfg.max_place_attempts):
        sprite_index = stream.integer(0, len(pool))
        scale = stream.uniform(*cfg.sprite_scale)
        rotation = stream.uniform(0.0, 360.0)
        sprite = pool[sprite_index]
        patch, alpha = transform_sprite(sprite, scale, rotation)
        h, w = patch.shape[:2]
        if w > cw or h > ch:
            continue
        x = stream.integer(0, cw - w + 1)
        y = stream.integer(0, ch - h + 1)
        patch3 = patch if patch.shape[2] == 3 else np.repeat(patch, 3, axis=2)
        paste(canvas, patch3, alpha, x, y)
        return Placement(species=species, sprite_index=sprite_index, x=x, y=y,
                         scale=scale, rotation_deg=rotation)
    raise PlacementInfeasibleError(
        f"no containing position for a {species} sprite on a "
        f"{cw}x{ch} canvas after {cfg.max_place_attempts} attempts",
        scene_id=scene_id,
    )


def placement_bbox(bank: SpriteBank, p: Placement) -> tuple[int, int, int, int]:
    """The (x, y, w, h) box the placement's transformed sprite occupies."""
    sprite = bank.sprites_of(p.species)[p.sprite_index]
    patch, _ = transform_sprite(sprite, p.scale, p.rotation_deg)
    return p.x, p.y, patch.shape[1], patch.shape[0]


def render_scene(bank: SpriteBank, cfg: SceneConfig, root_seed: int,
                 scene_id: int) -> tuple[Raster, SceneRecord]:
    """Scene i as a pure function of (bank, cfg, root_seed, i)."""
    stream = derive_stream(root_seed, [scene_id])
    return compose_scene(bank, stream, cfg, scene_id=scene_id)


# --- dataset generation ---------------------------------------------------------

_WORKER = {}


def _init_worker(bank, cfg, root_seed):
    _WORKER["args"] = (bank, cfg, root_seed)


def _render_task(scene_id: int):
    bank, cfg, root_seed = _WORKER["args"]
    raster, record = render_scene(bank, cfg, root_seed, scene_id)
    return record, encode_png(raster)


def generate_dataset(bank: SpriteBank, n: int, root_seed: int, cfg: SceneConfig,
                     out_dir, workers: int = 1) -> DatasetManifest:
    """Write n scenes plus a manifest under out_dir; byte-stable for any workers."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(bank, cfg, root_seed)
        ) as pool:
            for record, png in pool.map(_render_task, range(n), chunksize=32):
                (out_dir / record.file).write_bytes(png)
                records.append(record)
    else:
        for i in range(n):
            raster, record = render_scene(bank, cfg, root_seed, i)
            save_raster(raster, out_dir / record.file)
            records.append(record)
    records.sort(key=lambda r: r.id)
    manifest = DatasetManifest(
        root_seed=root_seed,
        generator_version=GENERATOR_VERSION,
        max_fish=cfg.max_fish,
        max_dolphin=cfg.max_dolphin,
        canvas_width=cfg.canvas_width,
        canvas_height=cfg.canvas_height,
        records=records,
    )
    write_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


# --- manifest I/O ----------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_manifest(manifest: DatasetManifest, path) -> None:
    """JSON Lines: one metadata header line, then one line per record,
    keys in fixed alphabetical order for byte-stable output."""
    lines = [_dumps({
        "canvas": {"height": manifest.canvas_height, "width": manifest.canvas_width},
        "count_ranges": {"max_dolphin": manifest.max_dolphin, "max_fish": manifest.max_fish},
        "generator_version": manifest.generator_version,
        "n_records": len(manifest.records),
        "root_seed": manifest.root_seed,
    })]
    for r in manifest.records:
        lines.append(_dumps({
            "background_index": r.background_index,
            "dolphin_count": r.dolphin_count,
            "file": r.file,
            "fish_count": r.fish_count,
            "id": r.id,
            "placements": [
                {
                    "rotation_deg": p.rotation_deg,
                    "scale": p.scale,
                    "species": p.species,
                    "sprite_index": p.sprite_index,
                    "x": p.x,
                    "y": p.y,
                }
                for p in r.placements
            ],
            "seed_path": list(r.seed_path),
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"empty manifest: {path}")
    head = json.loads(lines[0])
    records = []
    for line in lines[1:]:
        d = json.loads(line)
        records.append(SceneRecord(
            id=d["id"],
            seed_path=tuple(d["seed_path"]),
            background_index=d["background_index"],
            placements=tuple(
                Placement(species=p["species"], sprite_index=p["sprite_index"],
                          x=p["x"], y=p["y"], scale=p["scale"],
                          rotation_deg=p["rotation_deg"])
                for p in d["placements"]
            ),
            fish_count=d["fish_count"],
            dolphin_count=d["dolphin_count"],
            file=d["file"],
        ))
    if len(records) != head["n_records"]:
        raise ValueError(f"manifest {path} declares {head['n_records']} records, "
                         f"found {len(records)}")
    return DatasetManifest(
        root_seed=head["root_seed"],
        generator_version=head["generator_version"],
        max_fish=head["count_ranges"]["max_fish"],
        max_dolphin=head["count_ranges"]["max_dolphin"],
        canvas_width=head["canvas"]["width"],
        canvas_height=head["canvas"]["height"],
        records=records,
    )


def split_dataset(manifest: DatasetManifest, train_fraction: float
                  ) -> tuple[DatasetManifest, DatasetManifest]:
    """Deterministic id-hash split; round-half-up train size, disjoint and exhaustive."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    import hashlib

    def rank(record):
        return hashlib.sha256(record.id.to_bytes(8, "big")).hexdigest()

    ordered = sorted(manifest.records, key=lambda r: (rank(r), r.id))
    k = math.floor(len(ordered) * train_fraction + 0.5)
    train_ids = {r.id for r in ordered[:k]}
    train = [r for r in manifest.records if r.id in train_ids]
    rest = [r for r in manifest.records if r.id not in train_ids]
    return (replace_records(manifest, train), replace_records(manifest, rest))


def replace_records(manifest: DatasetManifest, records: list[SceneRecord]) -> DatasetManifest:
    m = replace(manifest)
    m.records = sorted(records, key=lambda r: r.id)
    return m


# --- sprite bank I/O ---------------------------------------------------------------

def save_bank(bank: SpriteBank, out_dir) -> None:
    out_dir = Path(out_dir)
    (out_dir / "sprites").mkdir(parents=True, exist_ok=True)
    (out_dir / "backgrounds").mkdir(parents=True, exist_ok=True)
    index = {"backgrounds": [], "dolphins": [], "fish": []}
    for species, key in (("fish", "fish"), ("dolphin", "dolphins")):
        for i, sprite in enumerate(bank.sprites_of(species)):
            patch_rel = f"sprites/{species}_{i:04d}.png"
            alpha_rel = f"sprites/{species}_{i:04d}_alpha.png"
            save_raster(sprite.patch, out_dir / patch_rel)
            save_raster(sprite.alpha, out_dir / alpha_rel)
            index[key].append({"alpha": alpha_rel, "patch": patch_rel,
                               "source_id": sprite.source_id})
    for i, bg in enumerate(bank.backgrounds):
        rel = f"backgrounds/bg_{i:04d}.png"
        save_raster(bg, out_dir / rel)
        index["backgrounds"].append(rel)
    (out_dir / "bank.json").write_text(_dumps(index) + "\n")


def load_bank(bank_dir) -> SpriteBank:
    bank_dir = Path(bank_dir)
    index = json.loads((bank_dir / "bank.json").read_text())
    bank = SpriteBank()
    for key, species in (("fish", "fish"), ("dolphins", "dolphin")):
        for entry in index[key]:
            bank.sprites_of(species).append(Sprite(
                species=species,
                patch=load_raster(bank_dir / entry["patch"]),
                alpha=load_raster(bank_dir / entry["alpha"]),
                source_id=entry["source_id"],
            ))
    for rel in index["backgrounds"]:
        bank.backgrounds.append(load_raster(bank_dir / rel))
    return bank
