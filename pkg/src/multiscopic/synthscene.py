"""Procedural multiscopic test scenes with exact ground-truth disparity.

A scene is a stack of fronto-parallel textured layers, each at one integer
disparity.  Rendering a view shifts every layer by Direction.offset(d) --
the same vector the matcher samples along, so matching exactly inverts
rendering.  Textures extend beyond the frame by the maximum disparity so
shifted layers never run out of content.  Ground truth is geometric (the
front-most layer per center pixel) and stays valid even where a pixel is
hidden in every surrounding view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InputError, SpecError
from .imagery import Direction, DisparityMap, Image, MultiscopicSet, read_image, write_image

VIEW_ORDER = (Direction.LEFT, Direction.RIGHT, Direction.TOP, Direction.BOTTOM)

_VIEW_FILES = {
    Direction.LEFT: "left.pgm",
    Direction.RIGHT: "right.pgm",
    Direction.TOP: "top.pgm",
    Direction.BOTTOM: "bottom.pgm",
}


@dataclass
class SceneLayer:
    """One fronto-parallel layer: a disparity and an occluder rectangle.

    rect is (x0, y0, w, h) in center-view coordinates; None covers the whole
    frame (the background layer must use None so no view has holes).
    """

    disparity: int
    rect: Optional[tuple[int, int, int, int]] = None

    def __post_init__(self):
        if self.disparity < 0 or self.disparity != int(self.disparity):
            raise InputError(f"layer disparity must be a non-negative integer")
        if self.rect is not None:
            x0, y0, w, h = self.rect
            if w <= 0 or h <= 0:
                raise InputError(f"degenerate layer rect {self.rect}")


@dataclass
class SceneSpec:
    """Scene geometry plus texture and photometric-noise parameters."""

    width: int
    height: int
    layers: list[SceneLayer] = field(default_factory=list)
    noise_sigma: float = 0.0
    octaves: int = 3
    base_cell: int = 8
    flat_patches: int = 0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise InputError("scene must be at least 2x2")
        if not self.layers:
            raise InputError("scene needs at least one layer")
        if self.layers[0].rect is not None:
            raise InputError("the back layer must cover the full frame (rect=None)")
        if self.noise_sigma < 0:
            raise InputError("noise sigma must be >= 0")
        if self.octaves < 1 or self.base_cell < 1:
            raise InputError("texture parameters must be positive")

    @property
    def max_disparity(self) -> int:
        return max(layer.disparity for layer in self.layers)


def _value_noise(rng: np.random.Generator, height: int, width: int,
                 octaves: int, base_cell: int) -> np.ndarray:
    """Seeded multi-octave value noise in [0, 1]."""
    out = np.zeros((height, width), dtype=np.float64)
    amp = 1.0
    total = 0.0
    for o in range(octaves):
        cell = max(base_cell >> o, 1)
        ny = height // cell + 2
        nx = width // cell + 2
        lattice = rng.random((ny, nx))
        ys = np.arange(height) / cell
        xs = np.arange(width) / cell
        y0 = ys.astype(int)
        x0 = xs.astype(int)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        a = lattice[y0][:, x0]
        b = lattice[y0][:, x0 + 1]
        c = lattice[y0 + 1][:, x0]
        d = lattice[y0 + 1][:, x0 + 1]
        out += amp * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy)
        total += amp
        amp *= 0.5
    return out / total


def _layer_texture(rng: np.random.Generator, spec: SceneSpec,
                   ext_h: int, ext_w: int) -> np.ndarray:
    """Texture over the extended domain, mapped to intensities [20, 235]."""
    noise = _value_noise(rng, ext_h, ext_w, spec.octaves, spec.base_cell)
    lo, hi = noise.min(), noise.max()
    if hi - lo > 1e-12:
        noise = (noise - lo) / (hi - lo)
    tex = 20.0 + 215.0 * noise
    for _ in range(spec.flat_patches):
        pw = int(rng.integers(spec.base_cell, max(ext_w // 3, spec.base_cell + 1)))
        ph = int(rng.integers(spec.base_cell, max(ext_h // 3, spec.base_cell + 1)))
        px = int(rng.integers(0, max(ext_w - pw, 1)))
        py = int(rng.integers(0, max(ext_h - ph, 1)))
        tex[py : py + ph, px : px + pw] = float(rng.uniform(40.0, 215.0))
    return tex


def generate_scene(spec: SceneSpec, seed: int) -> tuple[MultiscopicSet, DisparityMap]:
    """Render center + LEFT/RIGHT/TOP/BOTTOM views and the exact GT map.

    Layers composite back to front; view v sees layer k shifted by
    Direction.offset(d_k).  Photometric Gaussian noise (seeded per view) is
    added after compositing and clipped to [0, 255].
    """
    if spec.max_disparity > spec.width / 4:
        raise SpecError(
            f"max layer disparity {spec.max_disparity} exceeds width/4 = {spec.width / 4}"
        )
    height, width = spec.height, spec.width
    margin = spec.max_disparity
    ext_h, ext_w = height + 2 * margin, width + 2 * margin

    ss = np.random.SeedSequence(seed)
    tex_seeds, noise_seeds = ss.spawn(2)
    tex_rngs = [np.random.default_rng(s) for s in tex_seeds.spawn(len(spec.layers))]
    noise_rngs = [np.random.default_rng(s) for s in noise_seeds.spawn(5)]

    textures = [_layer_texture(r, spec, ext_h, ext_w) for r in tex_rngs]

    def render(direction: Optional[Direction]) -> np.ndarray:
        img = np.zeros((height, width), dtype=np.float64)
        for layer, tex in zip(spec.layers, textures):
            ox, oy = direction.offset(layer.disparity) if direction else (0, 0)
            # Layer texel visible at view pixel (x, y) is tex(x - ox, y - oy).
            sampled = tex[margin - oy : margin - oy + height,
                          margin - ox : margin - ox + width]
            if layer.rect is None:
                img[:] = sampled
            else:
                x0, y0, w, h = layer.rect
                xa = max(x0 + ox, 0)
                xb = min(x0 + ox + w, width)
                ya = max(y0 + oy, 0)
                yb = min(y0 + oy + h, height)
                if xa < xb and ya < yb:
                    img[ya:yb, xa:xb] = sampled[ya:yb, xa:xb]
        return img

    center = render(None)
    views = [render(direction) for direction in VIEW_ORDER]

    if spec.noise_sigma > 0:
        center = center + noise_rngs[0].normal(0.0, spec.noise_sigma, center.shape)
        views = [
            v + r.normal(0.0, spec.noise_sigma, v.shape)
            for v, r in zip(views, noise_rngs[1:])
        ]
    center = np.clip(center, 0.0, 255.0)
    views = [np.clip(v, 0.0, 255.0) for v in views]

    gt = np.zeros((height, width), dtype=np.float32)
    for layer in spec.layers:
        if layer.rect is None:
            gt[:] = layer.disparity
        else:
            x0, y0, w, h = layer.rect
            xa, xb = max(x0, 0), min(x0 + w, width)
            ya, yb = max(y0, 0), min(y0 + h, height)
            if xa < xb and ya < yb:
                gt[ya:yb, xa:xb] = layer.disparity

    mset = MultiscopicSet(
        Image(center.astype(np.float32)),
        [(direction, Image(v.astype(np.float32))) for direction, v in zip(VIEW_ORDER, views)],
    )
    return mset, DisparityMap(gt)


@dataclass
class DatasetRanges:
    """Sampling ranges for randomized dataset scenes (all bounds inclusive)."""

    width: int = 64
    height: int = 64
    layer_count: tuple[int, int] = (2, 4)
    disparity: tuple[int, int] = (1, 12)
    rect_frac: tuple[float, float] = (0.2, 0.6)  # occluder size as frame fraction
    noise_sigma: tuple[float, float] = (0.0, 1.0)
    base_cell: tuple[int, int] = (5, 10)
    octaves: int = 3
    flat_patches: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.layer_count[0] < 1:
            raise InputError("need at least one layer")
        if self.disparity[0] < 0:
            raise InputError("disparities must be >= 0")


def sample_spec(ranges: DatasetRanges, rng: np.random.Generator) -> SceneSpec:
    """Draw one SceneSpec from the ranges (deterministic given the rng state)."""
    n_layers = int(rng.integers(ranges.layer_count[0], ranges.layer_count[1] + 1))
    dis = sorted(
        int(rng.integers(ranges.disparity[0], ranges.disparity[1] + 1))
        for _ in range(n_layers)
    )
    layers = [SceneLayer(dis[0], None)]
    for d in dis[1:]:
        fw = rng.uniform(*ranges.rect_frac)
        fh = rng.uniform(*ranges.rect_frac)
        w = max(int(fw * ranges.width), 2)
        h = max(int(fh * ranges.height), 2)
        x0 = int(rng.integers(0, max(ranges.width - w, 1)))
        y0 = int(rng.integers(0, max(ranges.height - h, 1)))
        layers.append(SceneLayer(d, (x0, y0, w, h)))
    return SceneSpec(
        width=ranges.width,
        height=ranges.height,
        layers=layers,
        noise_sigma=float(rng.uniform(*ranges.noise_sigma)),
        octaves=ranges.octaves,
        base_cell=int(rng.integers(ranges.base_cell[0], ranges.base_cell[1] + 1)),
        flat_patches=int(rng.integers(ranges.flat_patches[0], ranges.flat_patches[1] + 1)),
    )


def generate_dataset(
    ranges: DatasetRanges, n: int, seed: int, outdir: Union[str, Path]
) -> list[str]:
    """Write n randomized scenes under outdir; returns the manifest.

    Layout per scene: scene_%04d/{center,left,right,top,bottom}.pgm, gt.pfm
    and meta.txt (key=value).  A manifest.txt with one scene directory per
    line is written alongside.  Byte-identical for identical (ranges, n,
    seed).
    """
    if n < 1:
        raise InputError("dataset size must be >= 1")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(n):
        ss = np.random.SeedSequence([seed, i])
        rng = np.random.default_rng(ss)
        spec = sample_spec(ranges, rng)
        scene_seed = int(rng.integers(0, 2**63))
        mset, gt = generate_scene(spec, scene_seed)

        name = f"scene_{i:04d}"
        sdir = outdir / name
        sdir.mkdir(exist_ok=True)
        write_image(sdir / "center.pgm", mset.center)
        for direction, img in mset.surround:
            write_image(sdir / _VIEW_FILES[direction], img)
        write_image(sdir / "gt.pfm", gt)
        meta = (
            f"baseline={mset.baseline_mm}\n"
            f"d_max={spec.max_disparity}\n"
            f"seed={scene_seed}\n"
        )
        (sdir / "meta.txt").write_text(meta)
        manifest.append(name)
    (outdir / "manifest.txt").write_text("".join(m + "\n" for m in manifest))
    return manifest


def load_scene(scene_dir: Union[str, Path]) -> tuple[MultiscopicSet, Optional[DisparityMap]]:
    """Read a scene directory back into containers.

    Requires center.pgm and at least one directional view; gt.pfm is
    optional (None when absent) so user-supplied rectified sets load too.
    """
    scene_dir = Path(scene_dir)
    center_path = scene_dir / "center.pgm"
    if not center_path.exists():
        raise InputError(f"{scene_dir}: no center.pgm")
    center = read_image(center_path)
    if not isinstance(center, Image):
        raise InputError(f"{center_path}: expected a grayscale image")
    surround = []
    for direction in VIEW_ORDER:
        p = scene_dir / _VIEW_FILES[direction]
        if p.exists():
            img = read_image(p)
            if not isinstance(img, Image):
                raise InputError(f"{p}: expected a grayscale image")
            surround.append((direction, img))
    if not surround:
        raise InputError(f"{scene_dir}: no directional views found")
    mset = MultiscopicSet(Image(center.pixels), surround)
    gt_path = scene_dir / "gt.pfm"
    gt = None
    if gt_path.exists():
        loaded = read_image(gt_path)
        if not isinstance(loaded, DisparityMap):
            raise InputError(f"{gt_path}: expected a disparity map")
        gt = loaded
    return mset, gt
