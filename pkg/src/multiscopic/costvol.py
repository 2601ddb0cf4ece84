"""Per-view matching cost volumes (SAD block matching and BT dissimilarity).

A cost volume stores float32 costs indexed (d, v, u); slice k corresponds
to disparity d_min + k.  Cells whose disparity-shifted sample falls outside
the target image hold the LARGE_COST sentinel and are excluded from WTA.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError, InputError
from .imagery import Direction, Image, MultiscopicSet

LARGE_COST = np.float32(1e9)

# Half-sample interpolation offsets: the pixel itself plus its 4 neighbors.
BT_NEIGHBORHOOD = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))

_MAGIC = b"MCV1"
_HEADER = struct.Struct("<4siiii")


@dataclass
class BlockMatchParams:
    """Block radius and inclusive disparity search range."""

    rho: int = 2
    d_min: int = 1
    d_max: int = 60

    def __post_init__(self):
        if self.rho < 0:
            raise InputError(f"rho must be >= 0, got {self.rho}")
        if not 0 <= self.d_min <= self.d_max:
            raise InputError(f"need 0 <= d_min <= d_max, got [{self.d_min}, {self.d_max}]")

    @property
    def num_disparities(self) -> int:
        return self.d_max - self.d_min + 1


@dataclass(eq=False)
class CostVolume:
    """float32 costs of shape (D, H, W); slice k holds disparity d_min + k."""

    costs: np.ndarray
    d_min: int
    d_max: int

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=np.float32)
        if self.costs.ndim != 3:
            raise InputError(f"costs must be (D, H, W), got shape {self.costs.shape}")
        if not 0 <= self.d_min <= self.d_max:
            raise InputError(f"need 0 <= d_min <= d_max, got [{self.d_min}, {self.d_max}]")
        if self.costs.shape[0] != self.d_max - self.d_min + 1:
            raise InputError(
                f"{self.costs.shape[0]} slices for range [{self.d_min}, {self.d_max}]"
            )

    @property
    def num_disparities(self) -> int:
        return self.costs.shape[0]

    @property
    def height(self) -> int:
        return self.costs.shape[1]

    @property
    def width(self) -> int:
        return self.costs.shape[2]

    def disparities(self) -> np.ndarray:
        return np.arange(self.d_min, self.d_max + 1)

    def same_grid(self, other: "CostVolume") -> bool:
        return (
            self.costs.shape == other.costs.shape
            and self.d_min == other.d_min
            and self.d_max == other.d_max
        )


def _check_pair(ref: Image, target: Image):
    if ref.pixels.shape != target.pixels.shape:
        raise InputError(
            f"image sizes differ: {ref.pixels.shape} vs {target.pixels.shape}"
        )


def _inbounds_mask(height: int, width: int, ox: int, oy: int) -> np.ndarray:
    """True where (x + ox, y + oy) stays inside the image."""
    ys = np.arange(height) + oy
    xs = np.arange(width) + ox
    row_ok = (ys >= 0) & (ys < height)
    col_ok = (xs >= 0) & (xs < width)
    return row_ok[:, None] & col_ok[None, :]


def sad_cost_volume(
    ref: Image, target: Image, direction: Direction, p: BlockMatchParams
) -> CostVolume:
    """Sum of absolute differences over a (2*rho+1)^2 block.

    Block coordinates clamp at image borders.  The accumulation runs in
    row-major block order (dy outer, dx inner) in float32, so a scalar
    oracle with the same order reproduces the result bit for bit.
    """
    _check_pair(ref, target)
    a = ref.pixels
    b = target.pixels
    height, width = a.shape
    ys = np.arange(height)
    xs = np.arange(width)
    out = np.empty((p.num_disparities, height, width), dtype=np.float32)

    for k in range(p.num_disparities):
        d = p.d_min + k
        ox, oy = direction.offset(d)
        acc = np.zeros((height, width), dtype=np.float32)
        for dy in range(-p.rho, p.rho + 1):
            ref_rows = a[np.clip(ys + dy, 0, height - 1)]
            tgt_rows = b[np.clip(ys + dy + oy, 0, height - 1)]
            for dx in range(-p.rho, p.rho + 1):
                rc = np.clip(xs + dx, 0, width - 1)
                tc = np.clip(xs + dx + ox, 0, width - 1)
                acc += np.abs(ref_rows[:, rc] - tgt_rows[:, tc])
        out[k] = np.where(_inbounds_mask(height, width, ox, oy), acc, LARGE_COST)
    return CostVolume(out, p.d_min, p.d_max)


def bt_cost_volume(
    ref: Image, target: Image, direction: Direction, p: BlockMatchParams
) -> CostVolume:
    """Sampling-insensitive pixel dissimilarity against the target image.

    Around each target sample q the half-sample candidates 0.5*(I(q)+I(q+s))
    for s in BT_NEIGHBORHOOD span an interval [I_min, I_max] (offsets clamp
    at borders); the cost is max{0, ref - I_max, I_min - ref}, zero whenever
    the reference intensity lies inside the interval.  One-sided: only the
    target is interpolated.  The block radius is not used.
    """
    _check_pair(ref, target)
    a = ref.pixels
    b = target.pixels
    height, width = a.shape
    ys = np.arange(height)
    xs = np.arange(width)

    cand = np.empty((len(BT_NEIGHBORHOOD), height, width), dtype=np.float32)
    for i, (sx, sy) in enumerate(BT_NEIGHBORHOOD):
        shifted = b[np.clip(ys + sy, 0, height - 1)][:, np.clip(xs + sx, 0, width - 1)]
        cand[i] = np.float32(0.5) * (b + shifted)
    lo = cand.min(axis=0)
    hi = cand.max(axis=0)

    out = np.empty((p.num_disparities, height, width), dtype=np.float32)
    zero = np.float32(0.0)
    for k in range(p.num_disparities):
        d = p.d_min + k
        ox, oy = direction.offset(d)
        rows = np.clip(ys + oy, 0, height - 1)
        cols = np.clip(xs + ox, 0, width - 1)
        lo_s = lo[rows][:, cols]
        hi_s = hi[rows][:, cols]
        cost = np.maximum(zero, np.maximum(a - hi_s, lo_s - a))
        out[k] = np.where(_inbounds_mask(height, width, ox, oy), cost, LARGE_COST)
    return CostVolume(out, p.d_min, p.d_max)


_MATCHERS = {"sad": sad_cost_volume, "bt": bt_cost_volume}


def multiscopic_volumes(
    mset: MultiscopicSet, matcher: str, p: BlockMatchParams
) -> list[CostVolume]:
    """One cost volume per surrounding view, in set order."""
    if matcher not in _MATCHERS:
        raise InputError(f"matcher must be one of {sorted(_MATCHERS)}, got {matcher!r}")
    fn = _MATCHERS[matcher]
    return [fn(mset.center, img, direction, p) for direction, img in mset.surround]


def save_volume(path: Union[str, Path], vol: CostVolume) -> None:
    """Write the little-endian MCV1 container."""
    header = _HEADER.pack(_MAGIC, vol.d_min, vol.d_max, vol.width, vol.height)
    Path(path).write_bytes(header + vol.costs.astype("<f4").tobytes())


def load_volume(path: Union[str, Path]) -> CostVolume:
    """Read an MCV1 container written by save_volume."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, d_min, d_max, width, height = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if d_min < 0 or d_max < d_min or width <= 0 or height <= 0:
        raise FormatError(f"{path}: inconsistent header fields")
    count = (d_max - d_min + 1) * height * width
    payload = data[_HEADER.size :]
    if len(payload) != 4 * count:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {4 * count}")
    costs = np.frombuffer(payload, dtype="<f4").reshape(d_max - d_min + 1, height, width)
    return CostVolume(costs.astype(np.float32), d_min, d_max)
