"""Paired augmentation of source/tactile pairs.

Geometric transforms use identical parameters on both images: the source
is resampled bilinearly, the tactile with nearest neighbour so it stays
palette-pure. Uncovered regions are filled with white.
"""

import logging
import math
import threading
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .dataset.types import BUILDINGS_MIN_ZOOM, MapPair
from .palette import ClassId, ClassPalette, segment_image

logger = logging.getLogger(__name__)

WHITE = (255, 255, 255)
GREY_RECOLOR_CLASSES = (ClassId.STREETS, ClassId.BUILDINGS)


class AugmentError(ValueError):
    """Raised for invalid augmentation parameters."""

    pass


@dataclass(frozen=True)
class AugmentParams:
    hflip_prob: float = 0.5
    max_shift: float = 0.1
    scale_range: Tuple[float, float] = (0.9, 1.1)
    max_rotation_deg: float = 15.0
    grey_recolor_prob: float = 0.5
    grey_value: Tuple[int, int, int] = (200, 200, 200)
    seed: int = 0

    def __post_init__(self):
        for name in ("hflip_prob", "grey_recolor_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise AugmentError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 <= self.max_shift < 0.5:
            raise AugmentError(f"max_shift must be in [0, 0.5), got {self.max_shift}")
        low, high = self.scale_range
        if not 0.0 < low <= high:
            raise AugmentError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")
        if not 0.0 <= self.max_rotation_deg <= 180.0:
            raise AugmentError(
                f"max_rotation_deg must be in [0, 180], got {self.max_rotation_deg}"
            )
        if len(self.grey_value) != 3 or any(not 0 <= int(v) <= 255 for v in self.grey_value):
            raise AugmentError(f"grey_value must be three integers in [0, 255], got {self.grey_value}")
        object.__setattr__(self, "scale_range", (float(low), float(high)))
        object.__setattr__(self, "grey_value", tuple(int(v) for v in self.grey_value))

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentParams":
        return cls(
            hflip_prob=0.0,
            max_shift=0.0,
            scale_range=(1.0, 1.0),
            max_rotation_deg=0.0,
            grey_recolor_prob=0.0,
            seed=seed,
        )


@dataclass(frozen=True)
class SampledTransform:
    flip: bool = False
    scale: float = 1.0
    angle_deg: float = 0.0
    shift_x: int = 0
    shift_y: int = 0

    @property
    def is_rigid_grid(self) -> bool:
        """True when the transform maps pixels onto pixels exactly."""
        return self.scale == 1.0 and self.angle_deg == 0.0


def sample_transform(params: AugmentParams, size: int, rng: np.random.Generator) -> SampledTransform:
    """Draw flip, then scale, then rotation, then integer shifts."""
    flip = bool(rng.random() < params.hflip_prob)
    low, high = params.scale_range
    scale = float(rng.uniform(low, high)) if high > low else low
    angle = (
        float(rng.uniform(-params.max_rotation_deg, params.max_rotation_deg))
        if params.max_rotation_deg > 0
        else 0.0
    )
    max_px = int(round(params.max_shift * size))
    shift_x = int(rng.integers(-max_px, max_px + 1)) if max_px else 0
    shift_y = int(rng.integers(-max_px, max_px + 1)) if max_px else 0
    return SampledTransform(flip, scale, angle, shift_x, shift_y)


# === APPLYING TRANSFORMS ===


def _shift(arr: np.ndarray, dx: int, dy: int, fill) -> np.ndarray:
    out = np.empty_like(arr)
    out[...] = fill
    h, w = arr.shape[:2]
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = arr[src_y, src_x]
    return out


def _affine_coefficients(t: SampledTransform, width: int, height: int) -> Tuple[float, ...]:
    """Output-to-input affine map of scale+rotation about the center, then shift."""
    cx, cy = width / 2.0, height / 2.0
    theta = math.radians(t.angle_deg)
    cos, sin = math.cos(theta) / t.scale, math.sin(theta) / t.scale
    a, b, d, e = cos, sin, -sin, cos
    ox, oy = cx + t.shift_x, cy + t.shift_y
    return (a, b, cx - a * ox - b * oy, d, e, cy - d * ox - e * oy)


def apply_transform(
    arr: np.ndarray, t: SampledTransform, nearest: bool, fill=WHITE
) -> np.ndarray:
    """Apply ``t`` to an RGB image or a class mask in one resampling pass."""
    if t.flip:
        arr = np.fliplr(arr)
    if t.is_rigid_grid:
        return _shift(np.ascontiguousarray(arr), t.shift_x, t.shift_y, fill)

    h, w = arr.shape[:2]
    image = Image.fromarray(np.ascontiguousarray(arr))
    resample = Image.Resampling.NEAREST if nearest else Image.Resampling.BILINEAR
    out = image.transform(
        (w, h),
        Image.Transform.AFFINE,
        data=_affine_coefficients(t, w, h),
        resample=resample,
        fillcolor=fill,
    )
    return np.asarray(out, dtype=np.uint8).copy()


def transform_mask(mask: np.ndarray, t: SampledTransform) -> np.ndarray:
    """Label-space counterpart of :func:`apply_transform` on a tactile image."""
    return apply_transform(mask, t, nearest=True, fill=int(ClassId.BACKGROUND))


def geometric_augment(
    pair: MapPair,
    params: AugmentParams,
    rng: np.random.Generator,
    transform: Optional[SampledTransform] = None,
) -> MapPair:
    t = transform or sample_transform(params, pair.size, rng)
    return replace(
        pair,
        source=apply_transform(pair.source, t, nearest=False),
        tactile=apply_transform(pair.tactile, t, nearest=True),
    )


def maybe_grey_recolor(
    pair: MapPair,
    params: AugmentParams,
    rng: np.random.Generator,
    palette: Optional[ClassPalette] = None,
) -> Tuple[MapPair, bool]:
    """Grey recoloring that also reports whether it fired."""
    if pair.zoom < BUILDINGS_MIN_ZOOM:
        logger.warning(
            f"Grey recoloring skipped for pair {pair.id}: zoom {pair.zoom} has no buildings"
        )
        return pair, False
    if not rng.random() < params.grey_recolor_prob:
        return pair, False

    mask = segment_image(pair.tactile, palette or ClassPalette.default())
    source = pair.source.copy()
    source[np.isin(mask, [int(c) for c in GREY_RECOLOR_CLASSES])] = params.grey_value
    return replace(pair, source=source), True


def grey_recolor(
    pair: MapPair,
    params: AugmentParams,
    rng: np.random.Generator,
    palette: Optional[ClassPalette] = None,
) -> MapPair:
    """Paint source pixels under tactile Streets/Buildings with ``grey_value``.

    Fires with probability ``grey_recolor_prob``; the tactile is unchanged.
    """
    return maybe_grey_recolor(pair, params, rng, palette)[0]


class PairAugmenter:
    """Per-sample augmentation with seeded rng streams.

    Sample ``index`` of ``epoch`` always draws from
    ``default_rng([seed, epoch, index])``, so results do not depend on the
    order or thread in which samples are processed.
    """

    def __init__(
        self,
        params: AugmentParams,
        grey_recolor_enabled: bool = False,
        palette: Optional[ClassPalette] = None,
    ):
        self.params = params
        self.grey_recolor_enabled = grey_recolor_enabled
        self.palette = palette or ClassPalette.default()
        self.grey_recolor_applied = 0
        self._lock = threading.Lock()

    def rng_for(self, epoch: int, index: int) -> np.random.Generator:
        return np.random.default_rng([self.params.seed, epoch, index])

    def __call__(self, pair: MapPair, epoch: int = 0, index: int = 0) -> MapPair:
        rng = self.rng_for(epoch, index)
        if self.grey_recolor_enabled and pair.zoom >= BUILDINGS_MIN_ZOOM:
            pair, applied = maybe_grey_recolor(pair, self.params, rng, self.palette)
            if applied:
                with self._lock:
                    self.grey_recolor_applied += 1
        return geometric_augment(pair, self.params, rng)


def preview_grid(
    before: Sequence[MapPair], after: Sequence[MapPair], gap: int = 4
) -> np.ndarray:
    """Rows of [source, tactile, augmented source, augmented tactile]."""
    if len(before) != len(after) or not before:
        raise AugmentError("preview_grid needs equally many (non-zero) before and after pairs")
    size = before[0].size
    cols, rows = 4, len(before)
    grid = np.full(
        (rows * size + (rows - 1) * gap, cols * size + (cols - 1) * gap, 3), 255, dtype=np.uint8
    )
    for r, (b, a) in enumerate(zip(before, after)):
        tiles: List[np.ndarray] = [b.source, b.tactile, a.source, a.tactile]
        for c, tile in enumerate(tiles):
            y, x = r * (size + gap), c * (size + gap)
            grid[y : y + size, x : x + size] = tile
    return grid
