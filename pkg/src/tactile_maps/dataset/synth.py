"""Seeded procedural generator of aligned source/tactile pairs.

Each pair is drawn from one random city layout: a perturbed street grid,
an optional highway, water as a river or a lake block, park and hospital
blocks and (from zoom 17) building footprints. The layout is rendered
twice, as a Google-styled source tile with labels and POI icons, and as
a palette-exact tactile tile without them.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from ..palette import ClassId, ClassPalette, render_mask
from .types import (
    DEFAULT_BLOCK_SPACING,
    LocationType,
    MapPair,
    Split,
    SynthesisError,
    SynthProfile,
)

logger = logging.getLogger(__name__)

Point = Tuple[float, float]
Polygon = List[Point]

# Source styling
LAND = (245, 247, 248)
STREET_CASING = (218, 220, 224)
STREET_FILL = (255, 255, 255)
HIGHWAY_CASING = (249, 173, 5)
HIGHWAY_FILL = (253, 226, 147)
PARK = (195, 236, 178)
WATER = (170, 218, 255)
MEDICAL = (250, 222, 230)
BUILDING = (232, 232, 232)
BUILDING_OUTLINE = (214, 214, 214)
LABEL_TEXT = (95, 99, 104)
ICON_COLORS = ((234, 67, 53), (66, 133, 244), (251, 140, 0), (52, 168, 83), (161, 66, 244))

_STREET_WORDS = (
    "Main St", "Oak Ave", "High St", "King Rd", "Elm St", "Park Ln", "Mill Rd",
    "Queen St", "Bay St", "Lake Dr", "Hill Rd", "Church St", "Market Sq",
)

PARK_BLOCK_RATE = 0.12
# share of watery layouts that get a lake block instead of a river
LAKE_SHARE = 0.5
MAX_ROAD_TILT = 0.08


@dataclass
class _Road:
    """A straight road ``x = a + b*y`` (vertical) or ``y = a + b*x`` (horizontal)."""

    offset: float
    tilt: float
    vertical: bool

    def endpoints(self, size: int, margin: float) -> List[Point]:
        lo, hi = -margin, size + margin
        if self.vertical:
            return [(self.offset + self.tilt * lo, lo), (self.offset + self.tilt * hi, hi)]
        return [(lo, self.offset + self.tilt * lo), (hi, self.offset + self.tilt * hi)]


def _intersect(v: _Road, h: _Road) -> Point:
    x = (v.offset + v.tilt * h.offset) / (1.0 - v.tilt * h.tilt)
    return (x, h.offset + h.tilt * x)


@dataclass
class CityLayout:
    size: int
    street_width: int
    streets: List[List[Point]] = field(default_factory=list)
    blocks: List[Polygon] = field(default_factory=list)
    parks: List[Polygon] = field(default_factory=list)
    lakes: List[Polygon] = field(default_factory=list)
    hospitals: List[Polygon] = field(default_factory=list)
    buildings: List[Tuple[float, float, float, float]] = field(default_factory=list)
    river: Optional[List[Point]] = None
    river_width: int = 0
    highway: Optional[List[Point]] = None
    highway_width: int = 0

    def to_metadata(self) -> Dict[str, object]:
        def _round(line: Sequence[Point]) -> List[List[float]]:
            return [[round(float(x), 3), round(float(y), 3)] for x, y in line]

        return {
            "streets": [_round(s) for s in self.streets],
            "street_width": self.street_width,
            "highway": _round(self.highway) if self.highway else None,
            "highway_width": self.highway_width,
            "river_width": self.river_width,
            "n_lakes": len(self.lakes),
            "n_buildings": len(self.buildings),
        }


# === LAYOUT ===


def _grid_positions(rng: np.random.Generator, size: int, spacing: Tuple[int, int]) -> List[float]:
    lo, hi = spacing
    positions = [float(rng.uniform(0, lo))]
    while True:
        nxt = positions[-1] + float(rng.integers(lo, hi + 1))
        if nxt >= size:
            return positions
        positions.append(nxt)


def _inner_box(block: Polygon, inset: float) -> Optional[Tuple[float, float, float, float]]:
    """Axis-aligned box inside a quadrilateral block (corners tl, tr, br, bl)."""
    tl, tr, br, bl = block
    left = max(tl[0], bl[0]) + inset
    right = min(tr[0], br[0]) - inset
    top = max(tl[1], tr[1]) + inset
    bottom = min(bl[1], br[1]) - inset
    if right - left < 4 or bottom - top < 4:
        return None
    return (left, top, right, bottom)


def _buildings_in(
    rng: np.random.Generator, box: Tuple[float, float, float, float], gap: float
) -> List[Tuple[float, float, float, float]]:
    left, top, right, bottom = box
    horizontal = (right - left) >= (bottom - top)
    length = (right - left) if horizontal else (bottom - top)
    count = int(rng.integers(1, 4))
    cuts = np.sort(rng.uniform(0.2, 0.8, size=count - 1)) * length
    edges = [0.0, *cuts.tolist(), length]
    rects = []
    for start, end in zip(edges[:-1], edges[1:]):
        a, b = start + gap / 2, end - gap / 2
        if b - a < 3:
            continue
        if horizontal:
            rects.append((left + a, top, left + b, bottom))
        else:
            rects.append((left, top + a, right, top + b))
    return rects


def generate_layout(profile: SynthProfile, rng: np.random.Generator) -> CityLayout:
    size = profile.size
    width = int(profile.street_width)
    margin = float(width * 2)
    spacing = DEFAULT_BLOCK_SPACING[profile.zoom_analog]

    verticals = [
        _Road(x, float(rng.uniform(-MAX_ROAD_TILT, MAX_ROAD_TILT)), True)
        for x in _grid_positions(rng, size, spacing)
    ]
    horizontals = [
        _Road(y, float(rng.uniform(-MAX_ROAD_TILT, MAX_ROAD_TILT)), False)
        for y in _grid_positions(rng, size, spacing)
    ]
    # frame roads outside the tile close the border blocks
    frame_v = [_Road(-spacing[1], 0.0, True), _Road(size + spacing[1], 0.0, True)]
    frame_h = [_Road(-spacing[1], 0.0, False), _Road(size + spacing[1], 0.0, False)]
    all_v = [frame_v[0], *verticals, frame_v[1]]
    all_h = [frame_h[0], *horizontals, frame_h[1]]

    layout = CityLayout(size=size, street_width=width)
    layout.streets = [r.endpoints(size, margin) for r in (*verticals, *horizontals)]

    for i in range(len(all_v) - 1):
        for j in range(len(all_h) - 1):
            layout.blocks.append(
                [
                    _intersect(all_v[i], all_h[j]),
                    _intersect(all_v[i + 1], all_h[j]),
                    _intersect(all_v[i + 1], all_h[j + 1]),
                    _intersect(all_v[i], all_h[j + 1]),
                ]
            )

    has_parks = rng.random() < profile.park_prob
    has_hospital = rng.random() < profile.hospital_prob
    hospital_block = int(rng.integers(len(layout.blocks))) if has_hospital else -1

    plain: List[Polygon] = []
    for index, block in enumerate(layout.blocks):
        if index == hospital_block:
            layout.hospitals.append(block)
        elif has_parks and rng.random() < PARK_BLOCK_RATE:
            layout.parks.append(block)
        else:
            plain.append(block)

    if rng.random() < profile.water_prob:
        if plain and rng.random() < LAKE_SHARE:
            layout.lakes.append(plain.pop(int(rng.integers(len(plain)))))
        else:
            layout.river_width = int(rng.integers(max(6, size // 16), max(8, size // 8) + 1))
            y0, y1 = rng.uniform(0.1, 0.9, size=2) * size
            mid = (size / 2, float((y0 + y1) / 2 + rng.uniform(-0.15, 0.15) * size))
            layout.river = [(-margin, float(y0)), mid, (size + margin, float(y1))]

    if rng.random() < profile.highway_prob:
        layout.highway_width = min(2 * width, width + int(rng.integers(2, max(3, width + 1))))
        x0, x1 = rng.uniform(0.0, 1.0, size=2) * size
        layout.highway = [(float(x0), -margin), (float(x1), size + margin)]

    if profile.include_buildings:
        gap = max(2.0, width * 0.4)
        for block in plain:
            box = _inner_box(block, inset=width / 2 + gap)
            if box is not None:
                layout.buildings.extend(_buildings_in(rng, box, gap))
    return layout


# === RENDERING ===


def _draw_line(draw: ImageDraw.ImageDraw, line: Sequence[Point], fill, width: int) -> None:
    draw.line([tuple(p) for p in line], fill=fill, width=width, joint="curve")


def render_tactile_labels(layout: CityLayout) -> np.ndarray:
    """Class-id mask of the layout, drawn water first and highways last."""
    image = Image.new("L", (layout.size, layout.size), int(ClassId.BACKGROUND))
    draw = ImageDraw.Draw(image)

    for lake in layout.lakes:
        draw.polygon(lake, fill=int(ClassId.WATER))
    if layout.river:
        _draw_line(draw, layout.river, int(ClassId.WATER), layout.river_width)
    for park in layout.parks:
        draw.polygon(park, fill=int(ClassId.PARKS))
    for zone in layout.hospitals:
        draw.polygon(zone, fill=int(ClassId.HOSPITALS))

    if layout.buildings:
        water = np.asarray(image) == int(ClassId.WATER)
        for left, top, right, bottom in layout.buildings:
            window = water[
                max(0, int(top)) : max(0, int(bottom) + 1),
                max(0, int(left)) : max(0, int(right) + 1),
            ]
            if window.size and window.mean() > 0.0:
                continue
            draw.rectangle((left, top, right, bottom), fill=int(ClassId.BUILDINGS))

    for street in layout.streets:
        _draw_line(draw, street, int(ClassId.STREETS), layout.street_width)
    if layout.highway:
        _draw_line(draw, layout.highway, int(ClassId.HIGHWAYS), layout.highway_width)
    return np.asarray(image, dtype=np.uint8).copy()


def render_source(
    layout: CityLayout, labels: np.ndarray, profile: SynthProfile, rng: np.random.Generator
) -> np.ndarray:
    """Google-styled view of ``layout`` with distractor labels and icons."""
    image = Image.new("RGB", (layout.size, layout.size), LAND)
    draw = ImageDraw.Draw(image)
    w = layout.street_width

    for lake in layout.lakes:
        draw.polygon(lake, fill=WATER)
    if layout.river:
        _draw_line(draw, layout.river, WATER, layout.river_width)
    for park in layout.parks:
        draw.polygon(park, fill=PARK)
    for zone in layout.hospitals:
        draw.polygon(zone, fill=MEDICAL)

    buildings = labels == int(ClassId.BUILDINGS)
    if buildings.any():
        pixels = np.asarray(image).copy()
        pixels[buildings] = BUILDING
        image = Image.fromarray(pixels)
        draw = ImageDraw.Draw(image)
        for left, top, right, bottom in layout.buildings:
            if buildings[int(np.clip((top + bottom) / 2, 0, layout.size - 1)),
                         int(np.clip((left + right) / 2, 0, layout.size - 1))]:
                draw.rectangle((left, top, right, bottom), outline=BUILDING_OUTLINE)

    for street in layout.streets:
        _draw_line(draw, street, STREET_CASING, w + 2)
    for street in layout.streets:
        _draw_line(draw, street, STREET_FILL, w)
    if layout.highway:
        _draw_line(draw, layout.highway, HIGHWAY_CASING, layout.highway_width + 2)
        _draw_line(draw, layout.highway, HIGHWAY_FILL, layout.highway_width)

    area = (layout.size / 256.0) ** 2
    font = ImageFont.load_default()
    for _ in range(int(rng.poisson(profile.text_density * 4 * area))):
        text = _STREET_WORDS[int(rng.integers(len(_STREET_WORDS)))]
        x, y = rng.uniform(0, layout.size * 0.85), rng.uniform(0, layout.size * 0.95)
        draw.text((float(x), float(y)), text, fill=LABEL_TEXT, font=font)
    for _ in range(int(rng.poisson(profile.icon_density * 3 * area))):
        r = max(2, layout.size // 96)
        cx, cy = rng.uniform(r, layout.size - r, size=2)
        color = ICON_COLORS[int(rng.integers(len(ICON_COLORS)))]
        draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=color)
        draw.ellipse((cx - r / 3, cy - r / 3, cx + r / 3, cy + r / 3), fill=(255, 255, 255))
    return np.asarray(image, dtype=np.uint8).copy()


# === PAIRS ===


def class_fractions(labels: np.ndarray) -> Dict[ClassId, float]:
    counts = np.bincount(labels.ravel(), minlength=len(ClassId)) / labels.size
    return {c: float(counts[int(c)]) for c in ClassId}


def _meets_targets(fractions: Dict[ClassId, float], profile: SynthProfile) -> bool:
    for class_id, (low, high) in profile.frequency_targets.items():
        if not low <= fractions[ClassId(class_id)] <= high:
            return False
    return True


def synth_pair(
    profile: SynthProfile,
    palette: Optional[ClassPalette] = None,
    pair_id: Optional[str] = None,
) -> MapPair:
    """Generate one aligned pair; deterministic given ``profile.seed``.

    Raises:
        SynthesisError: no layout met the frequency targets within
            ``profile.max_attempts`` tries.
    """
    palette = palette or ClassPalette.default()
    rng = np.random.default_rng(profile.seed)

    for attempt in range(1, profile.max_attempts + 1):
        layout = generate_layout(profile, rng)
        labels = render_tactile_labels(layout)
        fractions = class_fractions(labels)
        if _meets_targets(fractions, profile):
            break
        logger.debug(f"Synthetic layout {profile.seed} attempt {attempt} missed its targets")
    else:
        raise SynthesisError(
            f"No layout met the class-frequency targets after {profile.max_attempts} "
            f"attempts (seed={profile.seed}, zoom={profile.zoom_analog})"
        )

    source = render_source(layout, labels, profile, rng)
    metadata = layout.to_metadata()
    metadata["seed"] = int(profile.seed)
    metadata["attempts"] = attempt
    return MapPair(
        id=pair_id or f"synth-z{profile.zoom_analog}-{profile.seed}",
        location=f"synthetic tile {profile.seed}",
        zoom=profile.zoom_analog,
        country="synthetic",
        location_type=LocationType.city,
        split=Split.train,
        source=source,
        tactile=render_mask(labels, palette),
        metadata=metadata,
    )


def pair_seeds(seed: int, n: int) -> List[int]:
    """Independent per-pair seeds spawned from one run seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]


def synth_dataset(
    n: int,
    profile: SynthProfile,
    seed: int,
    palette: Optional[ClassPalette] = None,
) -> List[MapPair]:
    """Generate ``n`` pairs sharing ``profile`` with seeds derived from ``seed``."""
    if n < 1:
        raise SynthesisError(f"Number of pairs must be positive, got {n}")
    pairs = []
    for index, child_seed in enumerate(pair_seeds(seed, n)):
        pair = synth_pair(
            replace(profile, seed=child_seed),
            palette,
            pair_id=f"synth-z{profile.zoom_analog}-{seed}-{index:05d}",
        )
        pairs.append(pair)
    logger.info(f"Synthesized {n} pairs at zoom {profile.zoom_analog} (seed {seed})")
    return pairs
