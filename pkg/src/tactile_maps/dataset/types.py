"""Data models and exceptions for dataset construction."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..palette import ClassId, validate_image

SOURCE_SIZE = 512
TACTILE_FETCH_SIZE = 572
MIN_ZOOM = 15
MAX_ZOOM = 18
BUILDINGS_MIN_ZOOM = 17


class DatasetError(Exception):
    """Base class for dataset construction errors."""

    pass


class StyleError(DatasetError):
    """Raised when a style rule does not follow the style grammar."""

    pass


class QueryError(DatasetError):
    """Raised when a location query is missing a mandatory part."""

    pass


class FetchError(DatasetError):
    """Raised when a tile cannot be downloaded after all retries."""

    def __init__(self, message: str, attempts: int = 0, status: Optional[int] = None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status


class QuotaExceededError(FetchError):
    """Raised when the map API reports an exhausted quota or denied key."""

    pass


class ImageSizeError(DatasetError):
    """Raised when an image has unexpected dimensions."""

    pass


class SynthesisError(DatasetError):
    """Raised when a synthetic pair cannot meet its class-frequency targets."""

    pass


class SplitError(DatasetError):
    """Raised when a split policy cannot be satisfied."""

    pass


class ManifestError(DatasetError):
    """Raised for unreadable or inconsistent manifests."""

    pass


class Variant(str, Enum):
    source = "source"
    tactile = "tactile"


class LocationType(str, Enum):
    city = "city"
    landmark = "landmark"
    hospital = "hospital"
    university = "university"


class Split(str, Enum):
    train = "train"
    test_english = "test-english"
    test_world = "test-world"


def validate_zoom(zoom: int) -> int:
    if not isinstance(zoom, (int, np.integer)) or not MIN_ZOOM <= int(zoom) <= MAX_ZOOM:
        raise DatasetError(f"Zoom must be an integer in [{MIN_ZOOM}, {MAX_ZOOM}], got {zoom}")
    return int(zoom)


@dataclass(frozen=True)
class StyleRule:
    """One ``feature|element|spec`` styling rule of a tactile request."""

    feature: str
    element: str
    specification: str

    def __post_init__(self):
        from .style import validate_rule  # avoid import cycle

        validate_rule(self)


@dataclass(frozen=True)
class MapRequest:
    center: str
    zoom: int
    variant: Variant
    size: Tuple[int, int] = (0, 0)
    style: Tuple[StyleRule, ...] = ()

    def __post_init__(self):
        validate_zoom(self.zoom)
        if not self.center.strip():
            raise QueryError("Map request center cannot be empty")
        expected = SOURCE_SIZE if self.variant == Variant.source else TACTILE_FETCH_SIZE
        if self.size == (0, 0):
            object.__setattr__(self, "size", (expected, expected))
        elif tuple(self.size) != (expected, expected):
            raise ImageSizeError(
                f"{self.variant.value} requests must be {expected}x{expected}, got {self.size}"
            )
        if self.variant == Variant.source and self.style:
            raise StyleError("Source requests carry no style rules")
        object.__setattr__(self, "style", tuple(self.style))


@dataclass
class MapPair:
    """A registered source/tactile pair.

    Both images are 512x512 RGB ``uint8`` arrays; the tactile image is
    palette-pure.
    """

    id: str
    location: str
    zoom: int
    source: np.ndarray
    tactile: np.ndarray
    country: str = ""
    location_type: LocationType = LocationType.city
    split: Split = Split.train
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_zoom(self.zoom)
        self.location_type = LocationType(self.location_type)
        self.split = Split(self.split)
        for name in ("source", "tactile"):
            validate_image(getattr(self, name))
        if self.source.shape != self.tactile.shape:
            raise ImageSizeError(
                f"Pair {self.id}: source {self.source.shape[:2]} and tactile "
                f"{self.tactile.shape[:2]} differ in size"
            )

    @property
    def size(self) -> int:
        return int(self.source.shape[0])


DEFAULT_STREET_WIDTHS = {15: 4, 16: 6, 17: 8, 18: 10}
DEFAULT_BLOCK_SPACING = {15: (40, 60), 16: (56, 90), 17: (85, 130), 18: (110, 170)}

# Mean pixel percentage per class at zoom 16 and zoom 18 in the published
# dataset breakdown; used as centers of the synthetic frequency targets.
CLASS_PERCENTAGES = {
    16: {
        ClassId.STREETS: 16.64,
        ClassId.HIGHWAYS: 1.95,
        ClassId.PARKS: 5.92,
        ClassId.WATER: 3.71,
        ClassId.BUILDINGS: 0.0,
        ClassId.HOSPITALS: 3.99,
        ClassId.BACKGROUND: 67.79,
    },
    18: {
        ClassId.STREETS: 12.44,
        ClassId.HIGHWAYS: 1.39,
        ClassId.PARKS: 6.46,
        ClassId.WATER: 1.74,
        ClassId.BUILDINGS: 27.04,
        ClassId.HOSPITALS: 10.08,
        ClassId.BACKGROUND: 40.85,
    },
}


def default_frequency_targets(zoom: int) -> Dict[ClassId, Tuple[float, float]]:
    """Per-pair fraction intervals that keep the street network plausible."""
    if zoom >= BUILDINGS_MIN_ZOOM:
        return {ClassId.STREETS: (0.04, 0.30), ClassId.BUILDINGS: (0.05, 0.60)}
    return {ClassId.STREETS: (0.06, 0.35), ClassId.BUILDINGS: (0.0, 0.0)}


@dataclass
class SynthProfile:
    """Knobs for one procedurally generated pair."""

    zoom_analog: int = 16
    seed: int = 0
    size: int = SOURCE_SIZE
    include_buildings: Optional[bool] = None
    frequency_targets: Dict[ClassId, Tuple[float, float]] = field(default_factory=dict)
    text_density: float = 1.0
    icon_density: float = 1.0
    highway_prob: float = 0.6
    water_prob: float = 0.45
    park_prob: float = 0.8
    hospital_prob: float = 0.5
    street_width: Optional[int] = None
    max_attempts: int = 20

    def __post_init__(self):
        validate_zoom(self.zoom_analog)
        if self.include_buildings is None:
            self.include_buildings = self.zoom_analog >= BUILDINGS_MIN_ZOOM
        if self.include_buildings and self.zoom_analog < BUILDINGS_MIN_ZOOM:
            raise DatasetError(
                f"Buildings are only visible from zoom {BUILDINGS_MIN_ZOOM}; "
                f"got include_buildings=True at zoom {self.zoom_analog}"
            )
        if not self.frequency_targets:
            self.frequency_targets = default_frequency_targets(self.zoom_analog)
        for class_id, (low, high) in self.frequency_targets.items():
            if not 0.0 <= low <= high <= 1.0:
                raise DatasetError(
                    f"Frequency target for {ClassId(class_id).display_name} must satisfy "
                    f"0 <= low <= high <= 1, got ({low}, {high})"
                )
        for name in ("text_density", "icon_density"):
            if getattr(self, name) < 0:
                raise DatasetError(f"{name} must be non-negative")
        for name in ("highway_prob", "water_prob", "park_prob", "hospital_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DatasetError(f"{name} must be in [0, 1]")
        if self.size < 32:
            raise DatasetError(f"Synthetic tiles must be at least 32 pixels, got {self.size}")
        if self.max_attempts < 1:
            raise DatasetError("max_attempts must be >= 1")
        if self.street_width is None:
            self.street_width = DEFAULT_STREET_WIDTHS[self.zoom_analog]


@dataclass
class LocationRecord:
    """A named place to fetch, as listed in a locations CSV."""

    location: str
    country: str
    location_type: LocationType = LocationType.city
    split: Split = Split.train
    zooms: List[int] = field(default_factory=lambda: [16, 18])
