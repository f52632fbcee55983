"""Tactile class palette, nearest-color segmentation and texture rendering.

Images are ``numpy`` arrays of shape ``(H, W, 3)`` and dtype ``uint8``.
Masks are ``(H, W)`` ``uint8`` arrays holding :class:`ClassId` values.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Rgb = Tuple[int, int, int]

DEFAULT_BACKGROUND_THRESHOLD = 230


class PaletteError(Exception):
    """Raised for invalid palettes, texture maps or image arrays."""

    pass


class ClassId(IntEnum):
    """Tactile classes. Six scored feature classes plus Background."""

    STREETS = 0
    HIGHWAYS = 1
    PARKS = 2
    WATER = 3
    BUILDINGS = 4
    HOSPITALS = 5
    BACKGROUND = 6

    @property
    def display_name(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_name(cls, name: str) -> "ClassId":
        """Look up a class by case-insensitive display name."""
        key = name.strip().upper()
        try:
            return cls[key]
        except KeyError:
            valid = ", ".join(c.display_name for c in cls)
            raise PaletteError(f"Unknown class '{name}'. Valid classes: {valid}") from None


FEATURE_CLASSES: Tuple[ClassId, ...] = tuple(c for c in ClassId if c != ClassId.BACKGROUND)


@dataclass(frozen=True)
class PaletteEntry:
    class_id: ClassId
    name: str
    rgb: Rgb

    def __post_init__(self):
        if len(self.rgb) != 3 or any(
            not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= 255
            for v in self.rgb
        ):
            raise PaletteError(
                f"Color for {self.name} must be three integers in [0, 255], got {self.rgb}"
            )

    @property
    def hex(self) -> str:
        return "{:02x}{:02x}{:02x}".format(*self.rgb)


_DEFAULT_COLORS: Dict[ClassId, Rgb] = {
    ClassId.STREETS: (255, 0, 255),
    ClassId.HIGHWAYS: (255, 255, 0),
    ClassId.PARKS: (0, 255, 0),
    ClassId.WATER: (0, 0, 255),
    ClassId.BUILDINGS: (0, 255, 255),
    ClassId.HOSPITALS: (128, 128, 128),
    ClassId.BACKGROUND: (255, 255, 255),
}

_HEX_RE = re.compile(r"^(?:0x|#)?([0-9a-fA-F]{6})$")


def parse_hex_color(value: str) -> Rgb:
    """Parse ``ff00ff``, ``#ff00ff`` or ``0xff00ff`` into an RGB triple."""
    match = _HEX_RE.match(value.strip())
    if not match:
        raise PaletteError(f"Invalid hex color '{value}'. Use 6 hex digits, e.g. 'ff00ff'")
    digits = match.group(1)
    return (int(digits[0:2], 16), int(digits[2:4], 16), int(digits[4:6], 16))


@dataclass(frozen=True)
class ClassPalette:
    """Ordered class colors plus the background distance threshold.

    Entry order is the tie-break order of the nearest-color search.
    """

    entries: Tuple[PaletteEntry, ...]
    background_threshold: int = DEFAULT_BACKGROUND_THRESHOLD
    _colors: np.ndarray = field(init=False, repr=False, compare=False)
    _labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)

        ids = [e.class_id for e in entries]
        missing = [c.display_name for c in ClassId if c not in ids]
        if missing:
            raise PaletteError(f"Palette is missing classes: {', '.join(missing)}")
        if len(set(ids)) != len(ids):
            raise PaletteError("Palette lists a class more than once")
        rgbs = [tuple(int(v) for v in e.rgb) for e in entries]
        if len(set(rgbs)) != len(rgbs):
            raise PaletteError("Palette colors must be pairwise distinct")
        if not 0 <= self.background_threshold <= 765:
            raise PaletteError(
                f"background_threshold must be in [0, 765], got {self.background_threshold}"
            )

        object.__setattr__(self, "_colors", np.asarray(rgbs, dtype=np.int16))
        object.__setattr__(self, "_labels", np.asarray(ids, dtype=np.uint8))

    # === CONSTRUCTORS ===

    @classmethod
    def default(cls) -> "ClassPalette":
        return cls(
            tuple(
                PaletteEntry(class_id, class_id.display_name, rgb)
                for class_id, rgb in _DEFAULT_COLORS.items()
            )
        )

    @classmethod
    def from_mapping(
        cls,
        colors: Mapping[str, Union[str, Sequence[int]]],
        background_threshold: int = DEFAULT_BACKGROUND_THRESHOLD,
    ) -> "ClassPalette":
        """Build a palette from ``{class name: hex or [r, g, b]}``.

        Classes not named keep their default color; the entry order is always
        the canonical class order.
        """
        overrides: Dict[ClassId, Rgb] = {}
        for name, value in colors.items():
            class_id = ClassId.from_name(name)
            if isinstance(value, str):
                overrides[class_id] = parse_hex_color(value)
            else:
                overrides[class_id] = tuple(int(v) for v in value)  # type: ignore[assignment]
        return cls(
            tuple(
                PaletteEntry(c, c.display_name, overrides.get(c, _DEFAULT_COLORS[c]))
                for c in ClassId
            ),
            background_threshold=int(background_threshold),
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ClassPalette":
        """Load a ``name = RRGGBB`` palette file.

        Blank lines and lines starting with ``#`` are ignored. ``background_threshold = N``
        sets the threshold.
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise PaletteError(f"Cannot read palette file {path}: {e}") from e

        colors: Dict[str, str] = {}
        threshold = DEFAULT_BACKGROUND_THRESHOLD
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise PaletteError(f"{path}:{lineno}: expected 'name = value', got '{raw}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key.lower() == "background_threshold":
                try:
                    threshold = int(value)
                except ValueError as e:
                    raise PaletteError(
                        f"{path}:{lineno}: background_threshold must be an integer"
                    ) from e
            else:
                colors[key] = value
        return cls.from_mapping(colors, threshold)

    def to_text(self) -> str:
        lines = [f"{e.name} = {e.hex}" for e in self.entries]
        lines.append(f"background_threshold = {self.background_threshold}")
        return "\n".join(lines) + "\n"

    # === LOOKUPS ===

    def color_of(self, class_id: ClassId) -> Rgb:
        for entry in self.entries:
            if entry.class_id == class_id:
                return entry.rgb
        raise PaletteError(f"No color for {class_id!r}")  # pragma: no cover

    @property
    def colors(self) -> np.ndarray:
        """``(7, 3)`` int16 color table in entry order."""
        return self._colors

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def lookup_table(self) -> np.ndarray:
        """``(7, 3)`` uint8 table indexed by class id."""
        lut = np.zeros((len(ClassId), 3), dtype=np.uint8)
        for entry in self.entries:
            lut[int(entry.class_id)] = entry.rgb
        return lut


# === IMAGE VALIDATION ===


def validate_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        shape = getattr(img, "shape", None)
        raise PaletteError(f"Expected an (H, W, 3) RGB array, got shape {shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise PaletteError("Image width and height must be positive")
    if img.dtype != np.uint8:
        raise PaletteError(f"Expected uint8 image data, got {img.dtype}")
    return img


def validate_mask(mask: np.ndarray) -> np.ndarray:
    if not isinstance(mask, np.ndarray) or mask.ndim != 2:
        raise PaletteError(f"Expected an (H, W) class mask, got shape {getattr(mask, 'shape', None)}")
    if mask.size and int(mask.max()) > int(ClassId.BACKGROUND):
        raise PaletteError(f"Mask holds unknown label {int(mask.max())}")
    return mask


# === SEGMENTATION ===


def classify_pixel(rgb: Sequence[int], palette: Optional[ClassPalette] = None) -> ClassId:
    """Nearest palette class by summed per-channel absolute difference.

    Falls back to Background when the nearest color is farther than the
    palette's ``background_threshold``.
    """
    palette = palette or ClassPalette.default()
    pixel = tuple(int(v) for v in rgb)
    if len(pixel) != 3 or min(pixel) < 0 or max(pixel) > 255:
        raise PaletteError(f"Pixel components must be in [0, 255], got {tuple(rgb)}")
    distances = [sum(abs(a - b) for a, b in zip(pixel, entry.rgb)) for entry in palette.entries]
    nearest = min(distances)
    if nearest > palette.background_threshold:
        return ClassId.BACKGROUND
    # index() returns the first minimum, so ties go to the earlier entry
    return ClassId(palette.entries[distances.index(nearest)].class_id)


def segment_image(img: np.ndarray, palette: Optional[ClassPalette] = None) -> np.ndarray:
    """Classify every pixel of ``img``; returns an ``(H, W)`` uint8 mask."""
    palette = palette or ClassPalette.default()
    validate_image(img)
    h, w, _ = img.shape
    flat = img.reshape(-1, 1, 3).astype(np.int16)
    distances = np.abs(flat - palette.colors[np.newaxis, :, :]).sum(axis=2)
    best = np.argmin(distances, axis=1)
    labels = palette.labels[best]
    too_far = distances[np.arange(best.size), best] > palette.background_threshold
    labels = np.where(too_far, np.uint8(ClassId.BACKGROUND), labels)
    return labels.reshape(h, w).astype(np.uint8)


def render_mask(mask: np.ndarray, palette: Optional[ClassPalette] = None) -> np.ndarray:
    """Paint each label with its exact palette color."""
    palette = palette or ClassPalette.default()
    validate_mask(mask)
    return palette.lookup_table()[mask]


def snap_to_palette(img: np.ndarray, palette: Optional[ClassPalette] = None) -> np.ndarray:
    """Replace every pixel by the exact color of its segmented class."""
    palette = palette or ClassPalette.default()
    return render_mask(segment_image(img, palette), palette)


def is_palette_pure(img: np.ndarray, palette: Optional[ClassPalette] = None) -> bool:
    palette = palette or ClassPalette.default()
    validate_image(img)
    flat = img.reshape(-1, 1, 3).astype(np.int16)
    matches = (flat == palette.colors[np.newaxis, :, :]).all(axis=2).any(axis=1)
    return bool(matches.all())


# === TEXTURES ===

TEXTURE_KINDS = ("solid", "hatch", "dot_grid", "cross_hatch", "blank")


@dataclass(frozen=True)
class TexturePattern:
    """Black-on-white fill pattern evaluated at absolute image coordinates."""

    kind: str = "solid"
    period: int = 4

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise PaletteError(
                f"Unknown texture '{self.kind}'. Valid textures: {', '.join(TEXTURE_KINDS)}"
            )
        if self.period < 1:
            raise PaletteError(f"Texture period must be >= 1, got {self.period}")

    @classmethod
    def parse(cls, text: str) -> "TexturePattern":
        """Parse ``kind`` or ``kind:period`` (e.g. ``dot_grid:4``)."""
        kind, _, period = text.strip().partition(":")
        if not period:
            return cls(kind)
        try:
            return cls(kind, int(period))
        except ValueError as e:
            raise PaletteError(f"Invalid texture period in '{text}'") from e

    def __str__(self) -> str:
        if self.kind in ("solid", "blank"):
            return self.kind
        return f"{self.kind}:{self.period}"

    def ink(self, height: int, width: int) -> np.ndarray:
        """Boolean ``(height, width)`` grid, True where the pattern is black."""
        y, x = np.mgrid[0:height, 0:width]
        p = self.period
        if self.kind == "solid":
            return np.ones((height, width), dtype=bool)
        if self.kind == "blank":
            return np.zeros((height, width), dtype=bool)
        if self.kind == "dot_grid":
            return (y % p == 0) & (x % p == 0)
        if self.kind == "hatch":
            return (x + y) % p == 0
        return ((x + y) % p == 0) | ((x - y) % p == 0)


DEFAULT_TEXTURES: Dict[ClassId, TexturePattern] = {
    ClassId.STREETS: TexturePattern("solid"),
    ClassId.HIGHWAYS: TexturePattern("cross_hatch", 3),
    ClassId.PARKS: TexturePattern("dot_grid", 4),
    ClassId.WATER: TexturePattern("hatch", 4),
    ClassId.BUILDINGS: TexturePattern("cross_hatch", 6),
    ClassId.HOSPITALS: TexturePattern("dot_grid", 2),
}


def parse_texture_map(
    texture_map: Optional[Mapping[Union[str, ClassId], Union[str, TexturePattern]]],
) -> Dict[ClassId, TexturePattern]:
    """Resolve a user texture map against the defaults.

    Keys may be class names or ids; Background cannot be textured.
    """
    resolved = dict(DEFAULT_TEXTURES)
    for key, value in (texture_map or {}).items():
        class_id = key if isinstance(key, ClassId) else ClassId.from_name(str(key))
        if class_id == ClassId.BACKGROUND:
            raise PaletteError("Background cannot be assigned a texture")
        resolved[class_id] = value if isinstance(value, TexturePattern) else TexturePattern.parse(value)
    return resolved


def texturize(
    tactile: np.ndarray,
    palette: Optional[ClassPalette] = None,
    texture_map: Optional[Mapping[Union[str, ClassId], Union[str, TexturePattern]]] = None,
) -> np.ndarray:
    """Render a tactile image as black-on-white textures, one per class."""
    palette = palette or ClassPalette.default()
    textures = parse_texture_map(texture_map)
    mask = segment_image(tactile, palette)
    h, w = mask.shape

    out = np.full((h, w, 3), 255, dtype=np.uint8)
    for class_id, pattern in textures.items():
        region = mask == int(class_id)
        if not region.any():
            continue
        out[region & pattern.ink(h, w)] = 0
    return out


def class_names(classes: Iterable[ClassId] = FEATURE_CLASSES) -> List[str]:
    return [c.display_name for c in classes]
