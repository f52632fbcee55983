"""Import of the published source/tactile dataset from disk.

Expected layout::

    <root>/source/<relative path>.png
    <root>/tactile/<relative path>.png
    <root>/locations.csv           (optional: id, location, country, type, split)

A directory component ``zoom16``, ``zoom_18`` or ``16`` in the relative
path gives the zoom unless :attr:`ImportOptions.zoom` is set.
"""

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Dict, List, Optional, Union

import pathspec

from ..palette import ClassPalette, snap_to_palette
from .images import center_crop, load_png
from .types import (
    SOURCE_SIZE,
    TACTILE_FETCH_SIZE,
    DatasetError,
    ImageSizeError,
    LocationType,
    MapPair,
    Split,
    validate_zoom,
)

logger = logging.getLogger(__name__)

_ZOOM_DIR_RE = re.compile(r"^(?:zoom[-_]?)?(1[5-8])$", re.IGNORECASE)


@dataclass
class ImportOptions:
    """Options for :class:`PublishedDatasetImporter`.

    ``include``/``exclude`` are gitwildmatch patterns matched against the
    path relative to ``source/``.
    """

    include: List[str] = field(default_factory=lambda: ["*.png"])
    exclude: List[str] = field(default_factory=list)
    zoom: Optional[int] = None
    split: Split = Split.train
    country: str = ""
    location_type: LocationType = LocationType.city
    snap_tactile: bool = True
    continue_on_error: bool = True

    def __post_init__(self):
        if not self.include:
            raise ValueError("At least one include pattern is required")
        if self.zoom is not None:
            validate_zoom(self.zoom)
        self.split = Split(self.split)
        self.location_type = LocationType(self.location_type)


@dataclass
class ImportResult:
    pairs: List[MapPair] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)

    def add_failure(self, item: str, reason: str) -> None:
        self.errors.append(f"{item}: {reason}")

    def add_skip(self, item: str, reason: str) -> None:
        self.skipped.append(f"{item}: {reason}")

    @property
    def success_count(self) -> int:
        return len(self.pairs)


class PublishedDatasetImporter:
    """Reads paired PNG tiles into :class:`MapPair` objects."""

    def __init__(self, options: Optional[ImportOptions] = None, palette: Optional[ClassPalette] = None):
        self.options = options or ImportOptions()
        self.palette = palette or ClassPalette.default()
        self._include = pathspec.PathSpec.from_lines("gitwildmatch", self.options.include)
        self._exclude = pathspec.PathSpec.from_lines("gitwildmatch", self.options.exclude)

    def validate(self, root: Union[str, Path]) -> Path:
        root = Path(root)
        if not root.is_dir():
            raise DatasetError(f"Dataset directory not found: {root}")
        for sub in ("source", "tactile"):
            if not (root / sub).is_dir():
                raise DatasetError(f"Dataset directory {root} has no '{sub}/' folder")
        return root

    def scan(self, root: Union[str, Path]) -> List[PurePosixPath]:
        """Relative paths under ``source/`` selected by the include/exclude patterns."""
        source_dir = self.validate(root) / "source"
        selected = []
        for path in sorted(source_dir.rglob("*")):
            if not path.is_file():
                continue
            rel = PurePosixPath(path.relative_to(source_dir).as_posix())
            if self._include.match_file(str(rel)) and not self._exclude.match_file(str(rel)):
                selected.append(rel)
        return selected

    def zoom_for(self, rel: PurePosixPath) -> int:
        if self.options.zoom is not None:
            return self.options.zoom
        for part in rel.parts[:-1]:
            match = _ZOOM_DIR_RE.match(part)
            if match:
                return int(match.group(1))
        raise DatasetError(f"Cannot infer the zoom of '{rel}'; pass an explicit zoom")

    def read_locations(self, root: Path) -> Dict[str, Dict[str, str]]:
        path = root / "locations.csv"
        if not path.exists():
            return {}
        with open(path, encoding="utf-8", newline="") as f:
            rows = {row["id"]: row for row in csv.DictReader(f) if row.get("id")}
        logger.debug(f"Read metadata for {len(rows)} locations from {path}")
        return rows

    def load(self, root: Path, rel: PurePosixPath, meta: Optional[Dict[str, str]] = None) -> MapPair:
        source = load_png(root / "source" / rel)
        tactile_path = root / "tactile" / rel
        if not tactile_path.exists():
            raise DatasetError("no matching tactile tile")
        tactile = load_png(tactile_path)

        if source.shape[:2] != (SOURCE_SIZE, SOURCE_SIZE):
            raise ImageSizeError(f"source is {source.shape[1]}x{source.shape[0]}, expected 512x512")
        if tactile.shape[:2] == (TACTILE_FETCH_SIZE, TACTILE_FETCH_SIZE):
            tactile = center_crop(tactile, SOURCE_SIZE)
        elif tactile.shape[:2] != (SOURCE_SIZE, SOURCE_SIZE):
            raise ImageSizeError(
                f"tactile is {tactile.shape[1]}x{tactile.shape[0]}, expected 512 or 572"
            )
        if self.options.snap_tactile:
            tactile = snap_to_palette(tactile, self.palette)

        meta = meta or {}
        pair_id = rel.with_suffix("").as_posix().replace("/", "-")
        return MapPair(
            id=pair_id,
            location=meta.get("location") or rel.stem,
            zoom=self.zoom_for(rel),
            country=meta.get("country") or self.options.country,
            location_type=LocationType(meta.get("type") or self.options.location_type),
            split=Split(meta.get("split") or self.options.split),
            source=source,
            tactile=tactile,
            metadata={"imported_from": rel.as_posix()},
        )

    def import_pairs(self, root: Union[str, Path]) -> ImportResult:
        root = self.validate(root)
        locations = self.read_locations(root)
        result = ImportResult()
        files = self.scan(root)
        if not files:
            raise DatasetError(f"No source tiles matched {self.options.include} in {root}")

        for rel in files:
            pair_id = rel.with_suffix("").as_posix().replace("/", "-")
            if not (root / "tactile" / rel).exists():
                result.add_skip(rel.as_posix(), "no matching tactile tile")
                continue
            try:
                result.pairs.append(self.load(root, rel, locations.get(pair_id)))
            except (DatasetError, ValueError) as e:
                if not self.options.continue_on_error:
                    raise
                result.add_failure(rel.as_posix(), str(e))
                logger.warning(f"Skipping {rel}: {e}")
        logger.info(
            f"Imported {result.success_count} pairs from {root} ({len(result.errors)} failed, {len(result.skipped)} skipped)"
        )
        return result
