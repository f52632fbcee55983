"""Pair storage, JSON Lines manifests and train/test splits."""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .images import encode_png, load_png
from .types import LocationType, ManifestError, MapPair, Split, SplitError

logger = logging.getLogger(__name__)

IMAGES_DIR = "images"


class ManifestRecord(BaseModel):
    """One stored pair. Paths are relative to the manifest's run directory."""

    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    location: str
    zoom: int = Field(ge=15, le=18)
    country: str = ""
    location_type: LocationType = LocationType.city
    split: Split = Split.train
    source_path: str
    tactile_path: str
    sha256: str = Field(min_length=64, max_length=64)
    metadata: Dict[str, Any] = Field(default_factory=dict)


def _pair_hash(source_png: bytes, tactile_png: bytes) -> str:
    return hashlib.sha256(source_png + tactile_png).hexdigest()


def write_pairs(
    pairs: Sequence[MapPair],
    root: Union[str, Path],
    manifest_path: Union[str, Path],
) -> List[ManifestRecord]:
    """Store pair images as PNG under ``root/images`` and write a manifest.

    Returns the written records in input order.
    """
    root = Path(root)
    seen = set()
    records = []
    for pair in pairs:
        if pair.id in seen:
            raise ManifestError(f"Duplicate pair id '{pair.id}'")
        seen.add(pair.id)

        source_png, tactile_png = encode_png(pair.source), encode_png(pair.tactile)
        rel_source = Path(IMAGES_DIR) / pair.id / "source.png"
        rel_tactile = Path(IMAGES_DIR) / pair.id / "tactile.png"
        (root / rel_source).parent.mkdir(parents=True, exist_ok=True)
        (root / rel_source).write_bytes(source_png)
        (root / rel_tactile).write_bytes(tactile_png)
        records.append(
            ManifestRecord(
                id=pair.id,
                location=pair.location,
                zoom=pair.zoom,
                country=pair.country,
                location_type=pair.location_type,
                split=pair.split,
                source_path=rel_source.as_posix(),
                tactile_path=rel_tactile.as_posix(),
                sha256=_pair_hash(source_png, tactile_png),
                metadata=pair.metadata,
            )
        )
    write_manifest(records, manifest_path)
    logger.info(f"Wrote {len(records)} pairs to {root}")
    return records


def write_manifest(records: Iterable[ManifestRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n")
    return path


def read_manifest(path: Union[str, Path]) -> List[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Manifest not found: {path}")
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(ManifestRecord.model_validate_json(line))
            except ValidationError as e:
                raise ManifestError(f"{path}:{lineno}: invalid manifest record: {e}") from e
    return records


def manifest_hash(path: Union[str, Path]) -> str:
    """sha256 of the manifest bytes; identifies the training data of a run."""
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e


def resolve_root(manifest_path: Union[str, Path]) -> Path:
    """Run directory of a manifest stored as ``<root>/manifests/<name>.jsonl``."""
    manifest_path = Path(manifest_path).resolve()
    parent = manifest_path.parent
    return parent.parent if parent.name == "manifests" else parent


def load_pair(
    record: ManifestRecord, root: Union[str, Path], verify: bool = True
) -> MapPair:
    root = Path(root)
    source_path, tactile_path = root / record.source_path, root / record.tactile_path
    if verify:
        try:
            digest = _pair_hash(source_path.read_bytes(), tactile_path.read_bytes())
        except OSError as e:
            raise ManifestError(f"Cannot read images of pair '{record.id}': {e}") from e
        if digest != record.sha256:
            raise ManifestError(f"Content hash mismatch for pair '{record.id}'")
    return MapPair(
        id=record.id,
        location=record.location,
        zoom=record.zoom,
        country=record.country,
        location_type=record.location_type,
        split=record.split,
        source=load_png(source_path),
        tactile=load_png(tactile_path),
        metadata=dict(record.metadata),
    )


def load_pairs(
    manifest_path: Union[str, Path],
    root: Optional[Union[str, Path]] = None,
    splits: Optional[Iterable[Split]] = None,
    zooms: Optional[Iterable[int]] = None,
) -> List[MapPair]:
    """Load the pairs of a manifest, optionally filtered by split and zoom."""
    root = Path(root) if root is not None else resolve_root(manifest_path)
    wanted_splits = {Split(s) for s in splits} if splits is not None else None
    wanted_zooms = set(zooms) if zooms is not None else None
    pairs = []
    for record in read_manifest(manifest_path):
        if wanted_splits is not None and record.split not in wanted_splits:
            continue
        if wanted_zooms is not None and record.zoom not in wanted_zooms:
            continue
        pairs.append(load_pair(record, root))
    return pairs


# === SPLITS ===


@dataclass(frozen=True)
class SplitPolicy:
    """Train/test-english counts. ``test=None`` takes every remaining pair."""

    train: int
    test: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.train < 0 or (self.test is not None and self.test < 0):
            raise SplitError("Split counts must be non-negative")


def split_dataset(
    records: Sequence[ManifestRecord], policy: SplitPolicy
) -> List[ManifestRecord]:
    """Assign train/test-english splits; test-world records keep their split.

    The shuffle is a seeded permutation over record ids sorted
    lexicographically, so input order does not matter.

    Raises:
        SplitError: counts exceed the available records, or leave some
            records unassigned.
    """
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise SplitError("Manifest holds duplicate pair ids")

    world = [r for r in records if r.split == Split.test_world]
    english = sorted((r for r in records if r.split != Split.test_world), key=lambda r: r.id)
    available = len(english)
    test = available - policy.train if policy.test is None else policy.test
    if policy.train + max(test, 0) > available or test < 0:
        raise SplitError(
            f"Split policy ({policy.train}, {policy.test}) needs more pairs than the "
            f"{available} available"
        )
    if policy.train + test != available:
        raise SplitError(
            f"Split policy ({policy.train}, {test}) leaves "
            f"{available - policy.train - test} of {available} pairs unassigned"
        )

    order = np.random.default_rng(policy.seed).permutation(available)
    assigned: Dict[str, Split] = {}
    for rank, index in enumerate(order):
        assigned[english[int(index)].id] = Split.train if rank < policy.train else Split.test_english
    for record in world:
        assigned[record.id] = Split.test_world

    result = [r.model_copy(update={"split": assigned[r.id]}) for r in records]
    logger.info(
        f"Split {len(records)} pairs: {policy.train} train, {test} test-english, "
        f"{len(world)} test-world"
    )
    return result
