"""Source/tactile pair construction: fetch, import, synthesis, manifests, splits."""

from .fetch import FetchSettings, MockMapServer, StaticMapClient, read_locations
from .images import center_crop, load_png, save_png
from .importer import ImportOptions, PublishedDatasetImporter
from .manifest import (
    ManifestRecord,
    SplitPolicy,
    load_pairs,
    manifest_hash,
    read_manifest,
    split_dataset,
    write_manifest,
    write_pairs,
)
from .style import build_query, compile_style, default_style_rules
from .synth import synth_dataset, synth_pair
from .types import (
    DatasetError,
    FetchError,
    ImageSizeError,
    LocationType,
    ManifestError,
    MapPair,
    MapRequest,
    QueryError,
    QuotaExceededError,
    Split,
    SplitError,
    StyleError,
    StyleRule,
    SynthesisError,
    SynthProfile,
    Variant,
)

__all__ = [
    "DatasetError",
    "FetchError",
    "FetchSettings",
    "ImageSizeError",
    "ImportOptions",
    "LocationType",
    "ManifestError",
    "ManifestRecord",
    "MapPair",
    "MapRequest",
    "MockMapServer",
    "PublishedDatasetImporter",
    "QueryError",
    "QuotaExceededError",
    "Split",
    "SplitError",
    "SplitPolicy",
    "StaticMapClient",
    "StyleError",
    "StyleRule",
    "SynthProfile",
    "SynthesisError",
    "Variant",
    "build_query",
    "center_crop",
    "compile_style",
    "default_style_rules",
    "load_pairs",
    "load_png",
    "manifest_hash",
    "read_locations",
    "read_manifest",
    "save_png",
    "split_dataset",
    "synth_dataset",
    "synth_pair",
    "write_manifest",
    "write_pairs",
]
