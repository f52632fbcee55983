"""
Pytest configuration and fixtures for tactile-maps testing.

Small pairs are built from hand-drawn class masks so every test controls
exactly which classes appear where. Helpers are importable directly:

    from conftest import make_mask, make_pair
"""

import os
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np
import pytest
import torch

from tactile_maps.dataset.types import MapPair, Split
from tactile_maps.palette import ClassId, ClassPalette, render_mask

DATA_DIR = Path(__file__).parent / "data"

# Visual-map colors used for the source side of hand-built pairs
SOURCE_COLORS: Dict[ClassId, tuple] = {
    ClassId.STREETS: (255, 255, 255),
    ClassId.HIGHWAYS: (253, 226, 147),
    ClassId.PARKS: (195, 236, 178),
    ClassId.WATER: (170, 218, 255),
    ClassId.BUILDINGS: (232, 232, 232),
    ClassId.HOSPITALS: (250, 222, 230),
    ClassId.BACKGROUND: (245, 247, 248),
}


def make_mask(size: int = 32, zoom: int = 16) -> np.ndarray:
    """A small city: a street grid, one highway, a park, a pond and a hospital.

    Zoom 17 and up also gets buildings inside the blocks.
    """
    mask = np.full((size, size), int(ClassId.BACKGROUND), dtype=np.uint8)
    step = max(size // 4, 4)
    for pos in range(step // 2, size, step):
        mask[pos : pos + 2, :] = ClassId.STREETS
        mask[:, pos : pos + 2] = ClassId.STREETS
    q = size // 8
    if zoom >= 17:
        for y in range(step // 2 + 3, size - 2, step):
            for x in range(step // 2 + 3, size - 2, step):
                mask[y : y + 2, x : x + 2] = ClassId.BUILDINGS
    mask[q : 2 * q, 5 * q : 7 * q] = ClassId.PARKS
    mask[5 * q : 7 * q, q : 2 * q] = ClassId.WATER
    mask[6 * q : 7 * q, 6 * q : 7 * q] = ClassId.HOSPITALS
    mask[:, size - 3 : size - 1] = ClassId.HIGHWAYS
    return mask


def make_pair(
    mask: Optional[np.ndarray] = None,
    zoom: int = 16,
    pair_id: str = "pair-0",
    split: Split = Split.train,
    size: int = 32,
    palette: Optional[ClassPalette] = None,
) -> MapPair:
    """Aligned pair whose tactile side is the palette rendering of ``mask``."""
    if mask is None:
        mask = make_mask(size, zoom)
    lut = np.zeros((len(ClassId), 3), dtype=np.uint8)
    for class_id, rgb in SOURCE_COLORS.items():
        lut[int(class_id)] = rgb
    return MapPair(
        id=pair_id,
        location=f"test location {pair_id}",
        zoom=zoom,
        source=lut[mask],
        tactile=render_mask(mask, palette or ClassPalette.default()),
        country="Testland",
        split=split,
    )


def central_difference(
    fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, eps: float = 1e-6
) -> torch.Tensor:
    """Numerical gradient of the scalar ``fn`` at ``x`` (float64)."""
    grad = torch.zeros_like(x)
    flat_x, flat_g = x.view(-1), grad.view(-1)
    for i in range(flat_x.numel()):
        orig = flat_x[i].item()
        flat_x[i] = orig + eps
        plus = fn(x).item()
        flat_x[i] = orig - eps
        minus = fn(x).item()
        flat_x[i] = orig
        flat_g[i] = (plus - minus) / (2 * eps)
    return grad


@pytest.fixture
def palette():
    return ClassPalette.default()


@pytest.fixture
def small_pairs():
    """Four zoom-16 pairs of 32x32 with slightly different layouts."""
    pairs = []
    for index in range(4):
        mask = np.roll(make_mask(32, 16), shift=index * 2, axis=1)
        pairs.append(make_pair(mask, zoom=16, pair_id=f"pair-{index}"))
    return pairs


@pytest.fixture
def run_dir(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    return out


@pytest.fixture
def clean_env(monkeypatch):
    """Remove TACTILE_* variables so config tests see only what they set."""
    for name in list(os.environ):
        if name.startswith("TACTILE_"):
            monkeypatch.delenv(name, raising=False)
    return monkeypatch


def pytest_collection_modifyitems(config, items):
    if os.environ.get("TACTILE_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set TACTILE_RUN_SLOW=1 to run desk-scale experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
