"""Image file helpers: lossless PNG I/O and center cropping."""

import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..palette import validate_image
from .types import DatasetError, ImageSizeError

PNG_COMPRESS_LEVEL = 6


def center_crop(img: np.ndarray, target: int) -> np.ndarray:
    """Crop the central ``target x target`` window.

    The offset on each axis is ``floor((dim - target) / 2)``.
    """
    h, w = img.shape[:2]
    if target < 1 or target > h or target > w:
        raise ImageSizeError(f"Cannot crop a {w}x{h} image to {target}x{target}")
    top = (h - target) // 2
    left = (w - target) // 2
    return np.ascontiguousarray(img[top : top + target, left : left + target])


def encode_png(img: np.ndarray) -> bytes:
    validate_image(img)
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img)).save(
        buffer, format="PNG", compress_level=PNG_COMPRESS_LEVEL
    )
    return buffer.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    """Decode image bytes to an RGB ``uint8`` array (palette PNGs included)."""
    try:
        with Image.open(io.BytesIO(data)) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError) as e:
        raise DatasetError(f"Cannot decode image data: {e}") from e


def save_png(img: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(img))
    return path


def load_png(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"Cannot read image {path}: {e}") from e
    return decode_png(data)

