"""
Tactile Maps - convert visual street maps into color-coded tactile maps.

This package bundles everything needed to reproduce the tactile map
translation pipeline offline:

Features:
- Exact nearest-color segmentation against the tactile class palette
- Per-class IoU/F1/precision/recall tables with median/mean statistics
- Source/tactile pair acquisition (Static Maps API, published dataset
  import, seeded procedural synthesis)
- Paired geometric augmentation and grey street/building recoloring
- A UNet++ generator and PatchGAN discriminator trained Pix2Pix style

Example usage:
    >>> from tactile_maps.palette import ClassPalette, segment_image
    >>> mask = segment_image(image, ClassPalette.default())
"""

import logging

from .palette import ClassId, ClassPalette

__version__ = "0.3.0"
__license__ = "MIT"
__description__ = "Convert visual street maps into color-coded tactile maps"

__all__ = [
    "ClassId",
    "ClassPalette",
    "__version__",
    "__license__",
    "__description__",
]


# Package-level logging configuration
logging.getLogger(__name__).addHandler(logging.NullHandler())

_DEFAULT_LOG_LEVEL = logging.WARNING
_logger = logging.getLogger(__name__)
_logger.setLevel(_DEFAULT_LOG_LEVEL)
