"""Per-class segmentation metrics and median/mean tables.

Scores are fractions in [0, 1] per image; tables hold unrounded
percentages. ``None`` marks an N/A cell.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    TYPE_CHECKING,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .palette import FEATURE_CLASSES, ClassId, ClassPalette, segment_image, validate_mask

if TYPE_CHECKING:  # pragma: no cover
    from .dataset.types import MapPair

logger = logging.getLogger(__name__)


class MetricsError(Exception):
    """Raised for invalid metric inputs (shape mismatch, empty sets)."""

    pass


class ZoomCompatibilityError(MetricsError):
    """Raised when a model is evaluated on a zoom level it was not trained for."""

    pass


class Statistic(str, Enum):
    MEDIAN = "Median"
    MEAN = "Mean"


class MetricName(str, Enum):
    IOU = "IoU"
    F1 = "F1"
    PRECISION = "Precision"
    RECALL = "Recall"


class ModelId(str, Enum):
    """Trained model families, named after the zooms they were trained on."""

    ZOOM_16 = "Zoom-16"
    ZOOM_18 = "Zoom-18"
    ZOOM_16_18 = "Zoom-16/18"


COMPATIBLE_ZOOMS: Dict[ModelId, FrozenSet[int]] = {
    ModelId.ZOOM_16: frozenset({15, 16}),
    ModelId.ZOOM_18: frozenset({17, 18}),
    ModelId.ZOOM_16_18: frozenset({15, 16, 17, 18}),
}

_ZOOM_SETS: Dict[FrozenSet[int], ModelId] = {
    frozenset({16}): ModelId.ZOOM_16,
    frozenset({18}): ModelId.ZOOM_18,
    frozenset({16, 18}): ModelId.ZOOM_16_18,
}


def model_id_for_zoom_set(zooms: Iterable[int]) -> ModelId:
    key = frozenset(int(z) for z in zooms)
    try:
        return _ZOOM_SETS[key]
    except KeyError:
        raise MetricsError(
            f"Unsupported training zoom set {sorted(key)}; use {{16}}, {{18}} or {{16, 18}}"
        ) from None


def check_compatibility(model_id: Union[ModelId, str], zoom: int) -> None:
    model_id = ModelId(model_id)
    allowed = COMPATIBLE_ZOOMS[model_id]
    if zoom not in allowed:
        raise ZoomCompatibilityError(
            f"incompatible zoom: {model_id.value} model can only be evaluated on "
            f"zooms {sorted(allowed)}, got zoom {zoom}"
        )


# === PER-IMAGE COUNTS AND SCORES ===


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def present(self) -> bool:
        return self.tp + self.fp + self.fn > 0


@dataclass
class ConfusionCounts:
    """Pixel counts per feature class for one ground-truth/prediction pair.

    ``background`` is the number of ground-truth Background pixels, so that
    ``sum(tp + fn) + background == total``.
    """

    counts: Dict[ClassId, ClassCounts]
    background: int
    total: int

    def __getitem__(self, class_id: ClassId) -> ClassCounts:
        return self.counts[class_id]


@dataclass(frozen=True)
class ClassScores:
    iou: float
    f1: float
    precision: float
    recall: float

    def get(self, metric: MetricName) -> float:
        return {
            MetricName.IOU: self.iou,
            MetricName.F1: self.f1,
            MetricName.PRECISION: self.precision,
            MetricName.RECALL: self.recall,
        }[metric]


@dataclass
class ImageMetrics:
    """Scores per feature class; ``None`` when the class is N/A for the image."""

    scores: Dict[ClassId, Optional[ClassScores]]

    def __getitem__(self, class_id: ClassId) -> Optional[ClassScores]:
        return self.scores.get(class_id)


def confusion(gt: np.ndarray, pred: np.ndarray) -> ConfusionCounts:
    validate_mask(gt)
    validate_mask(pred)
    if gt.shape != pred.shape:
        raise MetricsError(f"Mask dimensions differ: {gt.shape} vs {pred.shape}")

    n_labels = len(ClassId)
    # joint histogram: rows ground truth, columns prediction
    joint = np.bincount(
        gt.astype(np.int64).ravel() * n_labels + pred.astype(np.int64).ravel(),
        minlength=n_labels * n_labels,
    ).reshape(n_labels, n_labels)

    counts = {}
    for class_id in FEATURE_CLASSES:
        c = int(class_id)
        tp = int(joint[c, c])
        counts[class_id] = ClassCounts(
            tp=tp,
            fp=int(joint[:, c].sum()) - tp,
            fn=int(joint[c, :].sum()) - tp,
        )
    background = int(joint[int(ClassId.BACKGROUND), :].sum())
    return ConfusionCounts(counts=counts, background=background, total=int(gt.size))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def class_scores(counts: ClassCounts) -> Optional[ClassScores]:
    if not counts.present:
        return None
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    iou = _ratio(tp, tp + fp + fn)
    return ClassScores(iou=iou, f1=f1, precision=precision, recall=recall)


def class_metrics(c: ConfusionCounts) -> ImageMetrics:
    return ImageMetrics({class_id: class_scores(c[class_id]) for class_id in FEATURE_CLASSES})


# === TABLES ===

Cell = Tuple[ClassId, Statistic, MetricName]


@dataclass
class MetricTable:
    """Percentages per (class, statistic, metric); ``None`` is N/A."""

    values: Dict[Cell, Optional[float]] = field(default_factory=dict)
    classes: Tuple[ClassId, ...] = FEATURE_CLASSES
    statistics: Tuple[Statistic, ...] = (Statistic.MEDIAN, Statistic.MEAN)

    def get(
        self, class_id: ClassId, statistic: Statistic, metric: MetricName
    ) -> Optional[float]:
        return self.values.get((class_id, statistic, metric))

    def shape(self) -> Tuple[Tuple[ClassId, ...], Tuple[Statistic, ...]]:
        return self.classes, self.statistics

    def rows(self) -> List[Tuple[ClassId, Statistic]]:
        return [(c, s) for c in self.classes for s in self.statistics]


@dataclass
class DiffTable:
    double: MetricTable
    single: MetricTable
    diff: MetricTable


def aggregate(
    per_image: Sequence[ImageMetrics],
    statistic: Union[Statistic, str, Sequence[Union[Statistic, str]], None] = None,
) -> MetricTable:
    """Median and/or mean of every metric over the images where a class is present."""
    if not per_image:
        raise MetricsError("Cannot aggregate an empty list of image metrics")
    if statistic is None:
        statistics: Tuple[Statistic, ...] = (Statistic.MEDIAN, Statistic.MEAN)
    elif isinstance(statistic, (Statistic, str)):
        statistics = (Statistic(statistic),)
    else:
        statistics = tuple(Statistic(s) for s in statistic)

    reducers = {Statistic.MEDIAN: np.median, Statistic.MEAN: np.mean}
    values: Dict[Cell, Optional[float]] = {}
    for class_id in FEATURE_CLASSES:
        present = [m[class_id] for m in per_image if m[class_id] is not None]
        for stat in statistics:
            for metric in MetricName:
                if not present:
                    values[(class_id, stat, metric)] = None
                    continue
                samples = np.array([s.get(metric) for s in present], dtype=np.float64)
                values[(class_id, stat, metric)] = float(reducers[stat](samples)) * 100.0
    return MetricTable(values=values, statistics=statistics)


def diff_table(double: MetricTable, single: MetricTable) -> DiffTable:
    """Cellwise ``double - single``; N/A on either side gives N/A."""
    if double.shape() != single.shape() or set(double.values) != set(single.values):
        raise MetricsError("Cannot diff metric tables with different classes or statistics")
    diff: Dict[Cell, Optional[float]] = {}
    for cell, d in double.values.items():
        s = single.values[cell]
        diff[cell] = None if d is None or s is None else d - s
    return DiffTable(
        double=double,
        single=single,
        diff=MetricTable(values=diff, classes=double.classes, statistics=double.statistics),
    )


# === RUN EVALUATION ===


def evaluate_pair(
    gt_image: np.ndarray, pred_image: np.ndarray, palette: Optional[ClassPalette] = None
) -> ImageMetrics:
    palette = palette or ClassPalette.default()
    return class_metrics(
        confusion(segment_image(gt_image, palette), segment_image(pred_image, palette))
    )


def evaluate_images(
    model_id: Union[ModelId, str],
    pairs: Sequence["MapPair"],
    predictions: Sequence[np.ndarray],
    palette: Optional[ClassPalette] = None,
    max_workers: Optional[int] = None,
) -> List[ImageMetrics]:
    """Per-image metrics for every pair, in input order.

    Raises:
        ZoomCompatibilityError: a pair's zoom is not allowed for ``model_id``.
    """
    model_id = ModelId(model_id)
    if len(pairs) != len(predictions):
        raise MetricsError(
            f"Got {len(predictions)} predictions for {len(pairs)} pairs"
        )
    for pair in pairs:
        check_compatibility(model_id, pair.zoom)

    palette = palette or ClassPalette.default()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(
            pool.map(
                lambda item: evaluate_pair(item[0].tactile, item[1], palette),
                zip(pairs, predictions),
            )
        )
    logger.info(f"Evaluated {len(results)} pairs for {model_id.value}")
    return results


def evaluate_run(
    model_id: Union[ModelId, str],
    pairs: Sequence["MapPair"],
    predictions: Sequence[np.ndarray],
    palette: Optional[ClassPalette] = None,
    max_workers: Optional[int] = None,
) -> MetricTable:
    per_image = evaluate_images(model_id, pairs, predictions, palette, max_workers)
    return aggregate(per_image)


def class_pixel_fractions(masks: Sequence[np.ndarray]) -> Dict[ClassId, float]:
    """Mean pixel percentage per class (Background included) over ``masks``."""
    if not masks:
        raise MetricsError("Cannot compute class fractions of an empty mask list")
    totals = np.zeros(len(ClassId), dtype=np.float64)
    for mask in masks:
        validate_mask(mask)
        totals += np.bincount(mask.ravel(), minlength=len(ClassId)) / mask.size
    return {c: float(totals[int(c)] / len(masks) * 100.0) for c in ClassId}
