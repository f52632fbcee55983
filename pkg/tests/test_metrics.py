"""Tests for metrics.py - confusion counts, scores, tables and zoom compatibility."""

import numpy as np
import pytest

from tactile_maps.metrics import (
    COMPATIBLE_ZOOMS,
    ClassCounts,
    ClassScores,
    ImageMetrics,
    MetricName,
    MetricsError,
    MetricTable,
    ModelId,
    Statistic,
    ZoomCompatibilityError,
    aggregate,
    check_compatibility,
    class_metrics,
    class_pixel_fractions,
    class_scores,
    confusion,
    diff_table,
    evaluate_images,
    evaluate_run,
    model_id_for_zoom_set,
)
from tactile_maps.palette import FEATURE_CLASSES, ClassId, render_mask

from conftest import make_mask, make_pair

S, W, BG = int(ClassId.STREETS), int(ClassId.WATER), int(ClassId.BACKGROUND)


def metrics_with(class_id, iou):
    """ImageMetrics where only ``class_id`` is present, with every score = ``iou``."""
    scores = {c: None for c in FEATURE_CLASSES}
    if iou is not None:
        scores[class_id] = ClassScores(iou=iou, f1=iou, precision=iou, recall=iou)
    return ImageMetrics(scores)


def table_with(value, class_id=ClassId.STREETS):
    """A full table whose every present cell equals ``value``."""
    values = {}
    for c in FEATURE_CLASSES:
        for stat in Statistic:
            for metric in MetricName:
                values[(c, stat, metric)] = value if c == class_id else None
    return MetricTable(values=values)


class TestConfusion:
    """Tests for per-class confusion counts."""

    def test_identical_masks(self):
        """Identical masks have no errors."""
        mask = np.full((4, 4), BG, dtype=np.uint8)
        mask.flat[:10] = S
        counts = confusion(mask, mask.copy())
        assert counts[ClassId.STREETS] == ClassCounts(tp=10, fp=0, fn=0)
        assert not counts[ClassId.WATER].present

    def test_disjoint_prediction(self):
        """All-Streets ground truth predicted as all Water."""
        gt = np.full((2, 2), S, dtype=np.uint8)
        pred = np.full((2, 2), W, dtype=np.uint8)
        counts = confusion(gt, pred)
        assert counts[ClassId.STREETS] == ClassCounts(tp=0, fp=0, fn=4)
        assert counts[ClassId.WATER] == ClassCounts(tp=0, fp=4, fn=0)

    def test_hand_counted_example(self):
        """gt=[S,S,W,Bg], pred=[S,W,W,Bg]."""
        gt = np.array([[S, S], [W, BG]], dtype=np.uint8)
        pred = np.array([[S, W], [W, BG]], dtype=np.uint8)
        counts = confusion(gt, pred)
        assert counts[ClassId.STREETS] == ClassCounts(tp=1, fp=0, fn=1)
        assert counts[ClassId.WATER] == ClassCounts(tp=1, fp=1, fn=0)

    def test_counts_cover_every_pixel(self):
        """sum(tp + fn) over feature classes plus Background pixels equals the total."""
        rng = np.random.default_rng(1)
        gt = rng.integers(0, 7, size=(9, 11)).astype(np.uint8)
        pred = rng.integers(0, 7, size=(9, 11)).astype(np.uint8)
        counts = confusion(gt, pred)
        covered = sum(counts[c].tp + counts[c].fn for c in FEATURE_CLASSES)
        assert covered + counts.background == counts.total == 99

    def test_dimension_mismatch(self):
        """Masks of different shapes are rejected."""
        with pytest.raises(MetricsError, match="dimensions differ"):
            confusion(np.zeros((2, 2), np.uint8), np.zeros((2, 3), np.uint8))


class TestClassScores:
    """Tests for IoU, F1, precision and recall."""

    def test_perfect(self):
        """(50, 0, 0) scores 1.0 everywhere."""
        scores = class_scores(ClassCounts(tp=50))
        assert (scores.iou, scores.f1, scores.precision, scores.recall) == (1.0, 1.0, 1.0, 1.0)

    def test_all_wrong(self):
        """(0, 10, 10) scores 0.0 everywhere."""
        scores = class_scores(ClassCounts(tp=0, fp=10, fn=10))
        assert (scores.iou, scores.f1, scores.precision, scores.recall) == (0.0, 0.0, 0.0, 0.0)

    def test_hand_arithmetic(self):
        """(6, 2, 2) gives P = R = F1 = 0.75 and IoU = 0.6."""
        scores = class_scores(ClassCounts(tp=6, fp=2, fn=2))
        assert scores.precision == pytest.approx(0.75)
        assert scores.recall == pytest.approx(0.75)
        assert scores.f1 == pytest.approx(0.75)
        assert scores.iou == pytest.approx(0.6)

    def test_absent_class_is_na(self):
        """A class absent from both masks has no scores."""
        assert class_scores(ClassCounts()) is None

    def test_hallucinated_class_scores_zero(self):
        """Predicted but absent from ground truth: present, all zero."""
        scores = class_scores(ClassCounts(tp=0, fp=3, fn=0))
        assert scores is not None
        assert scores.precision == 0.0 and scores.recall == 0.0 and scores.iou == 0.0

    def test_scores_in_unit_interval(self):
        """Every score lies in [0, 1] and IoU = F1 / (2 - F1) on random counts."""
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(1000):
            tp, fp, fn = (int(v) for v in rng.integers(0, 50, size=3))
            scores = class_scores(ClassCounts(tp, fp, fn))
            if scores is None:
                continue
            for value in (scores.iou, scores.f1, scores.precision, scores.recall):
                assert 0.0 <= value <= 1.0
            assert abs(scores.iou - scores.f1 / (2.0 - scores.f1)) <= 1e-12
            checked += 1
        assert checked > 900

    def test_class_metrics_covers_feature_classes(self):
        """class_metrics reports every feature class, never Background."""
        mask = make_mask(16, 16)
        result = class_metrics(confusion(mask, mask))
        assert set(result.scores) == set(FEATURE_CLASSES)


class TestAggregate:
    """Tests for median/mean tables."""

    def test_median_and_mean(self):
        """IoUs {0.90, 0.95, 0.70} give median 90.0 and mean 85.0."""
        per_image = [metrics_with(ClassId.STREETS, v) for v in (0.90, 0.95, 0.70)]
        table = aggregate(per_image)
        assert table.get(ClassId.STREETS, Statistic.MEDIAN, MetricName.IOU) == pytest.approx(90.0)
        assert table.get(ClassId.STREETS, Statistic.MEAN, MetricName.IOU) == pytest.approx(85.0)

    def test_na_images_excluded(self):
        """N/A images do not enter the median."""
        per_image = [metrics_with(ClassId.STREETS, v) for v in (0.9, None, 0.7)]
        table = aggregate(per_image, Statistic.MEDIAN)
        assert table.get(ClassId.STREETS, Statistic.MEDIAN, MetricName.IOU) == pytest.approx(80.0)
        assert table.statistics == (Statistic.MEDIAN,)

    def test_never_present_is_na(self):
        """A class absent from every image is N/A in the table."""
        table = aggregate([metrics_with(ClassId.STREETS, 0.5)])
        assert table.get(ClassId.BUILDINGS, Statistic.MEDIAN, MetricName.F1) is None

    def test_empty_list(self):
        """Aggregating nothing is an error."""
        with pytest.raises(MetricsError, match="empty"):
            aggregate([])

    def test_median_ignores_image_order(self):
        """Shuffling the images leaves the median table unchanged."""
        rng = np.random.default_rng(11)
        per_image = []
        for _ in range(25):
            scores = {}
            for c in FEATURE_CLASSES:
                tp, fp, fn = (int(v) for v in rng.integers(0, 30, size=3))
                # roughly a third of the images leave each class N/A
                scores[c] = class_scores(ClassCounts(tp, fp, fn)) if rng.random() < 0.7 else None
            per_image.append(ImageMetrics(scores))
        reference = aggregate(per_image, Statistic.MEDIAN)
        for _ in range(20):
            order = rng.permutation(len(per_image))
            shuffled = aggregate([per_image[i] for i in order], Statistic.MEDIAN)
            assert shuffled.values == reference.values


class TestDiffTable:
    """Tests for double-minus-single tables."""

    def test_documented_difference(self):
        """94.8 - 97.1 is -2.3."""
        diff = diff_table(table_with(94.8), table_with(97.1))
        value = diff.diff.get(ClassId.STREETS, Statistic.MEDIAN, MetricName.IOU)
        assert value == pytest.approx(-2.3)

    def test_second_documented_difference(self):
        """88.7 - 90.3 is -1.6."""
        diff = diff_table(table_with(88.7), table_with(90.3))
        assert diff.diff.get(ClassId.STREETS, Statistic.MEAN, MetricName.F1) == pytest.approx(-1.6)

    def test_equal_tables_give_zero(self):
        """Equal tables diff to zero in every present cell."""
        diff = diff_table(table_with(50.0), table_with(50.0))
        present = [v for v in diff.diff.values.values() if v is not None]
        assert present and all(v == 0.0 for v in present)

    def test_na_propagates(self):
        """N/A on either side gives N/A."""
        diff = diff_table(table_with(50.0), table_with(50.0))
        assert diff.diff.get(ClassId.BUILDINGS, Statistic.MEDIAN, MetricName.IOU) is None

    def test_shape_mismatch(self):
        """Tables with different statistics cannot be diffed."""
        single = aggregate([metrics_with(ClassId.STREETS, 0.5)], Statistic.MEDIAN)
        with pytest.raises(MetricsError, match="different classes or statistics"):
            diff_table(table_with(50.0), single)


class TestCompatibility:
    """Tests for the model/zoom compatibility matrix."""

    def test_matrix(self):
        """Each model is allowed its trained zooms and their neighbours."""
        assert COMPATIBLE_ZOOMS[ModelId.ZOOM_16] == {15, 16}
        assert COMPATIBLE_ZOOMS[ModelId.ZOOM_18] == {17, 18}
        assert COMPATIBLE_ZOOMS[ModelId.ZOOM_16_18] == {15, 16, 17, 18}

    @pytest.mark.parametrize(
        "model_id,zoom",
        [("Zoom-16", 17), ("Zoom-16", 18), ("Zoom-18", 15), ("Zoom-18", 16)],
    )
    def test_refused_pairings(self, model_id, zoom):
        """Incompatible pairings raise with an explanation."""
        with pytest.raises(ZoomCompatibilityError, match="incompatible zoom"):
            check_compatibility(model_id, zoom)

    def test_zoom_sets(self):
        """Training zoom sets map to model ids."""
        assert model_id_for_zoom_set([16]) is ModelId.ZOOM_16
        assert model_id_for_zoom_set((18, 16)) is ModelId.ZOOM_16_18
        with pytest.raises(MetricsError, match="Unsupported"):
            model_id_for_zoom_set([15])


class TestEvaluateRun:
    """Tests for whole-run evaluation."""

    def test_perfect_predictions(self, small_pairs):
        """Predictions equal to ground truth score 100 wherever present."""
        table = evaluate_run(ModelId.ZOOM_16, small_pairs, [p.tactile for p in small_pairs])
        present = [v for v in table.values.values() if v is not None]
        assert present and all(v == pytest.approx(100.0) for v in present)
        assert table.get(ClassId.BUILDINGS, Statistic.MEDIAN, MetricName.IOU) is None

    def test_zoom_refused(self):
        """A Zoom-16 model is not evaluated on zoom 17 pairs."""
        pairs = [make_pair(zoom=17)]
        with pytest.raises(ZoomCompatibilityError, match="incompatible zoom"):
            evaluate_run("Zoom-16", pairs, [pairs[0].tactile])

    def test_zoom_15_allowed_for_zoom_16(self):
        """Zoom 15 is in the Zoom-16 model's range."""
        pairs = [make_pair(zoom=15)]
        table = evaluate_run("Zoom-16", pairs, [pairs[0].tactile])
        assert table.get(ClassId.STREETS, Statistic.MEAN, MetricName.F1) == pytest.approx(100.0)

    def test_prediction_count_mismatch(self, small_pairs):
        """Predictions must align 1:1 with pairs."""
        with pytest.raises(MetricsError, match="predictions"):
            evaluate_run(ModelId.ZOOM_16, small_pairs, [small_pairs[0].tactile])

    def test_planted_errors_match_oracle(self, palette):
        """Per-image scores agree with a direct pixel-count oracle."""
        rng = np.random.default_rng(11)
        pairs, predictions, oracle_iou = [], [], []
        for index in range(3):
            gt = make_mask(32, 16)
            pred = gt.copy()
            flips = rng.choice(gt.size, size=40, replace=False)
            pred.flat[flips] = rng.integers(0, 7, size=40).astype(np.uint8)
            pairs.append(make_pair(gt, pair_id=f"planted-{index}"))
            predictions.append(render_mask(pred, palette))

            g, p = gt == S, pred == S
            oracle_iou.append((g & p).sum() / (g | p).sum())

        per_image = evaluate_images(ModelId.ZOOM_16, pairs, predictions, palette, max_workers=2)
        for metrics, expected in zip(per_image, oracle_iou):
            assert metrics[ClassId.STREETS].iou == pytest.approx(expected)

        table = aggregate(per_image)
        assert table.get(ClassId.STREETS, Statistic.MEDIAN, MetricName.IOU) == pytest.approx(
            float(np.median(oracle_iou)) * 100
        )


class TestClassPixelFractions:
    """Tests for the per-class pixel breakdown."""

    def test_fractions_sum_to_100(self):
        """Percentages over all seven classes sum to 100."""
        fractions = class_pixel_fractions([make_mask(32, 18), make_mask(32, 16)])
        assert sum(fractions.values()) == pytest.approx(100.0)
        assert set(fractions) == set(ClassId)

    def test_known_split(self):
        """A half-Streets mask is 50% Streets."""
        mask = np.full((2, 2), BG, dtype=np.uint8)
        mask[0] = S
        fractions = class_pixel_fractions([mask])
        assert fractions[ClassId.STREETS] == pytest.approx(50.0)
        assert fractions[ClassId.BACKGROUND] == pytest.approx(50.0)

    def test_empty(self):
        """No masks is an error."""
        with pytest.raises(MetricsError):
            class_pixel_fractions([])
