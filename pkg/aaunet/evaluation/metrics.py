# Pixel-level segmentation metrics.
#
# Scores are percentages. When a denominator is zero because both masks lack
# the class it counts, the score is 100 (agreement on absence), otherwise 0.

import logging
from collections import namedtuple, OrderedDict

import numpy as np

from .curves import roc_pr_curves
from ..errors import ShapeError, DegenerateError

logger = logging.getLogger(__name__)

METRIC_NAMES = ("jaccard", "precision", "recall", "specificity", "dice")

DEGENERATE_CONVENTION = ("scores are percentages; a 0/0 score is 100 when both "
        "masks lack the class it measures, otherwise 0")

class ConfusionCounts(namedtuple("ConfusionCounts", "tp fp tn fn")):
    """
    Pixel counts of a binary prediction against ground truth.
    """
    __slots__ = ()

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionCounts(*(a + b for a, b in zip(self, other)))

SegmentationScores = namedtuple("SegmentationScores", METRIC_NAMES)

ImageScores = namedtuple("ImageScores", ("id", "label") + METRIC_NAMES)

def _as_binary(mask, name):
    arr = np.asarray(mask)
    if arr.dtype == bool:
        return arr
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("{} must be binary (values 0 and 1)".format(name))
    return arr.astype(bool)

def _squeeze(arr):
    arr = np.asarray(arr)
    while arr.ndim > 2 and arr.shape[0] == 1:
        arr = arr[0]
    return arr

def confusion(pred_mask, gt_mask):
    """
    Count true/false positives and negatives.

    Parameters
    ----------
    pred_mask : array of 0/1 (or bool)

    gt_mask : array of 0/1 (or bool) with the same shape

    Returns
    -------
    ConfusionCounts
    """
    pred = _as_binary(pred_mask, "pred_mask")
    gt = _as_binary(gt_mask, "gt_mask")
    if pred.shape != gt.shape:
        raise ShapeError("confusion masks disagree", "shape", gt.shape, pred.shape)
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(pred.size - tp - fp - fn)
    return ConfusionCounts(tp, fp, tn, fn)

def _score(num, den, both_absent):
    if den == 0:
        return 100.0 if both_absent else 0.0
    return 100.0 * num / den

def segmentation_metrics(counts):
    """
    Jaccard, precision, recall, specificity and Dice, as percentages.

    Parameters
    ----------
    counts : ConfusionCounts

    Returns
    -------
    SegmentationScores
    """
    tp, fp, tn, fn = counts
    no_gt_fg = tp + fn == 0
    no_pred_fg = tp + fp == 0
    no_gt_bg = tn + fp == 0
    no_pred_bg = tn + fn == 0
    jaccard = _score(tp, tp + fp + fn, no_gt_fg and no_pred_fg)
    precision = _score(tp, tp + fp, no_gt_fg)
    recall = _score(tp, tp + fn, no_pred_fg)
    specificity = _score(tn, tn + fp, no_pred_bg)
    dice = _score(2 * tp, 2 * tp + fp + fn, no_gt_fg and no_pred_fg)
    return SegmentationScores(jaccard, precision, recall, specificity, dice)

def mean_std(values):
    """
    Mean and sample standard deviation (ddof 1; 0 for a single value).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DegenerateError("mean_std of an empty sequence")
    std = values.std(ddof=1) if values.size > 1 else 0.0
    return float(values.mean()), float(std)

class MetricsReport:
    """
    Per-image scores with their aggregate, and optionally the ROC and P-R
    curves of the pooled pixels.
    """
    def __init__(self, per_image, threshold=0.5, curves=None, pooled_counts=None,
            class_curves=None):
        """
        Parameters
        ----------
        per_image : list of ImageScores

        threshold : float
            Binarization threshold used for the scores

        curves : Curves
            Optional: threshold sweep over the pooled pixels.

        pooled_counts : ConfusionCounts
            Optional: when given, `aggregate` reports metrics of the summed
            counts instead of per-image means.

        class_curves : dict
            Optional: label -> Curves over the pixels of that label's images.
        """
        self.per_image = list(per_image)
        self.threshold = threshold
        self.curves = curves
        self.pooled_counts = pooled_counts
        self.class_curves = dict(class_curves or {})

    def __len__(self):
        return len(self.per_image)

    @property
    def auc(self):
        return None if self.curves is None else self.curves.auc

    @property
    def aggregate(self):
        """
        OrderedDict of metric name -> (mean, std) in percent.
        """
        if self.pooled_counts is not None:
            pooled = segmentation_metrics(self.pooled_counts)
            return OrderedDict((name, (getattr(pooled, name), 0.0)) for name in METRIC_NAMES)
        return OrderedDict((name, mean_std([getattr(s, name) for s in self.per_image]))
                for name in METRIC_NAMES)

    def mean(self, name):
        return self.aggregate[name][0]

    def per_class(self):
        """
        Reports restricted to each label present, in label order. Each carries
        the curves of its own images when they were computed.
        """
        by_label = OrderedDict()
        for scores in sorted(self.per_image, key=lambda s: s.label):
            by_label.setdefault(scores.label, []).append(scores)
        return OrderedDict((label, MetricsReport(scores, self.threshold,
                    self.class_curves.get(label)))
                for label, scores in by_label.items())

    def summary(self):
        parts = ["{} {:.2f} ± {:.2f}".format(name, m, s)
                for name, (m, s) in self.aggregate.items()]
        if self.auc is not None:
            parts.append("auc {:.4f}".format(self.auc))
        return ", ".join(parts)

def _class_curves(probs, gts, labels, n_thresholds):
    by_label = OrderedDict()
    for prob, gt, label in zip(probs, gts, labels):
        by_label.setdefault(label, ([], []))
        by_label[label][0].append(prob)
        by_label[label][1].append(gt)
    class_curves = OrderedDict()
    for label in sorted(by_label):
        try:
            class_curves[label] = roc_pr_curves(*by_label[label], n_thresholds)
        except DegenerateError as e:
            logger.warning("Skipping %s curves: %s", label, e)
    return class_curves

def evaluate_predictions(probs, gts, ids=None, labels=None, threshold=0.5,
        n_thresholds=101, pooled=False, with_curves=True):
    """
    Score probability maps against ground-truth masks.

    Parameters
    ----------
    probs : list of arrays with values in [0, 1]

    gts : list of binary arrays, same shapes as `probs`

    ids : list of str
        Optional: image identifiers. Defaults to the list index.

    labels : list of str
        Optional: lesion class per image, enabling `per_class`.

    threshold : float
        Pixels with probability >= threshold are foreground.

    n_thresholds : int
        Points of the curve sweep.

    pooled : bool
        Aggregate over summed counts rather than per-image means.

    with_curves : bool
        Compute ROC/P-R curves and AUC, pooled and per label. Skipped with a
        warning when the ground truth holds a single class.

    Returns
    -------
    MetricsReport
    """
    if len(probs) != len(gts):
        raise ValueError("Got {} predictions for {} masks".format(len(probs), len(gts)))
    if ids is None:
        ids = [str(i) for i in range(len(probs))]
    if labels is None:
        labels = ["unknown"] * len(probs)
    probs = [_squeeze(p) for p in probs]
    gts = [_squeeze(g) for g in gts]
    per_image = []
    total = ConfusionCounts(0, 0, 0, 0)
    for prob, gt, image_id, label in zip(probs, gts, ids, labels):
        counts = confusion(prob >= threshold, gt)
        total = total + counts
        per_image.append(ImageScores(image_id, label, *segmentation_metrics(counts)))
    curves = None
    class_curves = {}
    if with_curves and probs:
        try:
            curves = roc_pr_curves(probs, gts, n_thresholds)
        except DegenerateError as e:
            logger.warning("Skipping curves: %s", e)
        if len(set(labels)) > 1:
            class_curves = _class_curves(probs, gts, labels, n_thresholds)
    return MetricsReport(per_image, threshold, curves, total if pooled else None,
            class_curves)
