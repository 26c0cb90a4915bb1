from collections import namedtuple

import numpy as np

from ..errors import DegenerateError

Curves = namedtuple("Curves", "thresholds fpr tpr precision recall auc")
"""
Threshold sweep over pooled pixels.

.. py:attribute:: thresholds
    Increasing thresholds; the last is +inf (nothing predicted positive)

.. py:attribute:: fpr, tpr
    ROC points, non-increasing along `thresholds`

.. py:attribute:: precision, recall
    P-R points; precision is 1 where nothing is predicted positive

.. py:attribute:: auc
    Area under the ROC curve (trapezoidal rule)
"""

def roc_pr_curves(pred_probs, gts, n_thresholds=101):
    """
    ROC and precision-recall curves with AUC.

    Pixels of all images are pooled; a pixel is positive at threshold t
    when its probability is >= t.

    Parameters
    ----------
    pred_probs : list of arrays with values in [0, 1]

    gts : list of binary arrays with matching shapes

    n_thresholds : int
        Number of evenly spaced thresholds in [0, 1]; an extra +inf
        threshold closes the ROC curve at (0, 0).

    Returns
    -------
    Curves
    """
    if len(pred_probs) == 0:
        raise DegenerateError("roc_pr_curves needs at least one image")
    if len(pred_probs) != len(gts):
        raise ValueError("Got {} predictions for {} masks".format(len(pred_probs), len(gts)))
    if n_thresholds < 2:
        raise ValueError("n_thresholds must be at least 2")
    p = np.concatenate([np.asarray(x, dtype=np.float64).ravel() for x in pred_probs])
    g = np.concatenate([np.asarray(x).ravel() for x in gts]).astype(bool)
    if p.shape != g.shape:
        raise ValueError("Predictions and masks hold different pixel counts")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("Probabilities must lie in [0, 1]")
    n_pos = int(g.sum())
    n_neg = g.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("AUC undefined: ground truth holds a single class")

    thresholds = np.append(np.linspace(0.0, 1.0, n_thresholds), np.inf)
    pos_sorted = np.sort(p[g])
    neg_sorted = np.sort(p[~g])
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    tpr = tp / n_pos
    fpr = fp / n_neg
    predicted = tp + fp
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)
    # fpr decreases along the sweep
    auc = float(np.sum((fpr[:-1] - fpr[1:]) * (tpr[:-1] + tpr[1:]) / 2))
    return Curves(thresholds, fpr, tpr, precision, tpr.copy(), auc)
