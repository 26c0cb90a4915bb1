from .metrics import (METRIC_NAMES, ConfusionCounts, SegmentationScores, ImageScores,
        MetricsReport, confusion, segmentation_metrics, evaluate_predictions, mean_std)
from .curves import Curves, roc_pr_curves
from .stats import TTestResult, paired_t_test
from .evaluator import predict_samples, evaluate_model, mean_dice
