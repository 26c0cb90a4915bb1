# k-fold cross-validation of AAU-net variants.

import hashlib
import logging
import os
from collections import namedtuple, OrderedDict

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold, StratifiedKFold

from .trainer import train
from ..model import build_model
from ..evaluation.metrics import METRIC_NAMES, mean_std, evaluate_predictions
from ..evaluation.evaluator import predict_samples
from ..evaluation.report import (write_metrics_csv, write_curves_csv, write_class_summary_csv,
        write_table_csv, format_mean_std)
from ..utils.runtime import is_deterministic
from ..errors import ConfigError, DegenerateError

logger = logging.getLogger(__name__)

FoldSplit = namedtuple("FoldSplit", "fold_id train_indices val_indices")
"""
.. py:attribute:: fold_id
    0-based fold number

.. py:attribute:: train_indices, val_indices
    Sorted, disjoint tuples of dataset indices
"""

CrossValidationResult = namedtuple("CrossValidationResult",
        "splits reports fold_metrics aggregate split_checksum histories pooled_report")
"""
.. py:attribute:: splits
    list of FoldSplit

.. py:attribute:: reports
    Validation MetricsReport of every fold

.. py:attribute:: fold_metrics
    OrderedDict of metric name -> list of per-fold means (percent)

.. py:attribute:: aggregate
    OrderedDict of metric name -> (mean, std) over folds

.. py:attribute:: split_checksum
    SHA-256 of the fold assignment

.. py:attribute:: histories
    Per-fold lists of EpochRecord

.. py:attribute:: pooled_report
    MetricsReport of the out-of-fold predictions of all folds together, with
    the pooled and per-class curves
"""

def make_folds(n, folds, seed, labels=None):
    """
    Partition range(n) into `folds` validation sets.

    The split is a pure function of (n, folds, seed, labels). Folds are
    stratified by class when `labels` is given.

    Returns
    -------
    list of FoldSplit
    """
    if folds < 2:
        raise ConfigError("folds must be at least 2")
    if n < folds:
        raise DegenerateError("Cannot split {} samples into {} folds".format(n, folds))
    if labels is not None:
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        try:
            pairs = list(splitter.split(np.zeros(n), labels))
        except ValueError as e:
            raise DegenerateError("Cannot stratify: {}".format(e))
    else:
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
        pairs = list(splitter.split(np.arange(n)))
    return [FoldSplit(k, tuple(sorted(int(i) for i in tr)), tuple(sorted(int(i) for i in va)))
            for k, (tr, va) in enumerate(pairs)]

def split_checksum(splits):
    h = hashlib.sha256()
    for split in splits:
        h.update(repr((split.fold_id, split.val_indices)).encode())
    return h.hexdigest()

def _run_fold(split, dataset, model_cfg, train_cfg, run_dir, silent):
    train_samples = [dataset[i] for i in split.train_indices]
    val_samples = [dataset[i] for i in split.val_indices]
    fold_dir = None
    if run_dir is not None:
        fold_dir = os.path.join(run_dir, "fold_{}".format(split.fold_id))
        os.makedirs(fold_dir, exist_ok=True)
    model = build_model(model_cfg, seed=train_cfg.seed)
    result = train(model, train_samples, train_cfg, val_dataset=val_samples,
            run_dir=fold_dir, silent=silent)
    probs = predict_samples(model, val_samples)
    report = evaluate_predictions(probs, [s.mask.data[0, 0] for s in val_samples],
            ids=[s.id for s in val_samples], labels=[s.label for s in val_samples])
    if fold_dir is not None:
        write_metrics_csv(report, os.path.join(fold_dir, "metrics.csv"))
        write_class_summary_csv(report, os.path.join(fold_dir, "classes.csv"))
        if report.curves is not None:
            write_curves_csv(report.curves, os.path.join(fold_dir, "curves.csv"))
    logger.info("Fold %d: %s", split.fold_id, report.summary())
    return report, result.history, probs

def cross_validate(dataset, model_cfg, train_cfg, run_dir=None, label=None, jobs=1,
        silent=True):
    """
    Train one model per fold and score it on the held-out fold.

    Parameters
    ----------
    dataset : list of Sample

    model_cfg : ModelConfig

    train_cfg : TrainConfig
        `folds`, `seed` and `stratify` define the split.

    run_dir : str
        Optional: receives fold_<k>/ directories and folds.csv.

    label : str
        Optional: restrict the dataset to one lesion class first.

    jobs : int
        Folds trained in parallel (forced to 1 in deterministic mode).

    silent : bool
        Hide progress bars.

    Returns
    -------
    CrossValidationResult
    """
    if label is not None:
        dataset = [s for s in dataset if s.label == label]
        logger.info("Cross-validating %d '%s' samples", len(dataset), label)
    labels = [s.label for s in dataset] if train_cfg.stratify else None
    splits = make_folds(len(dataset), train_cfg.folds, train_cfg.seed, labels)
    checksum = split_checksum(splits)
    logger.info("%d folds over %d samples, split checksum %s", len(splits), len(dataset),
            checksum[:12])
    if jobs > 1 and not is_deterministic():
        outputs = Parallel(n_jobs=jobs)(delayed(_run_fold)(split, dataset, model_cfg,
            train_cfg, run_dir, True) for split in splits)
    else:
        outputs = [_run_fold(split, dataset, model_cfg, train_cfg, run_dir, silent)
                for split in splits]
    reports = [report for report, _, _ in outputs]
    histories = [history for _, history, _ in outputs]
    val_samples = [dataset[i] for split in splits for i in split.val_indices]
    pooled_report = evaluate_predictions([p for _, _, probs in outputs for p in probs],
            [s.mask.data[0, 0] for s in val_samples], ids=[s.id for s in val_samples],
            labels=[s.label for s in val_samples])
    fold_metrics = OrderedDict((name, [r.mean(name) for r in reports]) for name in METRIC_NAMES)
    aggregate = OrderedDict((name, mean_std(values)) for name, values in fold_metrics.items())
    if run_dir is not None:
        header = ["fold"] + list(METRIC_NAMES) + ["auc"]
        rows = []
        for split, report in zip(splits, reports):
            rows.append([split.fold_id] + ["{:.4f}".format(report.mean(n)) for n in METRIC_NAMES]
                    + ["" if report.auc is None else "{:.6f}".format(report.auc)])
        rows.append(["mean ± std"] + [format_mean_std(*aggregate[n]) for n in METRIC_NAMES]
                + [""])
        write_table_csv(header, rows, os.path.join(run_dir, "folds.csv"))
    return CrossValidationResult(splits, reports, fold_metrics, aggregate, checksum, histories,
            pooled_report)
