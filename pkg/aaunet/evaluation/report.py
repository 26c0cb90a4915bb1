# CSV writers and comparison tables.

import csv

from .metrics import METRIC_NAMES, DEGENERATE_CONVENTION, mean_std
from .stats import paired_t_test
from ..errors import DegenerateError

SIGNIFICANCE_LEVEL = 0.05

def format_mean_std(mean, std, digits=2):
    return "{:.{d}f} ± {:.{d}f}".format(mean, std, d=digits)

def write_metrics_csv(report, path):
    """
    One row per image followed by mean and std rows. Comment lines at the
    top record the threshold, the aggregation and the 0/0 convention.
    """
    aggregation = "pooled" if report.pooled_counts is not None else "per-image"
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("# threshold {}; aggregation {}\n".format(report.threshold, aggregation))
        f.write("# {}\n".format(DEGENERATE_CONVENTION))
        writer = csv.writer(f)
        writer.writerow(("id", "label") + METRIC_NAMES)
        for scores in report.per_image:
            writer.writerow([scores.id, scores.label] +
                    ["{:.4f}".format(getattr(scores, name)) for name in METRIC_NAMES])
        aggregate = report.aggregate
        writer.writerow(["mean", ""] + ["{:.4f}".format(aggregate[n][0]) for n in METRIC_NAMES])
        writer.writerow(["std", ""] + ["{:.4f}".format(aggregate[n][1]) for n in METRIC_NAMES])
        if report.auc is not None:
            writer.writerow(["auc", "", "{:.6f}".format(report.auc)])

def write_class_summary_csv(report, path):
    """
    Mean ± std per lesion class.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("label", "images") + METRIC_NAMES)
        for label, sub in report.per_class().items():
            writer.writerow([label, len(sub)] +
                    [format_mean_std(*sub.aggregate[n]) for n in METRIC_NAMES])

def write_curves_csv(curves, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("threshold", "fpr", "tpr", "precision", "recall"))
        for row in zip(curves.thresholds, curves.fpr, curves.tpr, curves.precision,
                curves.recall):
            writer.writerow(["{:.6f}".format(v) for v in row])

def comparison_table(fold_metrics, reference=None, parameter_counts=None):
    """
    Mean ± std of per-fold metrics for several methods.

    Parameters
    ----------
    fold_metrics : OrderedDict of method name -> {metric name -> list of fold values}

    reference : str
        Optional: method the others are tested against with a paired t-test;
        entries with p < 0.05 are marked with "*".

    parameter_counts : dict of method name -> int
        Optional: adds a "parameters" column.

    Returns
    -------
    header : list of str

    rows : list of list of str
    """
    header = ["method"] + list(METRIC_NAMES)
    if parameter_counts is not None:
        header.append("parameters")
    rows = []
    for method, metrics in fold_metrics.items():
        row = [method]
        for name in METRIC_NAMES:
            values = metrics[name]
            cell = format_mean_std(*mean_std(values))
            if reference is not None and method != reference:
                try:
                    result = paired_t_test(values, fold_metrics[reference][name])
                    if result.p < SIGNIFICANCE_LEVEL:
                        cell += "*"
                except DegenerateError:
                    pass
            row.append(cell)
        if parameter_counts is not None:
            row.append(str(parameter_counts[method]))
        rows.append(row)
    return header, rows

def format_table(header, rows):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)

def write_table_csv(header, rows, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
