# Command-line entry point: aaunet <command> ...

import argparse
import json
import logging
import os
import sys
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import asdict, replace

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import __version__
from .model import ModelConfig, build_model
from .blocks import VARIANTS
from .checkpoint import load_checkpoint
from .data import (LABELS, load_manifest, load_dataset, read_image, read_mask, write_mask,
        write_probability_map, write_overlay, write_attention_maps)
from .evaluation import METRIC_NAMES, evaluate_predictions, predict_samples, evaluate_model
from .evaluation.stats import paired_t_test
from .evaluation.report import (write_metrics_csv, write_class_summary_csv, write_curves_csv,
        write_table_csv, comparison_table, format_table)
from .graphs import CurveGraph, TrainingCurveGraph
from .training import TrainConfig, train, cross_validate
from .training.trainer import EPOCH_LOG, FINAL_CHECKPOINT, BEST_CHECKPOINT
from .utils.cs_utils import ConfigFile, load_config_file
from .utils.data_generation import synth_dataset
from .utils.gradcheck import run_gradcheck_suite
from .utils.runtime import (set_deterministic, thread_limit, make_run_dir, RunRecord,
        attach_run_log, detach_run_log)
from .errors import AAUNetError, DegenerateError, ManifestError

logger = logging.getLogger("aaunet")

# Baseline first, full model last
ABLATION_ORDER = ("plain_conv", "channel_only", "spatial_only", "small_receptive_field",
        "full")

PRECEDENCE_HELP = ("Settings are resolved as: command-line flag > --config file > "
        "built-in default. Config files are flat JSON objects whose keys are ModelConfig "
        "or TrainConfig fields, optionally prefixed with 'model:' or 'train:'.")

def _resolve_configs(args):
    config = load_config_file(args.config) if args.config else ConfigFile({}, {})
    model_kwargs = dict(config.model)
    train_kwargs = dict(config.train)
    if getattr(args, "variant", None) is not None:
        model_kwargs["variant"] = args.variant
    if args.seed is not None:
        train_kwargs["seed"] = args.seed
    if getattr(args, "folds", None) is not None:
        train_kwargs["folds"] = args.folds
    return ModelConfig(**model_kwargs), TrainConfig(**train_kwargs)

def _snapshot(model_cfg=None, train_cfg=None):
    snapshot = OrderedDict()
    if model_cfg is not None:
        snapshot["model"] = model_cfg.to_dict()
    if train_cfg is not None:
        snapshot["train"] = asdict(train_cfg)
    return snapshot

@contextmanager
def _run(args, config, seed=None, run_dir=None):
    """
    Create the run directory, copy the log into it and write the RunRecord
    once the command finishes, whether or not it succeeded.
    """
    if run_dir is None:
        run_dir = make_run_dir(args.out)
    else:
        os.makedirs(run_dir, exist_ok=True)
    handler = attach_run_log(run_dir, logging.getLogger().level)
    record = RunRecord(command=args.command, argv=list(args.argv), config=config,
            seed=seed, version=__version__)
    if config:
        path = os.path.join(run_dir, "config.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(config, f, indent=2, sort_keys=True)
        record.add_output(path)
    logger.info("Run directory %s", run_dir)
    try:
        yield run_dir, record
    finally:
        record.write(run_dir)
        detach_run_log(handler)

def _save_figure(draw, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    draw(fig, ax)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software" : None})
    plt.close(fig)

def _write_curve_graphs(curves_by_label, out_dir, record, kinds=("roc", "pr"), suffix=""):
    """
    One figure per kind holding the curves of every label; labels without
    curves are left out.
    """
    curves_by_label = OrderedDict((label, curves) for label, curves in curves_by_label.items()
            if curves is not None)
    if not curves_by_label:
        logger.warning("No curves to plot in %s", out_dir)
        return
    for kind in kinds:
        graph = CurveGraph(kind)
        for label, curves in curves_by_label.items():
            graph.add_curves(curves, label)
        path = os.path.join(out_dir, "{}{}.png".format(kind, suffix))
        _save_figure(graph, path)
        record.add_output(path)

def _auc_summary(reports):
    return OrderedDict((label, report.auc) for label, report in reports.items())

def _load_samples(path, size, label=None):
    manifest = load_manifest(path)
    if label is not None:
        manifest = manifest.filter(label=label)
    return load_dataset(manifest, size)

def cmd_train(args):
    model_cfg, train_cfg = _resolve_configs(args)
    logger.info("Train config: learning_rate=%g, epochs=%d, batch_size=%d",
            train_cfg.learning_rate, train_cfg.epochs, train_cfg.batch_size)
    dataset = _load_samples(args.manifest, model_cfg.input_size)
    val_dataset = None
    if args.val_manifest:
        val_dataset = _load_samples(args.val_manifest, model_cfg.input_size)
    with _run(args, _snapshot(model_cfg, train_cfg), train_cfg.seed) as (run_dir, record):
        model = build_model(model_cfg, seed=train_cfg.seed)
        logger.info("%s model with %d parameters", model_cfg.variant, model.num_parameters())
        result = train(model, dataset, train_cfg, val_dataset=val_dataset, run_dir=run_dir,
                resume_from=args.resume, silent=args.no_progress)
        for name in (EPOCH_LOG, FINAL_CHECKPOINT, BEST_CHECKPOINT):
            path = os.path.join(run_dir, name)
            if os.path.exists(path):
                record.add_output(path)
        path = os.path.join(run_dir, "training_curve.png")
        _save_figure(lambda fig, ax: TrainingCurveGraph()(ax, result.history), path)
        record.add_output(path)
    return 0

def _write_ttests(reference, other, path):
    header = ["metric", "t", "df", "p"]
    rows = []
    for name in METRIC_NAMES:
        try:
            result = paired_t_test(other[name], reference[name])
            rows.append([name, "{:.6f}".format(result.t), result.df, "{:.6g}".format(result.p)])
        except DegenerateError as e:
            logger.warning("No t-test for %s: %s", name, e)
            rows.append([name, "", "", ""])
    write_table_csv(header, rows, path)

def cmd_crossval(args):
    model_cfg, train_cfg = _resolve_configs(args)
    dataset = _load_samples(args.manifest, model_cfg.input_size)
    with _run(args, _snapshot(model_cfg, train_cfg), train_cfg.seed) as (run_dir, record):
        result = cross_validate(dataset, model_cfg, train_cfg, run_dir=run_dir,
                label=args.label, jobs=args.jobs, silent=args.no_progress)
        summary = OrderedDict([("variant", model_cfg.variant),
            ("split_checksum", result.split_checksum),
            ("aggregate", OrderedDict((n, list(v)) for n, v in result.aggregate.items()))])
        pooled_reports = OrderedDict([(model_cfg.variant, result.pooled_report)])
        if args.compare_variant:
            other_cfg = replace(model_cfg, variant=args.compare_variant)
            other = cross_validate(dataset, other_cfg, train_cfg,
                    run_dir=os.path.join(run_dir, args.compare_variant), label=args.label,
                    jobs=args.jobs, silent=args.no_progress)
            path = os.path.join(run_dir, "ttest.csv")
            _write_ttests(result.fold_metrics, other.fold_metrics, path)
            record.add_output(path)
            fold_metrics = OrderedDict([(model_cfg.variant, result.fold_metrics),
                (args.compare_variant, other.fold_metrics)])
            header, rows = comparison_table(fold_metrics, reference=model_cfg.variant)
            path = os.path.join(run_dir, "comparison.csv")
            write_table_csv(header, rows, path)
            record.add_output(path)
            print(format_table(header, rows))
            summary["compare_variant"] = args.compare_variant
            summary["compare_aggregate"] = OrderedDict((n, list(v))
                    for n, v in other.aggregate.items())
            pooled_reports[args.compare_variant] = other.pooled_report
        _write_curve_graphs(OrderedDict((v, r.curves) for v, r in pooled_reports.items()),
                run_dir, record)
        summary["auc"] = _auc_summary(pooled_reports)
        if result.pooled_report.class_curves:
            _write_curve_graphs(result.pooled_report.class_curves, run_dir, record,
                    kinds=("roc",), suffix="_by_class")
        path = os.path.join(run_dir, "summary.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2)
        record.add_output(path)
        record.add_output(os.path.join(run_dir, "folds.csv"))
        for n, (m, s) in result.aggregate.items():
            logger.info("%s: %.2f ± %.2f", n, m, s)
    return 0

def cmd_ablate(args):
    model_cfg, train_cfg = _resolve_configs(args)
    dataset = _load_samples(args.manifest, model_cfg.input_size)
    with _run(args, _snapshot(model_cfg, train_cfg), train_cfg.seed) as (run_dir, record):
        fold_metrics = OrderedDict()
        parameter_counts = {}
        checksums = OrderedDict()
        pooled_reports = OrderedDict()
        for variant in ABLATION_ORDER:
            cfg = replace(model_cfg, variant=variant)
            parameter_counts[variant] = build_model(cfg, seed=train_cfg.seed).num_parameters()
            logger.info("Ablation: %s (%d parameters)", variant, parameter_counts[variant])
            result = cross_validate(dataset, cfg, train_cfg, run_dir=os.path.join(run_dir,
                variant), jobs=args.jobs, silent=args.no_progress)
            fold_metrics[variant] = result.fold_metrics
            checksums[variant] = result.split_checksum
            pooled_reports[variant] = result.pooled_report
        if len(set(checksums.values())) != 1:
            raise AAUNetError("Variants were trained on different fold splits")
        header, rows = comparison_table(fold_metrics, reference="full",
                parameter_counts=parameter_counts)
        path = os.path.join(run_dir, "ablation.csv")
        write_table_csv(header, rows, path)
        record.add_output(path)
        _write_curve_graphs(OrderedDict((v, r.curves) for v, r in pooled_reports.items()),
                run_dir, record)
        path = os.path.join(run_dir, "summary.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(OrderedDict([("split_checksums", checksums),
                ("parameters", OrderedDict((v, parameter_counts[v]) for v in ABLATION_ORDER)),
                ("auc", _auc_summary(pooled_reports))]),
                f, indent=2)
        record.add_output(path)
        print(format_table(header, rows))
    return 0

def cmd_predict(args):
    model = load_checkpoint(args.checkpoint)
    if args.attention and model.cfg.variant == "plain_conv":
        logger.warning("plain_conv models compute no attention maps; skipping export")
        args.attention = False
    samples = _load_samples(args.manifest, model.cfg.input_size)
    with _run(args, _snapshot(model.cfg), None) as (run_dir, record):
        probs = predict_samples(model, samples)
        dirs = {"masks" : True, "probabilities" : args.probabilities,
                "overlays" : args.overlays, "attention" : args.attention}
        for name, enabled in dirs.items():
            if enabled:
                os.makedirs(os.path.join(run_dir, name), exist_ok=True)
                record.add_output(os.path.join(run_dir, name))
        for sample, prob in zip(samples, probs):
            write_mask(prob, os.path.join(run_dir, "masks", sample.id + ".png"), args.threshold)
            if args.probabilities:
                write_probability_map(prob, os.path.join(run_dir, "probabilities",
                    sample.id + ".png"))
            if args.overlays:
                write_overlay(sample.image, prob, sample.mask, os.path.join(run_dir,
                    "overlays", sample.id + ".png"), args.threshold)
            if args.attention:
                dump = model.attention_dump(sample.image)
                write_attention_maps(dump, os.path.join(run_dir, "attention"), sample.id)
        logger.info("Wrote predictions for %d images", len(samples))
    return 0

def _read_predictions(manifest, pred_dir):
    probs, gts = [], []
    for record in manifest:
        if record.mask_path is None:
            raise ManifestError("record {} has no mask to evaluate against".format(record.id),
                    manifest.path)
        gt = read_mask(record.mask_path)
        path = os.path.join(pred_dir, record.id + ".png")
        if not os.path.isfile(path):
            raise FileNotFoundError("No prediction for {}: {}".format(record.id, path))
        probs.append(read_image(path, gt.shape))
        gts.append(gt)
    return probs, gts

def cmd_evaluate(args):
    if (args.pred_dir is None) == (args.checkpoint is None):
        args.parser.error("evaluate needs exactly one of --pred-dir and --checkpoint")
    manifest = load_manifest(args.manifest)
    with _run(args, None, None) as (run_dir, record):
        if args.pred_dir is not None:
            probs, gts = _read_predictions(manifest, args.pred_dir)
            report = evaluate_predictions(probs, gts, ids=[r.id for r in manifest],
                    labels=manifest.labels, threshold=args.threshold,
                    n_thresholds=args.n_thresholds, pooled=args.pooled)
            label = os.path.basename(os.path.normpath(args.pred_dir))
        else:
            model = load_checkpoint(args.checkpoint)
            samples = load_dataset(manifest, model.cfg.input_size)
            report = evaluate_model(model, samples, threshold=args.threshold,
                    n_thresholds=args.n_thresholds, pooled=args.pooled)
            label = model.cfg.variant
        path = os.path.join(run_dir, "metrics.csv")
        write_metrics_csv(report, path)
        record.add_output(path)
        path = os.path.join(run_dir, "classes.csv")
        write_class_summary_csv(report, path)
        record.add_output(path)
        if report.curves is not None:
            path = os.path.join(run_dir, "curves.csv")
            write_curves_csv(report.curves, path)
            record.add_output(path)
            _write_curve_graphs({label : report.curves}, run_dir, record)
        if report.class_curves:
            _write_curve_graphs(report.class_curves, run_dir, record, kinds=("roc",),
                    suffix="_by_class")
        print(report.summary())
    return 0

def cmd_synth(args):
    config = OrderedDict([("n", args.n), ("size", list(args.size)), ("seed", args.seed or 0),
        ("difficulty", args.difficulty)])
    with _run(args, None, args.seed or 0, run_dir=args.out) as (run_dir, record):
        record.config = config
        manifest = synth_dataset(args.out, args.n, size=tuple(args.size), seed=args.seed or 0,
                difficulty=args.difficulty, min_lesions=args.min_lesions,
                max_lesions=args.max_lesions)
        record.add_output(manifest.path)
    return 0

def cmd_gradcheck(args):
    results = run_gradcheck_suite(seed=args.seed or 0)
    rows = [[r.name, "{:.2e}".format(r.max_error), r.checked, r.skipped,
        "ok" if r.passed else "FAILED"] for r in results]
    print(format_table(["check", "max rel error", "entries", "skipped", "status"], rows))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("Gradient check failed for: %s", ", ".join(failed))
        return 1
    return 0

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value

def _unit_float(text):
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return value

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO",
            choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--deterministic", action="store_true",
            help="single-threaded, sequential and byte-reproducible outputs")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--no-progress", action="store_true", help="hide progress bars")

    parser = argparse.ArgumentParser(prog="aaunet", epilog=PRECEDENCE_HELP,
            description="Breast lesion segmentation with hybrid adaptive attention U-nets.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("train", parents=[common], epilog=PRECEDENCE_HELP,
            help="train one model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="root of the run directories")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--val-manifest")
    p.add_argument("--resume", help="checkpoint with trainer state to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", parents=[common], epilog=PRECEDENCE_HELP,
            help="k-fold cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=_positive_int)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--compare-variant", choices=VARIANTS,
            help="also cross-validate this variant and t-test the fold metrics")
    p.add_argument("--label", choices=LABELS, help="restrict to one lesion class")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("ablate", parents=[common], epilog=PRECEDENCE_HELP,
            help="cross-validate every block variant on identical folds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=_positive_int)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict", parents=[common], help="segment the images of a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=_unit_float, default=0.5)
    p.add_argument("--probabilities", action="store_true")
    p.add_argument("--overlays", action="store_true")
    p.add_argument("--attention", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common],
            help="score predictions (or a checkpoint) against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pred-dir", help="directory of <id>.png probability maps or masks")
    p.add_argument("--checkpoint", help="predict with this model instead")
    p.add_argument("--threshold", type=_unit_float, default=0.5)
    p.add_argument("--n-thresholds", type=_positive_int, default=101)
    p.add_argument("--pooled", action="store_true",
            help="aggregate summed pixel counts instead of per-image means")
    p.set_defaults(func=cmd_evaluate, parser=p)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--size", type=_positive_int, nargs=2, default=[64, 64],
            metavar=("H", "W"))
    p.add_argument("--difficulty", type=_unit_float, default=0.3)
    p.add_argument("--min-lesions", type=int, default=0)
    p.add_argument("--max-lesions", type=int, default=2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", parents=[common],
            help="finite-difference check of every gradient")
    p.set_defaults(func=cmd_gradcheck)
    return parser

def main(argv=None):
    """
    Returns the exit code: 0 on success, 1 on a runtime failure. Usage
    errors exit with 2.
    """
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["aaunet"] + list(argv)
    level = getattr(logging, args.log_level)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    set_deterministic(args.deterministic)
    try:
        with thread_limit():
            return args.func(args)
    except (AAUNetError, ValueError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print("aaunet: error: {}".format(e), file=sys.stderr)
        return 1
    finally:
        set_deterministic(False)

if __name__ == "__main__":
    sys.exit(main())
