# Training loop for AAU-net models.

import csv
import logging
import math
import os
import sys
import time
from collections import namedtuple
from dataclasses import dataclass, replace

import numpy as np
from tqdm import tqdm

from ConfigSpace import ConfigurationSpace
from ConfigSpace.hyperparameters import (UniformFloatHyperparameter,
        UniformIntegerHyperparameter, CategoricalHyperparameter)

from .losses import bce_loss, REDUCTIONS
from .optim import Adam
from ..tensor import backward
from ..checkpoint import (TrainerState, save_checkpoint, read_checkpoint,
        restore_parameters, restore_moments)
from ..evaluation.evaluator import mean_dice
from ..utils.runtime import thread_limit, is_deterministic
from ..errors import (ConfigError, ShapeError, NonFiniteError, CheckpointError,
        ConfigMismatchError)

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer, schedule and fold settings.

    Parameters
    ----------
    learning_rate : float
        Constant Adam step size. Default 0.001.

    epochs : int
        Default 50.

    batch_size : int
        Default 12.

    adam_beta1, adam_beta2, adam_eps : float
        Adam hyperparameters, default 0.9, 0.999 and 1e-8.

    folds : int
        Cross-validation folds. Default 4.

    seed : int
        Seeds shuffling and fold assignment.

    loss_reduction : str
        "mean" (per pixel, default) or "sum".

    clamp_eps : float
        Predictions are clamped to [clamp_eps, 1 - clamp_eps] inside the loss.

    stratify : bool
        Stratify folds by lesion class.
    """
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 12
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    folds: int = 4
    seed: int = 0
    loss_reduction: str = "mean"
    clamp_eps: float = 1e-7
    stratify: bool = False

    def __post_init__(self):
        for name in ("epochs", "batch_size", "folds", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "clamp_eps"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError("clamp_eps must lie in (0, 0.5)")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("Adam betas must lie in [0, 1) and eps must be positive")
        if self.loss_reduction not in REDUCTIONS:
            raise ConfigError("loss_reduction must be one of {}".format(REDUCTIONS))

    def replace(self, **changes):
        return replace(self, **changes)

    @staticmethod
    def get_configuration_space():
        cs = ConfigurationSpace()
        cs.add(UniformFloatHyperparameter(name="learning_rate",
            lower=1e-6, upper=1.0, default_value=0.001, log=True))
        cs.add(UniformIntegerHyperparameter(name="epochs",
            lower=1, upper=10000, default_value=50))
        cs.add(UniformIntegerHyperparameter(name="batch_size",
            lower=1, upper=1024, default_value=12))
        cs.add(UniformFloatHyperparameter(name="adam_beta1",
            lower=0.0, upper=0.9999, default_value=0.9))
        cs.add(UniformFloatHyperparameter(name="adam_beta2",
            lower=0.0, upper=0.99999, default_value=0.999))
        cs.add(UniformFloatHyperparameter(name="adam_eps",
            lower=1e-12, upper=1e-2, default_value=1e-8, log=True))
        cs.add(UniformIntegerHyperparameter(name="folds",
            lower=2, upper=20, default_value=4))
        cs.add(UniformIntegerHyperparameter(name="seed",
            lower=0, upper=2 ** 31 - 1, default_value=0))
        cs.add(CategoricalHyperparameter(name="loss_reduction",
            choices=list(REDUCTIONS), default_value="mean"))
        cs.add(UniformFloatHyperparameter(name="clamp_eps",
            lower=1e-12, upper=0.49, default_value=1e-7, log=True))
        return cs

EpochRecord = namedtuple("EpochRecord", "epoch train_loss val_dice wall_time")
"""
.. py:attribute:: epoch
    1-based epoch number

.. py:attribute:: train_loss
    Mean of the step losses

.. py:attribute:: val_dice
    Mean validation Dice in percent, or None without a validation set

.. py:attribute:: wall_time
    Seconds spent in the epoch (0 in deterministic mode)
"""

TrainResult = namedtuple("TrainResult", "model history best_val_dice best_epoch steps")

EPOCH_LOG = "epochs.csv"
FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"

def _stack(samples, model):
    if len(samples) == 0:
        raise ConfigError("Training dataset is empty")
    shape = samples[0].image.shape
    factor = 2 ** model.cfg.depth
    for s in samples:
        if s.mask is None:
            raise ConfigError("Sample {} has no mask".format(s.id))
        if s.image.shape != shape:
            raise ShapeError("Training images must share one size (sample {})".format(s.id),
                    "shape", shape, s.image.shape)
        if s.mask.shape != s.image.shape:
            raise ShapeError("Sample {} image and mask disagree".format(s.id),
                    "shape", s.image.shape, s.mask.shape)
    if shape[2] % factor or shape[3] % factor:
        raise ShapeError("Image size must be divisible by {}".format(factor), "shape",
                "multiple of {}".format(factor), shape[2:])
    images = np.concatenate([s.image.data for s in samples], axis=0)
    masks = np.concatenate([s.mask.data for s in samples], axis=0)
    return images, masks

def _append_epoch_log(path, record):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new:
            writer.writerow(EpochRecord._fields)
        writer.writerow([record.epoch, "{:.8f}".format(record.train_loss),
            "" if record.val_dice is None else "{:.6f}".format(record.val_dice),
            "{:.3f}".format(record.wall_time)])

def train(model, dataset, cfg, val_dataset=None, callbacks=(), run_dir=None,
        resume_from=None, silent=False):
    """
    Train `model` with Adam on binary cross entropy.

    Each epoch visits the samples in a permutation drawn from
    (cfg.seed, epoch), in ceil(N / batch_size) steps.

    Parameters
    ----------
    model : AAUNet

    dataset : list of Sample
        Images of one size, divisible by 2^depth, with masks.

    cfg : TrainConfig

    val_dataset : list of Sample
        Optional: scored with Dice after every epoch.

    callbacks : list of callables (EpochRecord, model) -> None
        Called after every epoch.

    run_dir : str
        Optional: directory receiving epochs.csv, final.ckpt and best.ckpt.

    resume_from : str
        Optional: checkpoint holding trainer state to continue from.

    silent : bool
        Hide the progress bar.

    Returns
    -------
    TrainResult
    """
    images, masks = _stack(dataset, model)
    n = images.shape[0]
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    optimizer = Adam(model.parameters(), cfg.learning_rate, cfg.adam_beta1,
            cfg.adam_beta2, cfg.adam_eps)
    start_epoch, best_val, best_epoch = 0, None, None
    if resume_from is not None:
        ckpt = read_checkpoint(resume_from)
        if ckpt.trainer_state is None:
            raise CheckpointError("{}: no trainer state to resume from".format(resume_from))
        if ckpt.config != model.cfg:
            raise ConfigMismatchError("{}: checkpoint config differs from model".format(
                resume_from))
        restore_parameters(model, ckpt.parameters, resume_from)
        restore_moments(model, ckpt.trainer_state)
        optimizer.t = ckpt.trainer_state.step
        start_epoch = ckpt.trainer_state.epoch
        best_val = ckpt.trainer_state.best_val_dice
        logger.info("Resuming from %s at epoch %d", resume_from, start_epoch)

    logger.info("Training %s model on %d samples: lr %g, epochs %d, batch %d, "
            "loss reduction %s, clamp eps %g, seed %d, deterministic %s",
            model.cfg.variant, n, cfg.learning_rate, cfg.epochs, cfg.batch_size,
            cfg.loss_reduction, cfg.clamp_eps, cfg.seed, is_deterministic())
    history = []
    with thread_limit():
        epochs = range(start_epoch, cfg.epochs)
        for epoch in tqdm(epochs, file=sys.stdout, disable=silent, desc="Training"):
            started = time.perf_counter()
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
            total = 0.0
            for step in range(steps_per_epoch):
                idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
                optimizer.zero_grad()
                pred = model.forward(images[idx])
                loss = bce_loss(pred, masks[idx], cfg.loss_reduction, cfg.clamp_eps)
                value = float(loss.data.reshape(()))
                if not np.isfinite(value):
                    raise NonFiniteError("Non-finite loss",
                            where="epoch {} step {}".format(epoch + 1, step + 1))
                backward(loss)
                optimizer.step()
                total += value
            val_dice = mean_dice(model, val_dataset) if val_dataset else None
            wall_time = 0.0 if is_deterministic() else time.perf_counter() - started
            record = EpochRecord(epoch + 1, total / steps_per_epoch, val_dice, wall_time)
            history.append(record)
            logger.debug("Epoch %d: loss %.6f, val dice %s", record.epoch, record.train_loss,
                    "n/a" if val_dice is None else "{:.2f}".format(val_dice))
            improved = val_dice is not None and (best_val is None or val_dice > best_val)
            if improved:
                best_val, best_epoch = val_dice, epoch + 1
            if run_dir is not None:
                _append_epoch_log(os.path.join(run_dir, EPOCH_LOG), record)
                state = TrainerState(epoch=epoch + 1, step=optimizer.t, seed=cfg.seed,
                        best_val_dice=best_val)
                save_checkpoint(model, os.path.join(run_dir, FINAL_CHECKPOINT), state)
                if improved:
                    save_checkpoint(model, os.path.join(run_dir, BEST_CHECKPOINT), state)
            for callback in callbacks:
                callback(record, model)
    if history:
        logger.info("Finished after %d steps: final loss %.6f", optimizer.t,
                history[-1].train_loss)
    return TrainResult(model, history, best_val, best_epoch, optimizer.t)
