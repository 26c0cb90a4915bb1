from .losses import bce_loss
from .optim import Adam, adam_step
from .trainer import TrainConfig, EpochRecord, TrainResult, train
from .crossval import FoldSplit, CrossValidationResult, make_folds, split_checksum, cross_validate
