import numpy as np

from .. import ops
from ..tensor import GraphNode, Tensor
from ..errors import ShapeError, ConfigError

REDUCTIONS = ("sum", "mean")

def bce_loss(pred, target, reduction="mean", clamp_eps=1e-7):
    """
    Binary cross entropy between predicted probabilities and a target mask.

    The literal loss is a sum over pixels; ``reduction="mean"`` divides it by
    the pixel count so the learning rate does not depend on image size.
    Predictions are clamped to [clamp_eps, 1 - clamp_eps] before the logs.

    Parameters
    ----------
    pred : GraphNode of shape (n, 1, h, w)
        Probabilities in (0, 1)

    target : Tensor or array of the same shape
        Values in [0, 1]

    reduction : str
        "mean" (default) or "sum"

    clamp_eps : float
        In (0, 0.5)

    Returns
    -------
    GraphNode of shape (1, 1, 1, 1)
    """
    if reduction not in REDUCTIONS:
        raise ConfigError("reduction must be one of {}".format(REDUCTIONS))
    if not 0 < clamp_eps < 0.5:
        raise ConfigError("clamp_eps must lie in (0, 0.5)")
    if isinstance(target, (Tensor, GraphNode)):
        target = target.data
    target = np.asarray(target)
    pred = ops.as_node(pred)
    if target.shape != pred.shape:
        raise ShapeError("bce_loss target does not match prediction", "shape",
                pred.shape, target.shape)
    if np.any(target < 0) or np.any(target > 1):
        raise ValueError("bce_loss targets must lie in [0, 1]")
    return ops.binary_cross_entropy(pred, target, reduction=reduction, clamp_eps=clamp_eps)
