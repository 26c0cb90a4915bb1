# Finite-difference gradient checks.
#
# Every check reduces the function output to a scalar with fixed random
# weights, back-propagates once and compares sampled gradient entries with
# central differences computed in float64.

import logging
from collections import namedtuple

import numpy as np

from .. import ops
from ..tensor import GraphNode, Tensor, Parameter, backward, no_grad, precision
from ..blocks import HaamConfig, build_variant, VARIANTS
from ..model import ModelConfig, build_model

logger = logging.getLogger(__name__)

GradcheckResult = namedtuple("GradcheckResult", "name max_error checked skipped passed")
"""
.. py:attribute:: name

.. py:attribute:: max_error
    Largest relative error over the checked entries

.. py:attribute:: checked
    Number of compared entries

.. py:attribute:: skipped
    Candidate entries at which the function is locally non-smooth (a ReLU or
    max pooling switch falls inside the finite-difference step); each was
    replaced by another candidate

.. py:attribute:: passed
"""

def relative_error(analytic, numeric, floor=1e-3):
    """
    |a - n| / max(|a|, |n|, floor). Gradients smaller than `floor` are
    thereby compared in absolute terms.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)

def _as_leaf(x):
    if isinstance(x, Parameter):
        return x.node
    if isinstance(x, GraphNode):
        return x
    return GraphNode(Tensor(x, dtype=np.float64), requires_grad=True)

def check_gradients(fn, leaves, name="function", rtol=1e-6, eps=1e-5, floor=1e-3,
        max_entries=64, n_entries=None, seed=0, max_unchecked=0.1):
    """
    Compare analytic and finite-difference gradients of `fn`.

    Entries are drawn at random without replacement. An entry whose
    perturbation crosses a ReLU or max pooling switch point is skipped and
    replaced by the next candidate from the same pool, so kinks never count
    as failures.

    Parameters
    ----------
    fn : callable () -> GraphNode
        Recomputes the output from the current values of `leaves`.

    leaves : list of GraphNode or Parameter
        float64 leaves the output depends on.

    rtol : float
        Largest accepted relative error.

    eps : float
        Finite-difference step.

    floor : float
        See `relative_error`.

    max_entries : int
        Entries checked per leaf.

    n_entries : int
        Optional: check this many entries across all leaves instead.

    max_unchecked : float
        Largest accepted fraction of the requested entries left unchecked
        because every remaining candidate of their pool was non-smooth.

    Returns
    -------
    GradcheckResult
    """
    rng = np.random.default_rng(seed)
    nodes = [_as_leaf(x) for x in leaves]
    for node in nodes:
        node.zero_grad()
    out = fn()
    weights = rng.standard_normal(out.shape) / np.sqrt(out.value.size)
    backward(ops.weighted_sum(out, weights))
    analytic = [node.grad if node.grad is not None else np.zeros(node.shape)
            for node in nodes]

    def loss_value():
        with no_grad():
            return float(ops.weighted_sum(fn(), weights).data.reshape(()))

    # pools of (leaf, flat index) candidates in random order, each with a quota
    sizes = np.array([node.value.size for node in nodes])
    if n_entries is None:
        pools = [([(k, int(i)) for i in rng.permutation(size)], min(size, max_entries))
                for k, size in enumerate(sizes)]
    else:
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        order = rng.permutation(offsets[-1])
        candidates = []
        for flat in order:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            candidates.append((k, int(flat - offsets[k])))
        pools = [(candidates, min(int(offsets[-1]), n_entries))]

    f0 = loss_value()
    max_error = 0.0
    checked = skipped = requested = 0
    for candidates, quota in pools:
        requested += quota
        done = 0
        for k, idx in candidates:
            if done == quota:
                break
            node = nodes[k]
            original = node.value
            base = original.numpy()
            values = []
            for delta in (eps, -eps):
                perturbed = base.copy()
                perturbed.flat[idx] += delta
                node.value = Tensor(perturbed, dtype=original.dtype)
                values.append(loss_value())
            node.value = original
            f_plus, f_minus = values
            a = float(analytic[k].flat[idx])
            numeric = (f_plus - f_minus) / (2 * eps)
            err = relative_error(a, numeric, floor)
            if err > rtol:
                # a one-sided difference that agrees marks a switch point, not an error
                forward = (f_plus - f0) / eps
                backward_diff = (f0 - f_minus) / eps
                if min(relative_error(a, forward, floor),
                        relative_error(a, backward_diff, floor)) < 1e-2:
                    skipped += 1
                    continue
            max_error = max(max_error, err)
            done += 1
        checked += done
    passed = max_error <= rtol and requested - checked <= max_unchecked * requested
    return GradcheckResult(name, max_error, checked, skipped, passed)


def _op_cases(rng):
    def normal(*shape):
        return rng.standard_normal(shape)

    target = (rng.random((2, 1, 4, 4)) > 0.5).astype(np.float64)
    return [
        ("conv2d", lambda x, w, b: ops.conv2d(x, w, b, padding=1),
            [normal(2, 3, 6, 6), normal(4, 3, 3, 3), normal(1, 4, 1, 1)]),
        ("conv2d_5x5", lambda x, w, b: ops.conv2d(x, w, b, padding=2),
            [normal(1, 2, 7, 7), normal(3, 2, 5, 5), normal(1, 3, 1, 1)]),
        ("conv2d_dilated", lambda x, w: ops.conv2d(x, w, padding=3, dilation=3),
            [normal(1, 2, 8, 8), normal(3, 2, 3, 3)]),
        ("conv2d_strided", lambda x, w: ops.conv2d(x, w, stride=2, padding=1),
            [normal(1, 2, 7, 7), normal(2, 2, 3, 3)]),
        ("max_pool_2x2", ops.max_pool_2x2, [normal(2, 3, 4, 4)]),
        ("upsample_nearest_2x", ops.upsample_nearest_2x, [normal(2, 3, 3, 3)]),
        ("concat_channels", ops.concat_channels, [normal(2, 3, 4, 4), normal(2, 2, 4, 4)]),
        ("slice_channels", lambda x: ops.slice_channels(x, 1, 3), [normal(1, 4, 3, 3)]),
        ("add", ops.add, [normal(2, 3, 4, 4), normal(2, 3, 4, 4)]),
        ("add_broadcast", ops.add, [normal(2, 3, 4, 4), normal(2, 3, 1, 1)]),
        ("mul", ops.mul, [normal(2, 3, 4, 4), normal(2, 3, 4, 4)]),
        ("sigmoid", ops.sigmoid, [normal(2, 3, 4, 4)]),
        ("relu", ops.relu, [normal(2, 3, 4, 4)]),
        ("one_minus", ops.one_minus, [normal(2, 3, 4, 4)]),
        ("broadcast_mul_channel", ops.broadcast_mul, [normal(2, 3, 1, 1), normal(2, 3, 4, 4)]),
        ("broadcast_mul_spatial", ops.broadcast_mul, [normal(2, 1, 4, 4), normal(2, 3, 4, 4)]),
        ("global_average_pool", ops.global_average_pool, [normal(2, 3, 4, 5)]),
        ("binary_cross_entropy", lambda p: ops.binary_cross_entropy(p, target),
            [rng.uniform(0.05, 0.95, (2, 1, 4, 4))]),
    ]

def check_op(name, op, inputs, seed=0, rtol=1e-6):
    leaves = [_as_leaf(x) for x in inputs]
    return check_gradients(lambda: op(*leaves), leaves, name=name, rtol=rtol, seed=seed)

def check_block(variant, seed=0, rtol=1e-6, input_shape=(2, 4, 8, 8)):
    """
    Gradients of one block variant w.r.t. its input and all its parameters.
    """
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        cfg = HaamConfig(input_shape[1], 6, mid_channels=8, reduction_ratio=4,
                variant=variant)
        block = build_variant(cfg, prefix=variant, rng=rng)
    x = _as_leaf(rng.standard_normal(input_shape))
    leaves = [x] + block.parameters()
    return check_gradients(lambda: block(x)[0], leaves, name="block_" + variant,
            rtol=rtol, seed=seed)

def check_model(seed=0, rtol=1e-4, n_entries=50, variant="full"):
    """
    End-to-end check of a depth-2, base-width-4 network on a 16x16 input.
    """
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        model = build_model(ModelConfig(depth=2, base_width=4, variant=variant,
            input_size=(16, 16)), seed=seed)
    x = rng.random((1, 1, 16, 16))
    return check_gradients(lambda: model.forward(x), model.parameters(),
            name="model_" + variant, rtol=rtol, eps=1e-6, n_entries=n_entries, seed=seed)

def run_gradcheck_suite(seed=0):
    """
    Check every differentiable op, every block variant and a small
    end-to-end model.

    Returns
    -------
    list of GradcheckResult
    """
    rng = np.random.default_rng(seed)
    results = []
    for name, op, inputs in _op_cases(rng):
        results.append(check_op(name, op, inputs, seed=seed))
    for variant in VARIANTS:
        results.append(check_block(variant, seed=seed))
    results.append(check_model(seed=seed))
    for r in results:
        log = logger.info if r.passed else logger.error
        log("%-28s max rel error %.2e over %d entries (%d skipped) %s", r.name,
                r.max_error, r.checked, r.skipped, "ok" if r.passed else "FAILED")
    return results
