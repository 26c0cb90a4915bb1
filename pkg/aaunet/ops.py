# Differentiable operations on GraphNodes.
#
# Every op takes GraphNodes (Tensors, Parameters and arrays are promoted to
# constant nodes), computes the forward value with numpy and registers a
# closure mapping the output gradient to one gradient per input.

import numpy as np
from scipy.special import expit

from .tensor import Tensor, GraphNode, Parameter
from .errors import ShapeError

_DIMS = ("batch", "channels", "height", "width")

def as_node(x):
    """
    Promote a GraphNode, Parameter, Tensor or array to a GraphNode.
    """
    if isinstance(x, GraphNode):
        return x
    if isinstance(x, Parameter):
        return x.node
    if isinstance(x, Tensor):
        return GraphNode(x)
    return GraphNode(Tensor(x))

def constant(data, dtype=None):
    """
    Wrap data into a node which does not require a gradient.
    """
    return GraphNode(Tensor(data, dtype=dtype))

def _unbroadcast(grad, shape):
    for dim, extent in enumerate(shape):
        if extent == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad

def _check_broadcastable(name, a, b):
    for dim, (ea, eb) in enumerate(zip(a.shape, b.shape)):
        if ea != eb and ea != 1 and eb != 1:
            raise ShapeError("{}: operands are not broadcastable".format(name),
                    _DIMS[dim], ea, eb)

def _output_extent(extent, kernel, stride, padding, dilation):
    return (extent + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1

def _im2col(x, kernel, stride, padding, dilation, ho, wo):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c = x.shape[:2]
    cols = np.empty((n, c, kernel, kernel, ho, wo), dtype=x.dtype)
    for i in range(kernel):
        r = i * dilation
        for j in range(kernel):
            s = j * dilation
            cols[:, :, i, j] = x[:, :, r:r + stride * (ho - 1) + 1:stride,
                    s:s + stride * (wo - 1) + 1:stride]
    return cols

def _col2im(gcols, x_shape, kernel, stride, padding, dilation, ho, wo):
    n, c, h, w = x_shape
    gx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gcols.dtype)
    for i in range(kernel):
        r = i * dilation
        for j in range(kernel):
            s = j * dilation
            gx[:, :, r:r + stride * (ho - 1) + 1:stride,
                    s:s + stride * (wo - 1) + 1:stride] += gcols[:, :, i, j]
    return gx[:, :, padding:padding + h, padding:padding + w]

def conv2d(input, weight, bias=None, stride=1, padding=0, dilation=1):
    """
    Direct 2-D convolution (cross-correlation) with zero padding.

    Parameters
    ----------
    input : GraphNode of shape (n, in_c, h, w)

    weight : GraphNode of shape (out_c, in_c, k, k)

    bias : GraphNode with out_c elements, or None

    stride, padding, dilation : int

    Returns
    -------
    GraphNode of shape (n, out_c, ho, wo) where
    ho = floor((h + 2 padding - dilation (k - 1) - 1) / stride) + 1
    """
    x, w = as_node(input), as_node(weight)
    if stride < 1 or dilation < 1 or padding < 0:
        raise ShapeError("conv2d requires stride >= 1, dilation >= 1, padding >= 0")
    out_c, in_c, kh, kw = w.shape
    if kh != kw:
        raise ShapeError("conv2d requires square kernels", "kernel", kh, kw)
    if x.shape[1] != in_c:
        raise ShapeError("conv2d input does not match weight", "channels",
                in_c, x.shape[1])
    n, _, h, wd = x.shape
    ho = _output_extent(h, kh, stride, padding, dilation)
    wo = _output_extent(wd, kh, stride, padding, dilation)
    if ho < 1:
        raise ShapeError("conv2d output would be empty", "height", ">=1", ho)
    if wo < 1:
        raise ShapeError("conv2d output would be empty", "width", ">=1", wo)
    parents = [x, w]
    if bias is not None:
        b = as_node(bias)
        if b.value.size != out_c:
            raise ShapeError("conv2d bias does not match weight", "channels",
                    out_c, b.value.size)
        parents.append(b)

    cols = _im2col(x.data, kh, stride, padding, dilation, ho, wo)
    out = np.tensordot(w.data, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + b.data.reshape(1, out_c, 1, 1)
    out = np.ascontiguousarray(out)

    def backward_fn(grad):
        gx = gw = None
        if w.requires_grad:
            gw = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 4, 5]))
        if x.requires_grad:
            gcols = np.tensordot(w.data, grad, axes=([0], [1]))
            gcols = gcols.transpose(3, 0, 1, 2, 4, 5)
            gx = _col2im(gcols, x.shape, kh, stride, padding, dilation, ho, wo)
        if bias is None:
            return gx, gw
        gb = grad.sum(axis=(0, 2, 3)).reshape(b.shape)
        return gx, gw, gb

    return GraphNode.from_op(out, parents, "conv2d", backward_fn)

def max_pool_2x2(input):
    """
    2x2 max pooling with stride 2. Gradients are routed to the first maximum
    of each window in row-major order.
    """
    x = as_node(input)
    n, c, h, w = x.shape
    if h % 2:
        raise ShapeError("max_pool_2x2 needs even extents; pad inputs to a multiple of 2",
                "height", "even", h)
    if w % 2:
        raise ShapeError("max_pool_2x2 needs even extents; pad inputs to a multiple of 2",
                "width", "even", w)
    h2, w2 = h // 2, w // 2
    windows = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)[..., np.newaxis]
    out = np.take_along_axis(windows, idx, axis=-1)[..., 0]

    def backward_fn(grad):
        gwin = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(gwin, idx, grad[..., np.newaxis], axis=-1)
        gx = gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(n, c, h, w),)

    return GraphNode.from_op(np.ascontiguousarray(out), [x], "max_pool_2x2", backward_fn)

def upsample_nearest_2x(input):
    """
    Nearest-neighbour upsampling: every value becomes a 2x2 block.
    """
    x = as_node(input)
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward_fn(grad):
        return (grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return GraphNode.from_op(out, [x], "upsample_nearest_2x", backward_fn)

def concat_channels(a, b):
    """
    Concatenate along the channel axis, `a` first.
    """
    a, b = as_node(a), as_node(b)
    for dim in (0, 2, 3):
        if a.shape[dim] != b.shape[dim]:
            raise ShapeError("concat_channels operands disagree", _DIMS[dim],
                    a.shape[dim], b.shape[dim])
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(grad):
        return grad[:, :ca], grad[:, ca:]

    return GraphNode.from_op(out, [a, b], "concat_channels", backward_fn)

def slice_channels(input, start, stop):
    """
    Select channels [start, stop).
    """
    x = as_node(input)
    c = x.shape[1]
    if not 0 <= start < stop <= c:
        raise ShapeError("slice_channels range out of bounds", "channels",
                "0 <= start < stop <= {}".format(c), (start, stop))
    out = np.array(x.data[:, start:stop], copy=True)

    def backward_fn(grad):
        gx = np.zeros(x.shape, dtype=grad.dtype)
        gx[:, start:stop] = grad
        return (gx,)

    return GraphNode.from_op(out, [x], "slice_channels", backward_fn)

def add(a, b):
    a, b = as_node(a), as_node(b)
    _check_broadcastable("add", a, b)
    out = a.data + b.data

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return GraphNode.from_op(out, [a, b], "add", backward_fn)

def mul(a, b):
    a, b = as_node(a), as_node(b)
    _check_broadcastable("mul", a, b)
    out = a.data * b.data

    def backward_fn(grad):
        return (_unbroadcast(grad * b.data, a.shape),
                _unbroadcast(grad * a.data, b.shape))

    return GraphNode.from_op(out, [a, b], "mul", backward_fn)

def scale(input, factor):
    """
    Multiply by a constant scalar.
    """
    x = as_node(input)
    out = x.data * x.data.dtype.type(factor)

    def backward_fn(grad):
        return (grad * grad.dtype.type(factor),)

    return GraphNode.from_op(out, [x], "scale", backward_fn)

def sigmoid(input):
    """
    Logistic function. Outputs stay strictly inside (0, 1) in the working
    dtype: saturated values are clipped to the neighbours of 0 and 1.
    """
    x = as_node(input)
    one = x.data.dtype.type(1)
    zero = x.data.dtype.type(0)
    out = np.clip(expit(x.data), np.nextafter(zero, one), np.nextafter(one, zero))

    def backward_fn(grad):
        return (grad * out * (1 - out),)

    return GraphNode.from_op(out, [x], "sigmoid", backward_fn)

def relu(input):
    x = as_node(input)
    mask = x.data > 0
    out = np.where(mask, x.data, x.data.dtype.type(0))

    def backward_fn(grad):
        return (grad * mask,)

    return GraphNode.from_op(out, [x], "relu", backward_fn)

def one_minus(input):
    """
    Complementary gate 1 - x.
    """
    x = as_node(input)
    out = 1 - x.data

    def backward_fn(grad):
        return (-grad,)

    return GraphNode.from_op(out, [x], "one_minus", backward_fn)

def broadcast_mul(map, features):
    """
    Calibrate a feature map with an attention map.

    Parameters
    ----------
    map : GraphNode of shape (n, c, 1, 1) (channel attention) or
          (n, 1, h, w) (spatial attention)

    features : GraphNode of shape (n, c, h, w)
    """
    m, f = as_node(map), as_node(features)
    n, c, h, w = f.shape
    if m.shape[0] != n:
        raise ShapeError("broadcast_mul map batch differs from features", "batch",
                n, m.shape[0])
    channel_map = m.shape[1:] == (c, 1, 1)
    spatial_map = m.shape[1:] == (1, h, w)
    if not (channel_map or spatial_map):
        raise ShapeError("broadcast_mul map must be (n, c, 1, 1) or (n, 1, h, w)",
                "shape", [(n, c, 1, 1), (n, 1, h, w)], m.shape)
    out = m.data * f.data

    def backward_fn(grad):
        return _unbroadcast(grad * f.data, m.shape), grad * m.data

    return GraphNode.from_op(out, [m, f], "broadcast_mul", backward_fn)

def global_average_pool(input):
    """
    Mean over the spatial positions, giving shape (n, c, 1, 1).
    """
    x = as_node(input)
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def backward_fn(grad):
        return (np.broadcast_to(grad / (h * w), x.shape).copy(),)

    return GraphNode.from_op(out, [x], "global_average_pool", backward_fn)

def sum_all(input):
    """
    Sum of all values as a scalar node of shape (1, 1, 1, 1).
    """
    x = as_node(input)
    out = x.data.sum().reshape(1, 1, 1, 1)

    def backward_fn(grad):
        return (np.full(x.shape, grad.reshape(()), dtype=grad.dtype),)

    return GraphNode.from_op(out, [x], "sum_all", backward_fn)

def weighted_sum(input, weights):
    """
    Scalar sum(input * weights) with constant weights.
    """
    x = as_node(input)
    weights = np.asarray(weights, dtype=x.data.dtype)
    if weights.shape != x.shape:
        raise ShapeError("weighted_sum weights do not match input", "shape",
                x.shape, weights.shape)
    out = (x.data * weights).sum().reshape(1, 1, 1, 1)

    def backward_fn(grad):
        return (weights * grad.reshape(()),)

    return GraphNode.from_op(out, [x], "weighted_sum", backward_fn)

def binary_cross_entropy(pred, target, reduction="mean", clamp_eps=1e-7):
    """
    Pixel-wise binary cross entropy with predictions clamped to
    [clamp_eps, 1 - clamp_eps]. Differentiable w.r.t. `pred` only.

    Parameters
    ----------
    pred : GraphNode of probabilities

    target : array_like of the same shape with values in [0, 1]

    reduction : str
        "sum" or "mean" (divide by the number of pixels)

    clamp_eps : float
    """
    p = as_node(pred)
    y = np.asarray(target, dtype=p.data.dtype)
    if y.shape != p.shape:
        raise ShapeError("binary_cross_entropy target does not match prediction",
                "shape", p.shape, y.shape)
    lo, hi = clamp_eps, 1 - clamp_eps
    pc = np.clip(p.data, lo, hi)
    inside = (p.data >= lo) & (p.data <= hi)
    losses = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    denom = losses.size if reduction == "mean" else 1
    out = (losses.sum() / denom).reshape(1, 1, 1, 1)

    def backward_fn(grad):
        dp = (-(y / pc) + (1 - y) / (1 - pc)) * inside
        return (dp * (grad.reshape(()) / denom),)

    return GraphNode.from_op(out.astype(p.data.dtype), [p], "binary_cross_entropy",
            backward_fn)

