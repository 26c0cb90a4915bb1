# Dense 4-D tensors and the reverse-mode autodiff graph.

import hashlib
import logging
import os
from contextlib import contextmanager

import numpy as np

from .errors import ShapeError, NonFiniteError

logger = logging.getLogger(__name__)

_settings = {
    "dtype" : np.float32,
    "debug" : os.environ.get("AAUNET_DEBUG", "0") == "1",
    "grad" : True,
}

def get_default_dtype():
    """
    Returns the dtype used for new tensors (float32 unless changed).
    """
    return _settings["dtype"]

def set_default_dtype(dtype):
    """
    Set the dtype used for new tensors. Only float32 and float64 are
    supported; float64 exists for gradient checking.
    """
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("Unsupported dtype {}".format(dtype))
    _settings["dtype"] = dtype

@contextmanager
def precision(dtype):
    """
    Context manager temporarily switching the default dtype.

    >>> with precision(np.float64):
    ...     x = Tensor(np.zeros((1, 1, 2, 2)))
    """
    previous = _settings["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _settings["dtype"] = previous

def set_debug(flag):
    """
    Enable or disable NaN/Inf checks after every forward op.
    """
    _settings["debug"] = bool(flag)

def debug_enabled():
    return _settings["debug"]

@contextmanager
def no_grad():
    """
    Context manager disabling graph construction, for inference.
    """
    previous = _settings["grad"]
    _settings["grad"] = False
    try:
        yield
    finally:
        _settings["grad"] = previous

def grad_enabled():
    return _settings["grad"]

class Tensor:
    """
    An immutable dense array of shape (batch, channels, height, width).

    The underlying numpy buffer is marked read-only, so neither the
    backward pass nor user code can mutate a forward value in place.
    """
    __slots__ = ("_data",)

    def __init__(self, data, dtype=None):
        """
        Parameters
        ----------
        data : array_like with 4 dimensions
            Values. The data is copied.

        dtype : numpy dtype
            Optional: element type. Defaults to `get_default_dtype()`.
        """
        if dtype is None:
            dtype = get_default_dtype()
        arr = np.array(data, dtype=dtype, copy=True)
        self._data = self._check(arr)

    @classmethod
    def wrap(cls, arr):
        """
        Wrap a freshly computed array without copying it. The caller must
        not keep a writable reference to `arr`.
        """
        tensor = cls.__new__(cls)
        tensor._data = cls._check(np.asarray(arr))
        return tensor

    @staticmethod
    def _check(arr):
        if arr.ndim != 4:
            raise ShapeError("Tensor must have 4 dimensions (n, c, h, w)",
                    "rank", 4, arr.ndim)
        for name, extent in zip(("batch", "channels", "height", "width"), arr.shape):
            if extent < 1:
                raise ShapeError("Tensor extents must be positive", name, ">=1", extent)
        arr.setflags(write=False)
        return arr

    @property
    def data(self):
        """
        Read-only numpy view of the values.
        """
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def dtype(self):
        return self._data.dtype

    @property
    def size(self):
        return self._data.size

    def numpy(self):
        """
        Returns a writable copy of the values.
        """
        return np.array(self._data, copy=True)

    def checksum(self):
        """
        SHA-256 of the raw little-endian bytes together with the shape.
        """
        h = hashlib.sha256()
        h.update(repr(self.shape).encode())
        h.update(np.ascontiguousarray(self._data).astype(self._data.dtype.newbyteorder("<")).tobytes())
        return h.hexdigest()

    def __repr__(self):
        return "Tensor(shape={}, dtype={})".format(self.shape, self.dtype)

class GraphNode:
    """
    A node in the autodiff graph: a forward value, the nodes it was computed
    from and the rule mapping the output gradient to input gradients.
    """
    def __init__(self, value, parents=(), backward_rule="leaf", backward_fn=None,
            requires_grad=None):
        """
        Parameters
        ----------
        value : Tensor
            Forward value

        parents : tuple of GraphNode
            Input nodes of the producing op

        backward_rule : str
            Name of the op which produced this node

        backward_fn : callable
            Maps the output gradient (ndarray) to a tuple holding one
            gradient (or None) per parent.

        requires_grad : bool
            Defaults to True when any parent requires a gradient.
        """
        if not isinstance(value, Tensor):
            value = Tensor(value)
        self.value = value
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self._backward_fn = backward_fn
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = bool(requires_grad)
        self.retain_grad = False
        self._grad = None

    @classmethod
    def from_op(cls, data, parents, rule, backward_fn):
        """
        Build the output node of an op. Nodes whose inputs need no gradient
        are detached so no graph is kept alive behind them.
        """
        value = Tensor.wrap(data)
        if debug_enabled() and not np.all(np.isfinite(value.data)):
            raise NonFiniteError("Non-finite value produced", where=rule)
        if not _settings["grad"] or not any(p.requires_grad for p in parents):
            return cls(value, backward_rule=rule, requires_grad=False)
        return cls(value, parents, rule, backward_fn, requires_grad=True)

    @property
    def is_leaf(self):
        return self._backward_fn is None

    @property
    def data(self):
        return self.value.data

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self):
        """
        Accumulated gradient, or None if never populated.
        """
        return self._grad

    def accumulate_grad(self, grad):
        if grad.shape != self.value.shape:
            raise ShapeError("Gradient shape does not match value shape",
                    "shape", self.value.shape, grad.shape)
        if self._grad is None:
            self._grad = np.array(grad, dtype=self.value.dtype, copy=True)
        else:
            self._grad += grad

    def zero_grad(self):
        self._grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return "GraphNode(rule={}, shape={}, requires_grad={})".format(
                self.backward_rule, self.shape, self.requires_grad)

def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order

def backward(loss_node):
    """
    Propagate gradients from a scalar loss node to every reachable leaf.

    Leaf gradients accumulate across calls until `zero_grad`; gradients of
    intermediate nodes are only stored when ``retain_grad`` is set.

    Parameters
    ----------
    loss_node : GraphNode
        Node of shape (1, 1, 1, 1)
    """
    if loss_node.shape != (1, 1, 1, 1):
        raise ShapeError("backward requires a scalar loss", "shape",
                (1, 1, 1, 1), loss_node.shape)
    if not loss_node.requires_grad:
        return
    grads = {id(loss_node) : np.ones(loss_node.shape, dtype=loss_node.value.dtype)}
    for node in reversed(_topological_order(loss_node)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            node.accumulate_grad(grad)
            continue
        if node.retain_grad:
            node._grad = np.array(grad, copy=True)
        parent_grads = node._backward_fn(grad)
        for parent, pgrad in zip(node.parents, parent_grads):
            if pgrad is None or not parent.requires_grad:
                continue
            if pgrad.shape != parent.shape:
                raise ShapeError("Backward rule {} produced a misshaped gradient".format(
                    node.backward_rule), "shape", parent.shape, pgrad.shape)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pgrad
            else:
                grads[id(parent)] = pgrad

class Parameter:
    """
    A named, trainable tensor together with its Adam moment estimates.
    """
    def __init__(self, name, data, dtype=None):
        """
        Parameters
        ----------
        name : str
            Hierarchical name, e.g. "enc1.haam1.conv5.weight"

        data : array_like with 4 dimensions
            Initial value

        dtype : numpy dtype
            Optional: element type.
        """
        self.name = name
        self.node = GraphNode(Tensor(data, dtype=dtype), requires_grad=True)
        self.adam_m = np.zeros(self.shape, dtype=self.dtype)
        self.adam_v = np.zeros(self.shape, dtype=self.dtype)

    @property
    def value(self):
        """
        Read-only view of the current value.
        """
        return self.node.value.data

    @property
    def shape(self):
        return self.node.shape

    @property
    def size(self):
        return self.node.value.size

    @property
    def dtype(self):
        return self.node.value.dtype

    @property
    def grad(self):
        return self.node.grad

    def zero_grad(self):
        self.node.zero_grad()

    def assign(self, data):
        """
        Replace the parameter value. The graph node is kept, so gradient
        bookkeeping survives the update.
        """
        data = np.asarray(data)
        if data.shape != self.shape:
            raise ShapeError("Cannot assign to parameter {}".format(self.name),
                    "shape", self.shape, data.shape)
        self.node.value = Tensor(data, dtype=self.dtype)

    def cast(self, dtype):
        """
        Convert value and moments to another dtype.
        """
        self.node.value = Tensor(self.value, dtype=dtype)
        self.node.zero_grad()
        self.adam_m = self.adam_m.astype(dtype)
        self.adam_v = self.adam_v.astype(dtype)

    def __repr__(self):
        return "Parameter({}, shape={})".format(self.name, self.shape)
