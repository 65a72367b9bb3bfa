"""Dense tensors, a dynamic computation graph and reverse-mode differentiation.

Every differentiable operation records a :class:`Node`. A node may carry a
``grad_transform`` factor; during :func:`backward` the gradient leaving that
node towards its inputs is multiplied by the factor. This is the hook that
gradient amplification is built on.

The graph is rebuilt on every forward pass and released by ``backward``.
"""
from __future__ import annotations

import contextlib
import math
import threading
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import GraphError, NumericError, StateError

AMP_POINTS = ("input_side", "output_side")


class Kind(str, Enum):
    LINEAR = "Linear"
    CONV2D = "Conv2d"
    BATCHNORM = "BatchNorm"
    RELU = "ReLU"
    MAXPOOL = "MaxPool"
    AVGPOOL = "AvgPool"
    RESIDUAL_ADD = "ResidualAdd"
    FLATTEN = "Flatten"
    SOFTMAX_CE = "SoftmaxCE"
    # plain tensor arithmetic that does not belong to a layer
    ARITH = "Arith"


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.hooks_enabled = True
        self.dtype = np.dtype(np.float32)


_state = _State()


def default_dtype() -> np.dtype:
    return _state.dtype


def is_grad_enabled() -> bool:
    return _state.grad_enabled


def hooks_enabled() -> bool:
    return _state.hooks_enabled


@contextlib.contextmanager
def no_grad():
    """Run forward computations without recording a graph."""
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def hooks_disabled():
    """Ignore every ``grad_transform`` during backward (amplification compiled out)."""
    prev = _state.hooks_enabled
    _state.hooks_enabled = False
    try:
        yield
    finally:
        _state.hooks_enabled = prev


@contextlib.contextmanager
def check_mode():
    """64-bit default precision, used by the gradient-check tests."""
    prev = _state.dtype
    _state.dtype = np.dtype(np.float64)
    try:
        yield
    finally:
        _state.dtype = prev


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, Tensor):
        data = data.data
    if dtype is not None:
        arr = np.asarray(data, dtype=dtype)
    else:
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(default_dtype())
    # ascontiguousarray would turn 0-d scalars into shape (1,)
    return arr if arr.flags.c_contiguous else arr.copy(order="C")


class Tensor:
    """An n-dimensional array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name", "is_param")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[Node] = None
        self.name = name
        self.is_param = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def backward(self, **kwargs) -> "GradientMap":
        return backward(self, **kwargs)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return mul(self, power(_wrap(other, self.dtype), -1.0))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Node:
    """One recorded operation in the computation graph."""

    __slots__ = ("kind", "layer_id", "inputs", "grad_transform", "backward_fn")

    def __init__(self, kind: Kind, inputs: Sequence[Tensor], backward_fn: Callable,
                 layer_id: Optional[int] = None, grad_transform: Optional[float] = None):
        self.kind = Kind(kind)
        self.layer_id = layer_id
        self.inputs = tuple(inputs)
        self.grad_transform = grad_transform
        self.backward_fn = backward_fn

    def __repr__(self):
        return f"Node({self.kind.value}, layer_id={self.layer_id}, grad_transform={self.grad_transform})"


class GradientMap(dict):
    """Mapping from parameter tensor (by identity) to its gradient array."""

    def __setitem__(self, param: Tensor, grad: np.ndarray):
        if grad.shape != param.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
        super().__setitem__(param, grad)


def _wrap(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else default_dtype()))


def make_output(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable,
                kind: Kind = Kind.ARITH, layer=None) -> Tensor:
    """Wrap ``data`` in a Tensor and record a node when any input needs a gradient.

    ``backward_fn(g)`` must return one gradient (or None) per input. ``layer``
    supplies ``layer_id`` and the ``grad_transform`` in force at forward time.
    """
    out = Tensor(data)
    if not _state.grad_enabled or not any(t.requires_grad for t in inputs):
        return out
    layer_id = getattr(layer, "layer_id", None)
    transform = getattr(layer, "grad_transform", None)
    out.node = Node(kind, inputs, backward_fn, layer_id, transform)
    out.requires_grad = True
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b, kind: Kind = Kind.ARITH, layer=None) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.shape, b.shape

    def backward_fn(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_output(a.data + b.data, (a, b), backward_fn, kind, layer)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data

    def backward_fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return make_output(ad * bd, (a, b), backward_fn)


def neg(a) -> Tensor:
    a = _wrap(a)
    return make_output(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    ad = a.data
    p = ad.dtype.type(exponent)

    def backward_fn(g):
        return (g * p * ad ** (p - 1),)

    return make_output(ad ** p, (a,), backward_fn)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)
    return make_output(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _wrap(a)
    ad = a.data
    return make_output(np.log(ad), (a,), lambda g: (g / ad,))


def tsum(a) -> Tensor:
    a = _wrap(a)
    shape = a.shape

    def backward_fn(g):
        return (np.broadcast_to(g, shape).copy(),)

    return make_output(np.asarray(a.data.sum(), dtype=a.dtype), (a,), backward_fn)


def mean(a) -> Tensor:
    a = _wrap(a)
    shape, n = a.shape, a.size

    def backward_fn(g):
        return (np.broadcast_to(g / a.dtype.type(n), shape).copy(),)

    return make_output(np.asarray(a.data.mean(), dtype=a.dtype), (a,), backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2:
        raise ValueError("matmul expects 2-d operands")

    def backward_fn(g):
        return g @ bd.T, ad.T @ g

    return make_output(ad @ bd, (a, b), backward_fn)


def reshape(a, shape, kind: Kind = Kind.ARITH, layer=None) -> Tensor:
    a = _wrap(a)
    orig = a.shape
    return make_output(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),), kind, layer)


def _topological_nodes(root: Node) -> list:
    """Post-order over the graph reachable from ``root``; raises on a cycle."""
    order = []
    state = {}  # id(node) -> 1 visiting, 2 done
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        mark = state.get(key)
        if mark == 2:
            continue
        if mark == 1:
            raise GraphError(f"cycle detected at {node!r}")
        state[key] = 1
        stack.append((node, True))
        for t in reversed(node.inputs):
            child = t.node
            if child is None:
                continue
            child_mark = state.get(id(child))
            if child_mark == 1:
                raise GraphError(f"cycle detected at {child!r}")
            if child_mark is None:
                stack.append((child, False))
    return order


def backward(loss: Tensor, amp_point: str = "input_side",
             scale_own_params: bool = True) -> GradientMap:
    """Gradients of a scalar ``loss`` w.r.t. every leaf tensor that requires grad.

    With ``amp_point="input_side"`` a node's ``grad_transform`` multiplies the
    gradients its local rule produces for its inputs; parameters owned by the
    node are included unless ``scale_own_params`` is False. With
    ``"output_side"`` the factor multiplies the gradient arriving at the node
    before its local rule runs. The graph's forward caches are released.
    """
    if amp_point not in AMP_POINTS:
        raise ValueError(f"amp_point must be one of {AMP_POINTS}, got {amp_point!r}")
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = GradientMap()
    seed = np.ones_like(loss.data)
    if loss.node is None:
        if not loss.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")
        grads[loss] = seed
        loss.grad = seed
        return grads

    order = _topological_nodes(loss.node)
    node_grads = {id(loss.node): seed}
    leaf_grads = {}
    leaves = []
    use_hooks = _state.hooks_enabled
    for node in reversed(order):
        g = node_grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            raise StateError(f"forward cache of {node!r} was released; run forward again")
        factor = node.grad_transform if use_hooks else None
        if factor is not None and factor != 1.0 and amp_point == "output_side":
            g = g * g.dtype.type(factor)
        local = node.backward_fn(g)
        node.backward_fn = None
        scale = factor is not None and factor != 1.0 and amp_point == "input_side"
        for t, gi in zip(node.inputs, local):
            if gi is None or not t.requires_grad:
                continue
            if scale and (scale_own_params or not t.is_param):
                gi = gi * gi.dtype.type(factor)
            if t.node is not None:
                key = id(t.node)
                prev = node_grads.get(key)
                node_grads[key] = gi if prev is None else prev + gi
            else:
                key = id(t)
                prev = leaf_grads.get(key)
                if prev is None:
                    leaves.append(t)
                    leaf_grads[key] = gi
                else:
                    leaf_grads[key] = prev + gi
    for t in leaves:
        g = np.ascontiguousarray(leaf_grads[id(t)], dtype=t.dtype)
        grads[t] = g
        t.grad = g
    return grads


def _check_factor(factor: float) -> float:
    try:
        value = float(factor)
    except (TypeError, ValueError):
        raise ValueError(f"gradient transform factor must be a real number, got {factor!r}")
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"gradient transform factor must be finite and > 0, got {factor!r}")
    return value


def attach_grad_transform(target, factor: float) -> None:
    """Set the gradient multiplier of a graph node or layer (overwrites any previous one)."""
    target.grad_transform = _check_factor(factor)


def _transform_holders(model) -> Iterable:
    if hasattr(model, "modules"):
        return model.modules()
    return model


def clear_grad_transforms(model) -> None:
    """Remove the gradient multiplier from every layer of ``model`` (or every item of an iterable)."""
    for item in _transform_holders(model):
        if hasattr(item, "grad_transform"):
            item.grad_transform = None


def finite_diff_grad(f: Callable[[Tensor], object], x: Tensor, eps: float = 1e-6) -> Tensor:
    """Central-difference estimate of d f(x) / d x, one element at a time."""
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")

    def value() -> float:
        with no_grad():
            out = f(x)
        v = out.item() if isinstance(out, Tensor) else float(out)
        if not math.isfinite(v):
            raise NumericError(f"non-finite function value {v}")
        return v

    flat = x.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = value()
        flat[i] = orig - eps
        lo = value()
        flat[i] = orig
        grad[i] = (hi - lo) / (2 * eps)
    return Tensor(grad.reshape(x.shape), dtype=x.dtype)


def sgd_step(params: Iterable[Tensor], grads: GradientMap, lr: float) -> None:
    """In-place ``p -= lr * g`` for every parameter that has a gradient."""
    lr = float(lr)
    if not math.isfinite(lr) or lr < 0:
        raise ValueError(f"learning rate must be finite and >= 0, got {lr}")
    for p in params:
        g = grads.get(p)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        p.data -= p.dtype.type(lr) * g
