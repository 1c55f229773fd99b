"""Operation kinds with their vector-Jacobian products.

Binary elementwise ops broadcast numpy-style; their gradients are summed back
to each operand's shape. Images are NHWC.
"""
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, logsumexp as _logsumexp

from application.core.errors import ShapeMismatch
from application.services.autodiff.graph import CompGraph, Node


def _graph(*items) -> CompGraph:
    for item in items:
        if isinstance(item, Node):
            return item.graph
    raise TypeError("at least one operand must be a Node")


def _lift(graph: CompGraph, x) -> Node:
    return x if isinstance(x, Node) else graph.constant(x)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ============= Elementwise arithmetic =============
def add(x, y) -> Node:
    g = _graph(x, y)
    x, y = _lift(g, x), _lift(g, y)

    def backward(grad):
        x.accumulate(_unbroadcast(grad, x.shape))
        y.accumulate(_unbroadcast(grad, y.shape))
    return g.apply("add", (x, y), x.value + y.value, backward)


def sub(x, y) -> Node:
    g = _graph(x, y)
    x, y = _lift(g, x), _lift(g, y)

    def backward(grad):
        x.accumulate(_unbroadcast(grad, x.shape))
        y.accumulate(_unbroadcast(-grad, y.shape))
    return g.apply("sub", (x, y), x.value - y.value, backward)


def mul(x, y) -> Node:
    g = _graph(x, y)
    x, y = _lift(g, x), _lift(g, y)

    def backward(grad):
        x.accumulate(_unbroadcast(grad * y.value, x.shape))
        y.accumulate(_unbroadcast(grad * x.value, y.shape))
    return g.apply("mul", (x, y), x.value * y.value, backward)


def div(x, y) -> Node:
    g = _graph(x, y)
    x, y = _lift(g, x), _lift(g, y)
    out = x.value / y.value

    def backward(grad):
        x.accumulate(_unbroadcast(grad / y.value, x.shape))
        y.accumulate(_unbroadcast(-grad * out / y.value, y.shape))
    return g.apply("div", (x, y), out, backward)


def scale(x: Node, c: float) -> Node:
    def backward(grad):
        x.accumulate(grad * c)
    return x.graph.apply("scale", (x,), x.value * c, backward)


def square(x: Node) -> Node:
    def backward(grad):
        x.accumulate(2.0 * x.value * grad)
    return x.graph.apply("square", (x,), x.value * x.value, backward)


def sqrt(x: Node) -> Node:
    """Square root; the gradient at exactly 0 is taken as 0 (zero distances stay finite)."""
    out = np.sqrt(x.value)

    def backward(grad):
        safe = np.where(out > 0, out, 1.0)
        x.accumulate(np.where(out > 0, grad / (2.0 * safe), 0.0))
    return x.graph.apply("sqrt", (x,), out, backward)


def log(x: Node) -> Node:
    def backward(grad):
        x.accumulate(grad / x.value)
    return x.graph.apply("log", (x,), np.log(x.value), backward)


def exp(x: Node) -> Node:
    out = np.exp(x.value)

    def backward(grad):
        x.accumulate(grad * out)
    return x.graph.apply("exp", (x,), out, backward)


def clip(x: Node, low: float, high: float) -> Node:
    def backward(grad):
        x.accumulate(np.where((x.value >= low) & (x.value <= high), grad, 0.0))
    return x.graph.apply("clip", (x,), np.clip(x.value, low, high), backward)


# ============= Activations =============
def relu(x: Node) -> Node:
    def backward(grad):
        x.accumulate(grad * (x.value > 0))
    return x.graph.apply("relu", (x,), np.maximum(x.value, 0.0), backward)


def sigmoid(x: Node) -> Node:
    out = expit(x.value)

    def backward(grad):
        x.accumulate(grad * out * (1.0 - out))
    return x.graph.apply("sigmoid", (x,), out, backward)


def softplus(x: Node) -> Node:
    def backward(grad):
        x.accumulate(grad * expit(x.value))
    return x.graph.apply("softplus", (x,), np.logaddexp(0.0, x.value), backward)


# ============= Reductions and shape =============
def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


def sum(x: Node, axis=None, keepdims: bool = False) -> Node:
    def backward(grad):
        x.accumulate(_expand_reduced(grad, x.shape, axis, keepdims))
    return x.graph.apply("sum", (x,), np.sum(x.value, axis=axis, keepdims=keepdims), backward)


def mean(x: Node, axis=None, keepdims: bool = False) -> Node:
    out = np.mean(x.value, axis=axis, keepdims=keepdims)
    count = x.value.size // max(np.size(out), 1)

    def backward(grad):
        x.accumulate(_expand_reduced(grad, x.shape, axis, keepdims) / count)
    return x.graph.apply("mean", (x,), out, backward)


def logsumexp(x: Node, axis: int, keepdims: bool = False) -> Node:
    out = _logsumexp(x.value, axis=axis, keepdims=True)

    def backward(grad):
        g = grad if keepdims else np.expand_dims(grad, axis)
        x.accumulate(g * np.exp(x.value - out))
    return x.graph.apply("logsumexp", (x,), out if keepdims else np.squeeze(out, axis=axis), backward)


def broadcast_to(x: Node, shape: Tuple[int, ...]) -> Node:
    """Broadcast, e.g. per-sample scalars (B, 1) across a trailing axis."""
    def backward(grad):
        x.accumulate(_unbroadcast(grad, x.shape))
    return x.graph.apply("broadcast", (x,), np.broadcast_to(x.value, shape).copy(), backward)


def reshape(x: Node, shape: Tuple[int, ...]) -> Node:
    def backward(grad):
        x.accumulate(grad.reshape(x.shape))
    return x.graph.apply("reshape", (x,), x.value.reshape(shape), backward)


def concat(xs: Sequence[Node], axis: int = 0) -> Node:
    g = _graph(*xs)
    xs = [_lift(g, x) for x in xs]
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(grad):
        for x, part in zip(xs, np.split(grad, bounds, axis=axis)):
            x.accumulate(part)
    return g.apply("concat", xs, np.concatenate([x.value for x in xs], axis=axis), backward)


def take(x: Node, indices: np.ndarray, axis: int = 0) -> Node:
    """Gather along one axis with a 1-D index array (repeats allowed)."""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(grad):
        full = np.zeros_like(x.value)
        np.add.at(np.moveaxis(full, axis, 0), indices, np.moveaxis(grad, axis, 0))
        x.accumulate(full)
    return x.graph.apply("take", (x,), np.take(x.value, indices, axis=axis), backward)


# ============= Layers =============
def affine(x: Node, w: Node, b: Optional[Node] = None) -> Node:
    """x (B, F) @ w (F, O) + b (O,)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"affine: input {x.shape} against weights {w.shape}")
    out = x.value @ w.value
    if b is not None:
        out = out + b.value
    inputs = (x, w) if b is None else (x, w, b)

    def backward(grad):
        x.accumulate(grad @ w.value.T)
        w.accumulate(x.value.T @ grad)
        if b is not None:
            b.accumulate(grad.sum(axis=0))
    return x.graph.apply("affine", inputs, out, backward)


def conv2d(x: Node, w: Node, b: Optional[Node] = None) -> Node:
    """Stride-1 'same' convolution: x (B, H, W, Cin), w (k, k, Cin, Cout) with odd k."""
    batch, height, width, channels = x.shape
    k, k2, cin, cout = w.shape
    if k != k2 or k % 2 == 0 or cin != channels:
        raise ShapeMismatch(f"conv2d: input {x.shape} against kernel {w.shape}")
    pad = k // 2

    padded = np.pad(x.value, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    # (B, H, W, Cin, k, k) view -> contiguous (B*H*W, k*k*Cin) patch matrix
    cols = sliding_window_view(padded, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = cols.reshape(batch * height * width, k * k * cin)
    kernel = w.value.reshape(k * k * cin, cout)
    out = (cols @ kernel).reshape(batch, height, width, cout)
    if b is not None:
        out = out + b.value
    inputs = (x, w) if b is None else (x, w, b)

    def backward(grad):
        flat = grad.reshape(batch * height * width, cout)
        w.accumulate((cols.T @ flat).reshape(w.shape))
        if b is not None:
            b.accumulate(flat.sum(axis=0))
        if x.requires_grad:
            dcols = (flat @ kernel.T).reshape(batch, height, width, k, k, cin)
            dpadded = np.zeros_like(padded)
            for i in range(k):
                for j in range(k):
                    dpadded[:, i:i + height, j:j + width, :] += dcols[:, :, :, i, j, :]
            x.accumulate(dpadded[:, pad:pad + height, pad:pad + width, :])
    return x.graph.apply("conv2d", inputs, out, backward)


def max_pool2d(x: Node) -> Node:
    """2x2 / stride-2 max pooling; ties go to the first element in row-major order."""
    batch, height, width, channels = x.shape
    if height % 2 or width % 2:
        raise ShapeMismatch(f"max_pool2d needs even extents, got {x.shape}")
    h2, w2 = height // 2, width // 2
    windows = x.value.reshape(batch, h2, 2, w2, 2, channels).transpose(0, 1, 3, 5, 2, 4)
    windows = windows.reshape(batch, h2, w2, channels, 4)
    winner = windows.argmax(axis=-1)[..., None]
    out = np.take_along_axis(windows, winner, axis=-1)[..., 0]

    def backward(grad):
        routed = np.zeros((batch, h2, w2, channels, 4), dtype=grad.dtype)
        np.put_along_axis(routed, winner, grad[..., None], axis=-1)
        routed = routed.reshape(batch, h2, w2, channels, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        x.accumulate(routed.reshape(batch, height, width, channels))
    return x.graph.apply("max_pool2d", (x,), out, backward)


# ============= Stochastic =============
def reparameterize(mu: Node, sigma: Node, eps: np.ndarray) -> Node:
    """z = sigma * eps + mu with eps held constant; gradients reach mu and sigma only."""
    eps = np.asarray(eps, dtype=mu.value.dtype)
    out = sigma.value * eps + mu.value

    def backward(grad):
        mu.accumulate(_unbroadcast(grad, mu.shape))
        sigma.accumulate(_unbroadcast(grad * eps, sigma.shape))
    return mu.graph.apply("reparameterize", (mu, sigma), out, backward)
