"""Minimal reverse-mode differentiation over numpy arrays.

Each primitive computes its forward value together with a vector-Jacobian
product closure.  Primitives are registered by name in :data:`PRIMITIVES`;
the gradient checker keeps a manifest that must cover this registry.

Only positional arguments are differentiable tensors.  Keyword arguments
carry static attributes (kernel sizes, eps, target shapes).
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .injectors import conv_matmul
from .normalizers import DEFAULT_EPS

PRIMITIVES: dict[str, Callable] = {}


class Node:
    __slots__ = ("value", "grad", "parents", "op", "vjp", "requires_grad")

    def __init__(self, value, parents=(), op="leaf", vjp=None, requires_grad=False):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self.op = op
        self.vjp = vjp
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, s=float(other))
        return mul(self, other)

    __rmul__ = __mul__


def param(value) -> Node:
    """Trainable leaf."""
    return Node(np.array(value, dtype=np.float64), requires_grad=True)


def const(value) -> Node:
    return value if isinstance(value, Node) else Node(value)


def primitive(name: str, register: bool = True):
    def deco(fn):
        def apply(*args, **kw):
            nodes = tuple(const(a) for a in args)
            value, vjp = fn(*(n.value for n in nodes), **kw)
            if any(n.requires_grad for n in nodes):
                return Node(value, nodes, name, vjp, True)
            return Node(value, op=name)

        apply.__name__ = name
        apply.__doc__ = fn.__doc__
        apply.raw = fn
        if register:
            PRIMITIVES[name] = apply
        return apply

    return deco


def _topo_order(root: Node) -> list[Node]:
    order, seen = [], set()
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
        for p in reversed(node.parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``node.grad`` for every node feeding ``root``."""
    if root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
    order = _topo_order(root)
    pending = {id(root): np.ones_like(root.value, dtype=np.float64)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def zero_grad(nodes) -> None:
    for n in nodes:
        n.grad = None


# ---------------------------------------------------------------- elementwise

@primitive("add")
def add(a, b):
    T.add(a, b)
    return a + b, lambda g: (g, g)


@primitive("sub")
def sub(a, b):
    T.sub(a, b)
    return a - b, lambda g: (g, -g)


@primitive("mul")
def mul(a, b):
    T.sub(a, b)  # shape check
    return a * b, lambda g: (g * b, g * a)


@primitive("mul_scalar")
def mul_scalar(a, *, s: float):
    return a * s, lambda g: (g * s,)


@primitive("leaky_relu")
def leaky_relu(x, *, slope: float = 0.2):
    scale = np.where(x > 0, 1.0, slope)
    return x * scale, lambda g: (g * scale,)


@primitive("tanh")
def tanh(x):
    y = np.tanh(x)
    return y, lambda g: (g * (1.0 - y * y),)


@primitive("reshape")
def reshape(x, *, shape):
    return x.reshape(shape), lambda g: (g.reshape(x.shape),)


# ---------------------------------------------------------------- reductions / losses

@primitive("sum")
def sum_(x):
    return np.sum(x), lambda g: (np.full(x.shape, g),)


@primitive("mean")
def mean(x):
    return np.mean(x), lambda g: (np.full(x.shape, g / x.size),)


@primitive("sum_sq")
def sum_sq(x):
    return np.sum(x * x), lambda g: (2.0 * g * x,)


@primitive("l1_loss")
def l1_loss(a, b):
    """Mean absolute difference over all elements."""
    T.sub(a, b)
    d = a - b
    sign = np.sign(d)
    return np.mean(np.abs(d)), lambda g: (g * sign / d.size, -g * sign / d.size)


@primitive("mse_const")
def mse_const(x, *, target: float):
    """Mean of ``(x - target)^2``."""
    d = x - target
    return np.mean(d * d), lambda g: (2.0 * g * d / d.size,)


# ---------------------------------------------------------------- linear algebra

@primitive("matmul")
def matmul(a, b):
    return T.matmul(a, b), lambda g: (g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g)


@primitive("linear")
def linear(x, w, b):
    """``x @ w.T + b`` for ``x`` of shape ``(d_in,)`` or ``(N, d_in)``."""
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise T.ShapeError(f"linear: x {x.shape}, w {w.shape}, b {b.shape}")
    y = x @ w.T + b

    def vjp(g):
        g2 = g.reshape(-1, w.shape[0])
        x2 = x.reshape(-1, w.shape[1])
        return (g @ w, g2.T @ x2, g2.sum(axis=0))

    return y, vjp


@primitive("psi_weights")
def psi_weights(z, w, b, *, shape):
    """Kernel head of the style-to-kernel encoder: ``(w @ z + b).reshape(shape)``."""
    if z.ndim != 1 or w.shape != (int(np.prod(shape)), z.shape[0]) or b.shape != (w.shape[0],):
        raise T.ShapeError(f"psi_weights: z {z.shape}, w {w.shape}, b {b.shape}, target {shape}")
    y = (w @ z + b).reshape(shape)

    def vjp(g):
        gf = g.reshape(-1)
        return (w.T @ gf, np.outer(gf, z), gf)

    return y, vjp


# ---------------------------------------------------------------- feature-map ops

@primitive("unfold")
def unfold(x, *, kh: int, kw: int):
    p = T.unfold(x, kh, kw).patches
    return p, lambda g: (T.overlap_add(g, kh, kw),)


def _patch_standardize(p, eps):
    mean_, std = T.reduce_mean_std(p, axes=(-2, -1), eps=eps)
    y = (p - mean_) / std

    def vjp(g):
        gm = g.mean(axis=(-2, -1), keepdims=True)
        gy = (g * y).mean(axis=(-2, -1), keepdims=True)
        return (g - gm - y * gy) / std

    return y, vjp


@primitive("standardize_local")
def standardize_local(x, *, kh: int, kw: int, eps: float = DEFAULT_EPS):
    """Unfold then standardize each ``kh x kw`` channel slice of every patch."""
    p = T.unfold(x, kh, kw).patches
    y, inner = _patch_standardize(p, eps)
    return y, lambda g: (T.overlap_add(inner(g), kh, kw),)


@primitive("standardize_instance")
def standardize_instance(x, *, eps: float = DEFAULT_EPS):
    T.check_rank4(x)
    mean_, std = T.reduce_mean_std(x, axes=(2, 3), eps=eps)
    y = (x - mean_) / std

    def vjp(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gy = (g * y).mean(axis=(2, 3), keepdims=True)
        return ((g - gm - y * gy) / std,)

    return y, vjp


@primitive("inject_adain")
def inject_adain(cbar, s, *, eps: float = DEFAULT_EPS):
    """``sigma_HW(s) * cbar + mu_HW(s)``, differentiable in both arguments."""
    if cbar.ndim != 4 or s.ndim != 4 or cbar.shape[:2] != s.shape[:2]:
        raise T.ShapeError(f"inject_adain: cbar {cbar.shape} vs s {s.shape}")
    mu, sigma = T.reduce_mean_std(s, axes=(2, 3), eps=eps)
    y = sigma * cbar + mu
    s_hat = (s - mu) / sigma
    count = s.shape[2] * s.shape[3]

    def vjp(g):
        g_sigma = (g * cbar).sum(axis=(2, 3), keepdims=True)
        g_mu = g.sum(axis=(2, 3), keepdims=True)
        return (g * sigma, g_mu / count + g_sigma * s_hat / count)

    return y, vjp


def _conv_vjp(cols, weights, g):
    """Gradients of ``conv_matmul`` w.r.t. the patch array, weights and bias."""
    n, o = g.shape[:2]
    gm = g.reshape(n, o, -1).transpose(0, 2, 1)  # (N, HW, O)
    wm = weights.reshape(o, -1)
    g_cols = (gm @ wm).reshape(cols.shape)
    g_flat = gm.reshape(-1, o)
    g_w = (g_flat.T @ cols.reshape(g_flat.shape[0], -1)).reshape(weights.shape)
    g_b = g_flat.sum(axis=0)
    return g_cols, g_w, g_b


@primitive("adaptive_conv")
def adaptive_conv(patches, weights, bias):
    """Correlate ``(N, H, W, C, kh, kw)`` patches with ``(O, C, kh, kw)`` weights plus bias."""
    if patches.ndim != 6 or patches.shape[3:] != weights.shape[1:] or bias.shape != weights.shape[:1]:
        raise T.ShapeError(f"adaptive_conv: patches {patches.shape}, weights {weights.shape}")
    y = conv_matmul(patches, weights, bias)
    return y, lambda g: _conv_vjp(patches, weights, g)


@primitive("conv2d")
def conv2d(x, weights, bias):
    """Stride-1 'same' convolution, unfold + matmul."""
    T.check_rank4(x)
    if x.shape[1] != weights.shape[1] or bias.shape != weights.shape[:1]:
        raise T.ShapeError(f"conv2d: x {x.shape}, weights {weights.shape}, bias {bias.shape}")
    kh, kw = weights.shape[2:]
    cols = T.unfold(x, kh, kw).patches
    y = conv_matmul(cols, weights, bias)

    def vjp(g):
        g_cols, g_w, g_b = _conv_vjp(cols, weights, g)
        return T.overlap_add(g_cols, kh, kw), g_w, g_b

    return y, vjp


@primitive("concat_channels")
def concat_channels(*xs):
    y = T.concat_channels(*xs)
    splits = np.cumsum([x.shape[1] for x in xs])[:-1]
    return y, lambda g: tuple(np.split(g, splits, axis=1))


@primitive("avg_pool2")
def avg_pool2(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise T.ShapeError(f"avg_pool2 needs even spatial dims, got {x.shape}")
    y = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return y, lambda g: (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0,)


@primitive("upsample2")
def upsample2(x):
    """Nearest-neighbour 2x upsampling."""
    y = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    n, c, h, w = x.shape
    return y, lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)


@primitive("global_avg_pool")
def global_avg_pool(x):
    """``(N, C, H, W) -> (N, C)``."""
    n, c, h, w = x.shape
    return x.mean(axis=(2, 3)), lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)
