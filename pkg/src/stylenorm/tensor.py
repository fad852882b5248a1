"""Dense tensor helpers: shape-checked arithmetic, moments and unfold/fold.

Tensors are plain ``numpy.ndarray`` values (float32 or float64).  Feature
maps are rank-4 ``(N, C, H, W)``.  Patch tensors produced by :func:`unfold`
use the layout ``(N, H, W, C, kH, kW)``: one ``C x kH x kW`` block per output
position, ordered row-major by position.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when tensor shapes or arguments violate an operation contract."""


def as_tensor(x, dtype=None) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype not in DTYPES:
        arr = arr.astype(np.float64)
    return arr


def check_rank4(x: np.ndarray, name: str = "x") -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 (N, C, H, W), got shape {x.shape}")


def check_kernel(kh: int, kw: int) -> None:
    for k in (kh, kw):
        if int(k) != k or k < 1 or k % 2 == 0:
            raise ShapeError(f"kernel sizes must be odd and >= 1, got ({kh}, {kw})")


@dataclass(frozen=True)
class PatchTensor:
    """Unfolded view of a feature map.

    ``patches[n, i, j]`` is the ``C x kH x kW`` block of the zero-padded source
    whose top-left corner sits at padded coordinate ``(i, j)``.
    """

    patches: np.ndarray
    source_shape: tuple[int, int, int, int]
    kernel: tuple[int, int]
    padding: tuple[int, int]

    def __post_init__(self):
        n, c, h, w = self.source_shape
        kh, kw = self.kernel
        if self.patches.shape != (n, h, w, c, kh, kw):
            raise ShapeError(
                f"patches shape {self.patches.shape} inconsistent with source "
                f"{self.source_shape} and kernel {self.kernel}"
            )
        if self.padding != ((kh - 1) // 2, (kw - 1) // 2):
            raise ShapeError(f"padding {self.padding} is not 'same' for kernel {self.kernel}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.patches.shape

    def matrix(self) -> np.ndarray:
        """Patches as ``(N, H*W, C*kH*kW)``."""
        n, h, w, c, kh, kw = self.patches.shape
        return self.patches.reshape(n, h * w, c * kh * kw)

    def with_patches(self, patches: np.ndarray) -> "PatchTensor":
        return PatchTensor(patches, self.source_shape, self.kernel, self.padding)


def unfold(x: np.ndarray, kh: int, kw: int) -> PatchTensor:
    """Gather every stride-1 ``kh x kw`` block of the zero-padded input."""
    x = as_tensor(x)
    check_rank4(x)
    check_kernel(kh, kw)
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, H, W, kh, kw)
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return PatchTensor(patches, tuple(x.shape), (kh, kw), (ph, pw))


def overlap_add(patches: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Adjoint of :func:`unfold`: scatter-add ``(N, H, W, C, kh, kw)`` patches
    back onto an ``(N, C, H, W)`` grid, discarding the padding border."""
    n, h, w, c = patches.shape[:4]
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=patches.dtype)
    src = np.ascontiguousarray(patches.transpose(4, 5, 0, 3, 1, 2))  # (kh, kw, N, C, H, W)
    for k in range(kh):
        for l in range(kw):
            out[:, :, k:k + h, l:l + w] += src[k, l]
    return out[:, :, ph:ph + h, pw:pw + w]


def fold(p: PatchTensor) -> np.ndarray:
    """Overlap-add the patches and divide by how many patches cover each pixel."""
    kh, kw = p.kernel
    summed = overlap_add(p.patches, kh, kw)
    n, c, h, w = p.source_shape
    ones = np.ones((1, 1, h, w), dtype=p.patches.dtype)
    counts = overlap_add(unfold(ones, kh, kw).patches, kh, kw)
    # counts only include in-bounds taps, so it is >= 1 everywhere
    return summed / counts


def reduce_mean_std(x: np.ndarray, axes: Sequence[int], eps: float = 1e-5):
    """Population mean and ``sqrt(var + eps)`` over ``axes`` (kept as size-1 dims)."""
    x = as_tensor(x)
    axes = tuple(a % x.ndim for a in axes)
    if len(set(axes)) != len(axes):
        raise ShapeError(f"reduction axes must be distinct, got {axes}")
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ShapeError("empty reduction extent")
    mean = x.mean(axis=axes, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axes, keepdims=True)
    return mean, np.sqrt(var + eps)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def _same_shape(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b, "add")
    return a + b


def sub(a, b) -> np.ndarray:
    a, b = _same_shape(a, b, "sub")
    return a - b


def mul_scalar(a, s: float) -> np.ndarray:
    return as_tensor(a) * s


def concat_channels(*xs: np.ndarray) -> np.ndarray:
    xs = [as_tensor(x) for x in xs]
    for x in xs:
        check_rank4(x)
    ref = xs[0].shape
    for x in xs[1:]:
        if (x.shape[0], x.shape[2], x.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels: N/H/W mismatch {ref} vs {x.shape}")
    return np.concatenate(xs, axis=1)
