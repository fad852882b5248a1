"""Style injection functions and their common convolutional form.

AdaIN's channel-wise affine map is a 1x1 depthwise convolution, whitening-
coloring is a full 1x1 convolution, and AdaCoN generalizes both with a
``kH x kW`` kernel predicted from a style code.  Every convolution here runs
through the same unfold + matmul path.

Kernels are stored ``(O, C, kH, kW)`` so that ``weights.reshape(O, -1)``
lines up with a flattened ``(C, kH, kW)`` patch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .normalizers import (
    DEFAULT_EPS,
    DEFAULT_SHRINK,
    EigenPair,
    channel_covariance,
    standardize_instance,
    symmetric_eigen,
    whiten,
)
from .tensor import PatchTensor, ShapeError, as_tensor, check_rank4, reduce_mean_std, unfold


@dataclass(frozen=True)
class AdaptiveKernel:
    weights: np.ndarray  # (O, C, kH, kW)
    bias: np.ndarray  # (O,)

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"kernel weights must be (O, C, kH, kW), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match O={self.weights.shape[0]}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


@dataclass
class PsiEncoder:
    """Affine map from a style code to an adaptive kernel and its bias.

    The kernel head produces ``O*C*kH*kW`` weights, the bias head ``O``
    values.  Both heads are trainable.
    """

    w_kernel: np.ndarray  # (O*C*kH*kW, d_s)
    b_kernel: np.ndarray  # (O*C*kH*kW,)
    w_bias: np.ndarray  # (O, d_s)
    b_bias: np.ndarray  # (O,)

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int, out_channels: int,
             kh: int, kw: int, style_dim: int) -> "PsiEncoder":
        # He-uniform on the code fan-in, shrunk so a unit-variance standardized
        # patch of C*kH*kW taps yields unit-order outputs.
        taps = channels * kh * kw
        bound = math.sqrt(6.0 / style_dim) / math.sqrt(taps)
        bias_bound = math.sqrt(3.0 / style_dim)
        n = out_channels * taps
        return cls(
            w_kernel=rng.uniform(-bound, bound, size=(n, style_dim)),
            b_kernel=np.zeros(n),
            w_bias=rng.uniform(-bias_bound, bias_bound, size=(out_channels, style_dim)),
            b_bias=np.zeros(out_channels),
        )

    @property
    def style_dim(self) -> int:
        return self.w_kernel.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w_kernel": self.w_kernel, "b_kernel": self.b_kernel,
                "w_bias": self.w_bias, "b_bias": self.b_bias}


def psi_forward(enc: PsiEncoder, z: np.ndarray, channels: int, out_channels: int,
                kh: int, kw: int) -> AdaptiveKernel:
    z = as_tensor(z)
    if z.ndim != 1 or z.shape[0] != enc.style_dim:
        raise ShapeError(f"style code must have shape ({enc.style_dim},), got {z.shape}")
    n = out_channels * channels * kh * kw
    if enc.w_kernel.shape[0] != n or enc.w_bias.shape[0] != out_channels:
        raise ShapeError("PsiEncoder dimensions do not match (C, O, kH, kW)")
    flat = enc.w_kernel @ z + enc.b_kernel
    bias = enc.w_bias @ z + enc.b_bias
    return AdaptiveKernel(flat.reshape(out_channels, channels, kh, kw), bias)


def conv_matmul(patches: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """``(N, H, W, C, kh, kw)`` patches times ``(O, C, kh, kw)`` weights -> ``(N, O, H, W)``."""
    n, h, w = patches.shape[:3]
    o = weights.shape[0]
    cols = patches.reshape(n, h * w, -1)
    out = cols @ weights.reshape(o, -1).T + bias
    return out.transpose(0, 2, 1).reshape(n, o, h, w)


def adaptive_conv(p: PatchTensor, k: AdaptiveKernel) -> np.ndarray:
    """Correlate every (standardized) patch with the kernel and add the bias."""
    if p.patches.shape[3:] != k.weights.shape[1:]:
        raise ShapeError(
            f"patch block {p.patches.shape[3:]} does not match kernel {k.weights.shape[1:]}"
        )
    return conv_matmul(p.patches, k.weights, k.bias)


def conv2d(x: np.ndarray, k: AdaptiveKernel) -> np.ndarray:
    """Stride-1 'same' convolution (cross-correlation) with zero padding."""
    x = as_tensor(x)
    check_rank4(x)
    _, _, kh, kw = k.weights.shape
    if x.shape[1] != k.weights.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {k.weights.shape[1]}")
    return adaptive_conv(unfold(x, kh, kw), k)


def inject_adain(cbar: np.ndarray, s: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Scale and shift each channel of ``cbar`` by the style's ``H x W`` std and mean."""
    cbar, s = as_tensor(cbar), as_tensor(s)
    check_rank4(cbar, "cbar")
    check_rank4(s, "s")
    if cbar.shape[1] != s.shape[1]:
        raise ShapeError(f"channel mismatch: content {cbar.shape[1]} vs style {s.shape[1]}")
    mu, sigma = reduce_mean_std(s, axes=(2, 3), eps=eps)
    return sigma * cbar + mu


def adain(c: np.ndarray, s: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    return inject_adain(standardize_instance(c, eps), s, eps)


def _check_coloring(cwhite: np.ndarray, eig_s: EigenPair, mu_s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cwhite = as_tensor(cwhite)
    check_rank4(cwhite, "cwhite")
    ch = cwhite.shape[1]
    mu_s = np.asarray(mu_s, dtype=cwhite.dtype).reshape(-1)
    if cwhite.shape[0] != 1 or eig_s.Q.shape != (ch, ch) or mu_s.shape != (ch,):
        raise ShapeError("coloring: dimension mismatch between features, eigenbasis and mean")
    return cwhite, mu_s


def coloring_matrix(eig_s: EigenPair) -> np.ndarray:
    return eig_s.power(0.5)


def inject_coloring(cwhite: np.ndarray, eig_s: EigenPair, mu_s: np.ndarray) -> np.ndarray:
    """``Q_s Lam_s^{1/2} Q_s^T cwhite + mu_s``."""
    cwhite, mu_s = _check_coloring(cwhite, eig_s, mu_s)
    ch = cwhite.shape[1]
    out = coloring_matrix(eig_s) @ cwhite.reshape(ch, -1) + mu_s[:, None]
    return out.reshape(cwhite.shape)


def coloring_as_conv1x1(cwhite: np.ndarray, eig_s: EigenPair, mu_s: np.ndarray) -> np.ndarray:
    """Coloring expressed as a full 1x1 convolution with bias ``mu_s``."""
    cwhite, mu_s = _check_coloring(cwhite, eig_s, mu_s)
    m = coloring_matrix(eig_s)
    kernel = AdaptiveKernel(m[:, :, None, None].copy(), mu_s.copy())
    return conv2d(cwhite, kernel)


def adain_as_conv1x1(cbar: np.ndarray, s: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """AdaIN injection as a diagonal (depthwise) 1x1 convolution, one sample at a time."""
    cbar, s = as_tensor(cbar), as_tensor(s)
    check_rank4(cbar, "cbar")
    check_rank4(s, "s")
    if cbar.shape[1] != s.shape[1] or cbar.shape[0] != s.shape[0]:
        raise ShapeError("adain_as_conv1x1: content/style batch or channel mismatch")
    mu, sigma = reduce_mean_std(s, axes=(2, 3), eps=eps)
    outs = []
    for n in range(cbar.shape[0]):
        weights = np.diag(sigma[n, :, 0, 0])[:, :, None, None]
        outs.append(conv2d(cbar[n:n + 1], AdaptiveKernel(weights, mu[n, :, 0, 0].copy())))
    return np.concatenate(outs, axis=0)


def gdwct(c: np.ndarray, s: np.ndarray, shrink: float = DEFAULT_SHRINK,
          eps: float = DEFAULT_EPS) -> np.ndarray:
    """Full-channel whitening of ``c`` followed by coloring with ``s``, per sample."""
    c, s = as_tensor(c), as_tensor(s)
    check_rank4(c, "c")
    check_rank4(s, "s")
    if c.shape[:2] != s.shape[:2]:
        raise ShapeError("gdwct: content/style batch or channel mismatch")
    outs = []
    for n in range(c.shape[0]):
        cn, sn = c[n:n + 1], s[n:n + 1]
        white = whiten(cn, symmetric_eigen(channel_covariance(cn, shrink)), eps)
        eig_s = symmetric_eigen(channel_covariance(sn, shrink))
        mu_s = sn.reshape(sn.shape[1], -1).mean(axis=1)
        outs.append(inject_coloring(white, eig_s, mu_s))
    return np.concatenate(outs, axis=0)
