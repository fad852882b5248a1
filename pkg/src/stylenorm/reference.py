"""Direct loop-nest implementations used as independent oracles.

None of these share code with the unfold + matmul fast path.  They are slow
by design; keep inputs small.
"""
from __future__ import annotations

import math

import numpy as np


def padded(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    for a in range(n):
        for b in range(c):
            for i in range(h):
                for j in range(w):
                    out[a, b, i + ph, j + pw] = x[a, b, i, j]
    return out


def unfold_loop(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    n, c, h, w = x.shape
    xp = padded(x, (kh - 1) // 2, (kw - 1) // 2)
    out = np.zeros((n, h, w, c, kh, kw))
    for a in range(n):
        for i in range(h):
            for j in range(w):
                for b in range(c):
                    for k in range(kh):
                        for l in range(kw):
                            out[a, i, j, b, k, l] = xp[a, b, i + k, j + l]
    return out


def mean_std_loop(values, eps: float) -> tuple[float, float]:
    """Two-pass population mean and ``sqrt(var + eps)``."""
    vals = [float(v) for v in np.ravel(values)]
    m = sum(vals) / len(vals)
    var = sum((v - m) ** 2 for v in vals) / len(vals)
    return m, math.sqrt(var + eps)


def standardize_local_loop(x: np.ndarray, kh: int, kw: int, eps: float) -> np.ndarray:
    p = unfold_loop(x, kh, kw)
    out = np.zeros_like(p)
    n, h, w, c = p.shape[:4]
    for a in range(n):
        for i in range(h):
            for j in range(w):
                for b in range(c):
                    m, s = mean_std_loop(p[a, i, j, b], eps)
                    for k in range(kh):
                        for l in range(kw):
                            out[a, i, j, b, k, l] = (p[a, i, j, b, k, l] - m) / s
    return out


def matmul_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def patch_conv_loop(patches: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """``out[n, o, i, j] = bias[o] + sum_{c,k,l} patches[n, i, j, c, k, l] * weights[o, c, k, l]``."""
    n, h, w, c, kh, kw = patches.shape
    o_ch = weights.shape[0]
    out = np.zeros((n, o_ch, h, w))
    for a in range(n):
        for o in range(o_ch):
            for i in range(h):
                for j in range(w):
                    acc = float(bias[o])
                    for k in range(kh):
                        for l in range(kw):
                            acc += float(np.dot(patches[a, i, j, :, k, l], weights[o, :, k, l]))
                    out[a, o, i, j] = acc
    return out


def conv2d_loop(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' cross-correlation indexed directly on the padded input."""
    n, c, h, w = x.shape
    o_ch, _, kh, kw = weights.shape
    xp = padded(x, (kh - 1) // 2, (kw - 1) // 2)
    out = np.zeros((n, o_ch, h, w))
    for a in range(n):
        for o in range(o_ch):
            for i in range(h):
                for j in range(w):
                    acc = float(bias[o])
                    for k in range(kh):
                        for l in range(kw):
                            acc += float(np.dot(xp[a, :, i + k, j + l], weights[o, :, k, l]))
                    out[a, o, i, j] = acc
    return out


def covariance_loop(x: np.ndarray) -> np.ndarray:
    """Population channel covariance of a single-sample ``(1, C, H, W)`` map."""
    _, c, h, w = x.shape
    flat = x.reshape(c, h * w)
    means = [sum(flat[a]) / (h * w) for a in range(c)]
    out = np.zeros((c, c))
    for a in range(c):
        for b in range(c):
            out[a, b] = sum((flat[a, t] - means[a]) * (flat[b, t] - means[b]) for t in range(h * w)) / (h * w)
    return out


def channel_stats_loop(x: np.ndarray, eps: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Per ``(n, c)`` mean and ``sqrt(var + eps)`` over ``H x W``."""
    n, c = x.shape[:2]
    mu, sd = np.zeros((n, c)), np.zeros((n, c))
    for a in range(n):
        for b in range(c):
            mu[a, b], sd[a, b] = mean_std_loop(x[a, b], eps)
    return mu, sd
