"""Standardization functions that strip a feature map of its own style.

* :func:`standardize_local` - per-patch, per-channel standardization over the
  ``kH x kW`` extent of every unfolded block (the AdaCoN normalizer).
* :func:`standardize_instance` - per-channel standardization over ``H x W``
  (instance norm, the AdaIN normalizer).
* :func:`whiten` - ZCA whitening with the channel covariance eigenbasis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import PatchTensor, ShapeError, as_tensor, check_rank4, reduce_mean_std, unfold

DEFAULT_EPS = 1e-5
DEFAULT_SHRINK = 1e-4


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition ``a = Q diag(lam) Q^T`` with columns of ``Q`` as eigenvectors."""

    Q: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.Q * self.lam) @ self.Q.T

    def power(self, p: float, floor: float = 0.0) -> np.ndarray:
        """``Q diag(max(lam, floor)^p) Q^T``."""
        lam = np.maximum(self.lam, floor)
        return (self.Q * lam**p) @ self.Q.T


def standardize_local(zc: np.ndarray, kh: int, kw: int, eps: float = DEFAULT_EPS) -> PatchTensor:
    p = unfold(zc, kh, kw)
    mean, std = reduce_mean_std(p.patches, axes=(4, 5), eps=eps)
    return p.with_patches((p.patches - mean) / std)


def standardize_instance(c: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    c = as_tensor(c)
    check_rank4(c, "c")
    mean, std = reduce_mean_std(c, axes=(2, 3), eps=eps)
    return (c - mean) / std


def channel_covariance(x: np.ndarray, shrink: float = DEFAULT_SHRINK) -> np.ndarray:
    """Per-sample ``C x C`` covariance ``Xc Xc^T / (H*W) + shrink * I``."""
    x = as_tensor(x)
    check_rank4(x)
    if x.shape[0] != 1:
        raise ShapeError(f"channel_covariance expects a single sample (N=1), got N={x.shape[0]}")
    c = x.shape[1]
    flat = x.reshape(c, -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    return centered @ centered.T / flat.shape[1] + shrink * np.eye(c, dtype=x.dtype)


def symmetric_eigen(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> EigenPair:
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Eigenvalues are clamped at zero and sorted descending; each eigenvector is
    signed so that its first nonzero component is positive.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"symmetric_eigen needs a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10):
        raise ShapeError("symmetric_eigen: matrix is not symmetric to 1e-10")
    a = (a + a.T) / 2
    n = a.shape[0]
    v = np.eye(n)

    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a)))
        if n < 2 or off.max() < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    lam = np.maximum(np.diag(a).copy(), 0.0)
    order = np.argsort(-lam, kind="stable")
    lam, v = lam[order], v[:, order]
    for j in range(n):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-12)
        if nz.size and v[nz[0], j] < 0:
            v[:, j] = -v[:, j]
    return EigenPair(v, lam)


def whiten(c: np.ndarray, eig: EigenPair, eps: float = DEFAULT_EPS) -> np.ndarray:
    """``Q Lam^{-1/2} Q^T (c - mean_HW(c))`` for a single-sample feature map."""
    c = as_tensor(c)
    check_rank4(c, "c")
    if c.shape[0] != 1:
        raise ShapeError("whiten expects a single sample (N=1)")
    ch = c.shape[1]
    if eig.Q.shape != (ch, ch):
        raise ShapeError(f"eigenbasis shape {eig.Q.shape} does not match C={ch}")
    flat = c.reshape(ch, -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    return (eig.power(-0.5, floor=eps) @ centered).reshape(c.shape)
