"""Property battery run by ``stylenorm verify``.

Each property is a zero-argument callable returning ``(passed, detail)``.
All randomness is seeded, so two runs print identical reports.
"""
from __future__ import annotations

import sys
from typing import Callable

import numpy as np

from . import reference as ref
from .adacon import AdaConBlock, AdaConConfig
from .autodiff import PRIMITIVES
from .gradcheck import GRADCHECK_CASES
from .injectors import (
    AdaptiveKernel,
    adain_as_conv1x1,
    adaptive_conv,
    coloring_as_conv1x1,
    conv2d,
    inject_adain,
    inject_coloring,
)
from .io import decode_atns, decode_ppm, encode_atns, encode_ppm
from .normalizers import (
    channel_covariance,
    standardize_instance,
    standardize_local,
    symmetric_eigen,
    whiten,
)
from .tensor import fold, reduce_mean_std, unfold

Property = Callable[[], tuple[bool, str]]
PROPERTIES: dict[str, Property] = {}


def prop(name: str):
    def deco(fn):
        PROPERTIES[name] = fn
        return fn

    return deco


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng([2024, tag])


def well_conditioned(rng: np.random.Generator, c: int, h: int, w: int, min_eig: float = 1e-3) -> np.ndarray:
    """Random ``(1, C, H, W)`` map whose channel covariance has eigenvalues > ``min_eig``."""
    while True:
        mix = rng.standard_normal((c, c)) + 2.0 * np.eye(c)
        x = (mix @ rng.standard_normal((c, h * w))).reshape(1, c, h, w) + rng.normal(size=(1, c, 1, 1))
        if np.linalg.eigvalsh(channel_covariance(x, 0.0)).min() > min_eig:
            return x


@prop("unfold_matches_loop_oracle")
def _unfold_oracle():
    rng = _rng(1)
    worst = 0.0
    for k in (1, 3, 5):
        x = rng.standard_normal((2, 3, 5, 5))
        worst = max(worst, float(np.abs(unfold(x, k, k).patches - ref.unfold_loop(x, k, k)).max()))
    return worst == 0.0, f"max|diff|={worst:.1e}"


@prop("fold_unfold_roundtrip")
def _fold_roundtrip():
    rng = _rng(2)
    worst = 0.0
    for k in (1, 3, 7):
        x = rng.standard_normal((2, 3, 6, 5))
        worst = max(worst, float(np.abs(fold(unfold(x, k, k)) - x).max()))
    return worst < 1e-12, f"max|diff|={worst:.1e}"


@prop("mean_std_two_pass")
def _mean_std():
    x = _rng(3).standard_normal((2, 4, 8, 8))
    mean, std = reduce_mean_std(x, axes=(2, 3), eps=1e-5)
    worst = 0.0
    for n in range(2):
        for c in range(4):
            m, s = ref.mean_std_loop(x[n, c], 1e-5)
            worst = max(worst, abs(m - mean[n, c, 0, 0]), abs(s - std[n, c, 0, 0]))
    return worst < 1e-12, f"max|diff|={worst:.1e}"


@prop("standardize_local_statistics")
def _local_stats():
    rng = _rng(4)
    worst_mean = worst_var = 0.0
    for k in (3, 5):
        x = rng.standard_normal((2, 3, 8, 8))
        p = standardize_local(x, k, k, 1e-5).patches
        raw = unfold(x, k, k).patches.var(axis=(4, 5))
        ok = raw >= 0.1
        worst_mean = max(worst_mean, float(np.abs(p.mean(axis=(4, 5))).max()))
        worst_var = max(worst_var, float(np.abs(p.var(axis=(4, 5))[ok] - 1).max()))
    return worst_mean < 1e-6 and worst_var < 1e-3, f"max|mean|={worst_mean:.1e} max|var-1|={worst_var:.1e}"


@prop("standardize_instance_idempotent")
def _instance_idem():
    x = _rng(5).standard_normal((2, 3, 6, 6)) * 3 + 1
    once = standardize_instance(x, 0.0)
    diff = float(np.abs(standardize_instance(once, 0.0) - once).max())
    return diff < 1e-10, f"max|diff|={diff:.1e}"


@prop("eigen_orthogonal_reconstructs")
def _eigen():
    a = _rng(6).standard_normal((8, 8))
    a = a + a.T
    eig = symmetric_eigen(a)
    ortho = float(np.abs(eig.Q.T @ eig.Q - np.eye(8)).max())
    spd = a @ a.T
    e2 = symmetric_eigen(spd)
    recon = float(np.abs(e2.reconstruct() - spd).max())
    ok = ortho < 1e-8 and recon < 1e-9 and bool((e2.lam >= 0).all())
    return ok, f"orthogonality={ortho:.1e} reconstruction={recon:.1e}"


@prop("whiten_identity_covariance")
def _whiten():
    worst = 0.0
    rng = _rng(7)
    for _ in range(5):
        x = well_conditioned(rng, 6, 8, 8)
        white = whiten(x, symmetric_eigen(channel_covariance(x, 0.0)), 1e-5)
        worst = max(worst, float(np.linalg.norm(channel_covariance(white, 0.0) - np.eye(6))))
    return worst < 1e-6, f"max frobenius={worst:.1e}"


@prop("coloring_covariance_transfer")
def _coloring():
    worst = worst_mu = 0.0
    rng = _rng(8)
    for _ in range(5):
        c, s = well_conditioned(rng, 6, 8, 8), well_conditioned(rng, 6, 8, 8)
        white = whiten(c, symmetric_eigen(channel_covariance(c, 0.0)), 1e-5)
        cov_s = channel_covariance(s, 0.0)
        mu_s = s.reshape(6, -1).mean(axis=1)
        out = inject_coloring(white, symmetric_eigen(cov_s), mu_s)
        worst = max(worst, float(np.linalg.norm(channel_covariance(out, 0.0) - cov_s)))
        worst_mu = max(worst_mu, float(np.abs(out.reshape(6, -1).mean(axis=1) - mu_s).max()))
    return worst < 1e-5 and worst_mu < 1e-10, f"max frobenius={worst:.1e} max|mean diff|={worst_mu:.1e}"


@prop("whiten_color_roundtrip")
def _roundtrip():
    x = well_conditioned(_rng(9), 5, 8, 8)
    eig = symmetric_eigen(channel_covariance(x))
    out = inject_coloring(whiten(x, eig, 1e-5), eig, x.reshape(5, -1).mean(axis=1))
    diff = float(np.abs(out - x).max())
    return diff < 1e-4, f"max|diff|={diff:.1e}"


@prop("adain_statistic_transfer")
def _adain():
    rng = _rng(10)
    c = rng.standard_normal((2, 4, 6, 6)) * 2 + 1
    s = rng.standard_normal((2, 4, 6, 6)) * 3 - 2
    out = inject_adain(standardize_instance(c, 0.0), s, 0.0)
    mo, so = ref.channel_stats_loop(out)
    ms, ss = ref.channel_stats_loop(s)
    worst = float(max(np.abs(mo - ms).max(), np.abs(so - ss).max()))
    return worst < 1e-6, f"max|stat diff|={worst:.1e}"


@prop("adain_equals_depthwise_conv1x1")
def _adain_conv():
    rng = _rng(11)
    cbar = standardize_instance(rng.standard_normal((2, 4, 5, 5)))
    s = rng.standard_normal((2, 4, 5, 5))
    diff = float(np.abs(adain_as_conv1x1(cbar, s) - inject_adain(cbar, s)).max())
    return diff < 1e-10, f"max|diff|={diff:.1e}"


@prop("coloring_equals_full_conv1x1")
def _coloring_conv():
    rng = _rng(12)
    c, s = well_conditioned(rng, 5, 6, 6), well_conditioned(rng, 5, 6, 6)
    white = whiten(c, symmetric_eigen(channel_covariance(c)))
    eig_s = symmetric_eigen(channel_covariance(s))
    mu_s = s.reshape(5, -1).mean(axis=1)
    diff = float(np.abs(coloring_as_conv1x1(white, eig_s, mu_s) - inject_coloring(white, eig_s, mu_s)).max())
    return diff < 1e-10, f"max|diff|={diff:.1e}"


@prop("adaptive_conv_matches_loop_oracle")
def _adaptive_conv():
    rng = _rng(13)
    worst = 0.0
    for k in (1, 3, 7):
        x = rng.standard_normal((1, 3, 7, 6))
        p = standardize_local(x, k, k)
        kern = AdaptiveKernel(rng.standard_normal((4, 3, k, k)), rng.standard_normal(4))
        worst = max(worst, float(np.abs(adaptive_conv(p, kern) - ref.patch_conv_loop(p.patches, kern.weights, kern.bias)).max()))
    return worst < 1e-10, f"max|diff|={worst:.1e}"


@prop("conv2d_matches_loop_oracle")
def _conv2d():
    rng = _rng(14)
    worst = 0.0
    for k in (1, 3, 5):
        x = rng.standard_normal((2, 3, 6, 6))
        kern = AdaptiveKernel(rng.standard_normal((2, 3, k, k)), rng.standard_normal(2))
        worst = max(worst, float(np.abs(conv2d(x, kern) - ref.conv2d_loop(x, kern.weights, kern.bias)).max()))
    return worst < 1e-10, f"max|diff|={worst:.1e}"


@prop("style_branch_affine_invariant")
def _affine_invariance():
    rng = _rng(15)
    block = AdaConBlock(AdaConConfig(channels=4, out_channels=6, style_dim=5), rng=rng)
    zc = rng.standard_normal((1, 4, 8, 8))
    zs = rng.standard_normal(5)
    base = block.style_branch(zc, zs)
    # eps effects stay below 1e-4 only where every channel's patch variance is >= 0.1
    spread = unfold(zc, 3, 3).patches.var(axis=(4, 5)).min(axis=3)[:, None] >= 0.1
    mask = np.broadcast_to(spread, base.shape)
    # a shift does not reach the zero padding, so only fully interior patches are shift invariant
    interior = np.zeros_like(mask)
    interior[..., 1:-1, 1:-1] = True
    d_scale = float(np.abs(base - block.style_branch(2.5 * zc, zs))[mask].max())
    d_shift = float(np.abs(base - block.style_branch(2.5 * zc + 0.7, zs))[mask & interior].max())
    return max(d_scale, d_shift) < 1e-4, f"scale max|diff|={d_scale:.1e} shift interior max|diff|={d_shift:.1e}"


@prop("content_branch_ignores_style")
def _content_branch():
    rng = _rng(16)
    block = AdaConBlock(AdaConConfig(channels=4, out_channels=6, style_dim=5), rng=rng)
    zc = rng.standard_normal((1, 4, 6, 6))
    a = block.content_branch(zc)
    b = block.content_branch(zc)
    return bool(np.array_equal(a, b)), "bit-identical"


@prop("gradcheck_manifest_covers_registry")
def _manifest():
    missing = sorted(set(PRIMITIVES) - set(GRADCHECK_CASES))
    extra = sorted(set(GRADCHECK_CASES) - set(PRIMITIVES))
    return not missing and not extra, f"missing={missing} extra={extra}"


@prop("atns_roundtrip")
def _atns():
    rng = _rng(17)
    ok = True
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal((2, 3, 4)).astype(dtype)
        y = decode_atns(encode_atns(x))
        ok &= y.dtype == x.dtype and np.array_equal(x, y)
    return bool(ok), "f32 and f64 exact"


@prop("ppm_roundtrip")
def _ppm():
    pix = _rng(18).integers(0, 256, size=(1, 3, 5, 7))
    x = pix / 127.5 - 1.0
    y = decode_ppm(encode_ppm(x))
    return bool(np.array_equal(x, y)), "8-bit lattice exact"


def run_verify(properties: dict[str, Property] | None = None, out=None) -> int:
    """Print one line per property; return 0 iff every property passes."""
    properties = PROPERTIES if properties is None else properties
    out = out or sys.stdout
    failed = []
    for name, fn in properties.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing property is a failing property
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}", file=out)
        if not ok:
            failed.append(name)
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0
