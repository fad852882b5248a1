"""The AdaCoN layer: style branch, content branch and joining convolution.

    style branch    adaptive_conv(standardize_local(zc), psi(zs))   -> O channels
    content branch  conv3x3(zc)                                     -> content_out channels
    join            conv1x1(concat(style, content))                 -> fuse_out channels

The graph is written once against :mod:`stylenorm.autodiff`; the numpy entry
points evaluate it on constants.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .injectors import PsiEncoder
from .normalizers import DEFAULT_EPS
from .tensor import ShapeError, check_kernel


@dataclass(frozen=True)
class AdaConConfig:
    channels: int
    out_channels: int = 128  # O, the style-branch width
    kh: int = 3
    kw: int = 3
    style_dim: int = 8
    content_out: int | None = None
    fuse_out: int | None = None
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        check_kernel(self.kh, self.kw)
        for name in ("channels", "out_channels", "style_dim"):
            if getattr(self, name) < 1:
                raise ShapeError(f"AdaConConfig.{name} must be positive")
        if self.eps <= 0:
            raise ShapeError("AdaConConfig.eps must be positive")

    @property
    def content_channels(self) -> int:
        return self.content_out or self.channels

    @property
    def fused_channels(self) -> int:
        return self.fuse_out or self.channels

    def to_dict(self) -> dict:
        return asdict(self)


def he_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


def init_params(cfg: AdaConConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    psi = PsiEncoder.init(rng, cfg.channels, cfg.out_channels, cfg.kh, cfg.kw, cfg.style_dim)
    cout = cfg.content_channels
    params = {f"psi.{k}": v for k, v in psi.params().items()}
    params["content.w"] = he_normal(rng, (cout, cfg.channels, 3, 3))
    params["content.b"] = np.zeros(cout)
    params["fuse.w"] = he_normal(rng, (cfg.fused_channels, cfg.out_channels + cout, 1, 1))
    params["fuse.b"] = np.zeros(cfg.fused_channels)
    return params


def style_branch(P: Mapping[str, ad.Node], cfg: AdaConConfig, zc: ad.Node, zs: ad.Node) -> ad.Node:
    shape = (cfg.out_channels, cfg.channels, cfg.kh, cfg.kw)
    weights = ad.psi_weights(zs, P["psi.w_kernel"], P["psi.b_kernel"], shape=shape)
    bias = ad.linear(zs, P["psi.w_bias"], P["psi.b_bias"])
    zbar = ad.standardize_local(zc, kh=cfg.kh, kw=cfg.kw, eps=cfg.eps)
    return ad.adaptive_conv(zbar, weights, bias)


def content_branch(P: Mapping[str, ad.Node], cfg: AdaConConfig, zc: ad.Node) -> ad.Node:
    return ad.conv2d(zc, P["content.w"], P["content.b"])


def adacon_graph(P: Mapping[str, ad.Node], cfg: AdaConConfig, zc, zs) -> ad.Node:
    zc, zs = ad.const(zc), ad.const(zs)
    if zc.value.ndim != 4 or zc.value.shape[1] != cfg.channels:
        raise ShapeError(f"content feature {zc.value.shape} does not match C={cfg.channels}")
    if zs.value.shape != (cfg.style_dim,):
        raise ShapeError(f"style code {zs.value.shape} does not match d_s={cfg.style_dim}")
    joined = ad.concat_channels(style_branch(P, cfg, zc, zs), content_branch(P, cfg, zc))
    return ad.conv2d(joined, P["fuse.w"], P["fuse.b"])


class AdaConBlock:
    """Parameter container plus numpy forward for one AdaCoN layer."""

    def __init__(self, config: AdaConConfig, params: dict[str, np.ndarray] | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config
        if params is None:
            params = init_params(config, rng if rng is not None else np.random.default_rng(0))
        missing = set(_PARAM_KEYS) - set(params)
        if missing:
            raise ShapeError(f"AdaConBlock params missing {sorted(missing)}")
        if params["fuse.w"].shape[1] != config.out_channels + config.content_channels:
            raise ShapeError("fuse conv input channels must equal O + content_out")
        self.params = params

    def _consts(self) -> dict[str, ad.Node]:
        return {k: ad.const(v) for k, v in self.params.items()}

    def forward(self, zc: np.ndarray, zs: np.ndarray) -> np.ndarray:
        return adacon_graph(self._consts(), self.config, zc, zs).value

    __call__ = forward

    def style_branch(self, zc: np.ndarray, zs: np.ndarray) -> np.ndarray:
        return style_branch(self._consts(), self.config, ad.const(zc), ad.const(zs)).value

    def content_branch(self, zc: np.ndarray) -> np.ndarray:
        return content_branch(self._consts(), self.config, ad.const(zc)).value


_PARAM_KEYS = ("psi.w_kernel", "psi.b_kernel", "psi.w_bias", "psi.b_bias",
               "content.w", "content.b", "fuse.w", "fuse.b")


def adacon_forward(block: AdaConBlock, zc: np.ndarray, zs: np.ndarray) -> np.ndarray:
    return block.forward(zc, zs)


def style_sensitivity(block: AdaConBlock, zc: np.ndarray, zs1: np.ndarray, zs2: np.ndarray) -> float:
    """Relative change of the block output when the style code is swapped."""
    y1 = block.forward(zc, zs1)
    y2 = block.forward(zc, zs2)
    denom = np.linalg.norm(y1)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(y1 - y2) / denom)
