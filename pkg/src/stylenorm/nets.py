"""Desk-scale two-domain translation networks built around one AdaCoN block.

Parameters live in a flat ``name -> ndarray`` dict.  Names are prefixed by
network (``EcA.``, ``EsB.``, ``GA.``, ``DB.`` ...) so the generator and
discriminator partitions are a prefix test.  Downsampling is conv + 2x2
average pooling; upsampling is nearest-neighbour + conv.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .adacon import AdaConBlock, AdaConConfig, adacon_graph, he_normal
from .adacon import init_params as init_adacon
from .tensor import ShapeError

GENERATOR_PREFIXES = ("EcA.", "EcB.", "EsA.", "EsB.", "GA.", "GB.")
DISCRIMINATOR_PREFIXES = ("DA.", "DB.")
SLOPE = 0.2


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    image_channels: int = 3
    base: int = 16
    content_channels: int = 64
    style_dim: int = 8
    style_out: int = 128  # O
    kernel: int = 3
    adacon_blocks: int = 1
    eps: float = 1e-5

    def __post_init__(self):
        if self.image_size % 8:
            raise ShapeError("image_size must be a multiple of 8")
        if self.adacon_blocks < 1:
            raise ShapeError("adacon_blocks must be >= 1")

    def adacon(self) -> AdaConConfig:
        return AdaConConfig(channels=self.content_channels, out_channels=self.style_out,
                            kh=self.kernel, kw=self.kernel, style_dim=self.style_dim, eps=self.eps)

    def to_dict(self) -> dict:
        return asdict(self)


def _conv(params, rng, name, cin, cout, k=3):
    params[f"{name}.w"] = he_normal(rng, (cout, cin, k, k))
    params[f"{name}.b"] = np.zeros(cout)


def init_model_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """He-initialized parameters for all eight networks."""
    b, c, ic = cfg.base, cfg.content_channels, cfg.image_channels
    params: dict[str, np.ndarray] = {}
    for dom in "AB":
        _conv(params, rng, f"Ec{dom}.0", ic, b)
        _conv(params, rng, f"Ec{dom}.1", b, 2 * b)
        _conv(params, rng, f"Ec{dom}.2", 2 * b, c)

        _conv(params, rng, f"Es{dom}.0", ic, b)
        _conv(params, rng, f"Es{dom}.1", b, 2 * b)
        _conv(params, rng, f"Es{dom}.2", 2 * b, 2 * b)
        _conv(params, rng, f"Es{dom}.3", 2 * b, 2 * b)
        params[f"Es{dom}.fc.w"] = he_normal(rng, (cfg.style_dim, 2 * b))
        params[f"Es{dom}.fc.b"] = np.zeros(cfg.style_dim)

        for i in range(cfg.adacon_blocks):
            for k, v in init_adacon(cfg.adacon(), rng).items():
                params[f"G{dom}.ada{i}.{k}"] = v
        _conv(params, rng, f"G{dom}.up0", c, 2 * b)
        _conv(params, rng, f"G{dom}.up1", 2 * b, ic)

        _conv(params, rng, f"D{dom}.0", ic, b)
        _conv(params, rng, f"D{dom}.1", b, 2 * b)
        _conv(params, rng, f"D{dom}.2", 2 * b, 4 * b)
        _conv(params, rng, f"D{dom}.3", 4 * b, 1)
    return params


def _c(P, name, x):
    return ad.conv2d(x, P[f"{name}.w"], P[f"{name}.b"])


def _act(x):
    return ad.leaky_relu(x, slope=SLOPE)


def content_encoder(P: Mapping[str, ad.Node], dom: str, x) -> ad.Node:
    """``(1, 3, S, S) -> (1, C, S/4, S/4)``."""
    h = _act(_c(P, f"Ec{dom}.0", x))
    h = _act(ad.avg_pool2(_c(P, f"Ec{dom}.1", h)))
    return _act(ad.avg_pool2(_c(P, f"Ec{dom}.2", h)))


def style_encoder(P: Mapping[str, ad.Node], dom: str, x) -> ad.Node:
    """``(1, 3, S, S) -> (d_s,)`` style code."""
    h = _act(_c(P, f"Es{dom}.0", x))
    for i in (1, 2, 3):
        h = _act(ad.avg_pool2(_c(P, f"Es{dom}.{i}", h)))
    code = ad.linear(ad.global_avg_pool(h), P[f"Es{dom}.fc.w"], P[f"Es{dom}.fc.b"])
    return ad.reshape(code, shape=(code.value.shape[-1],))


def _block_params(P, prefix):
    return {k[len(prefix):]: v for k, v in P.items() if k.startswith(prefix)}


def decoder(P: Mapping[str, ad.Node], cfg: ModelConfig, dom: str, zc, zs) -> ad.Node:
    """AdaCoN block(s) then two upsample-conv stages and tanh."""
    acfg = cfg.adacon()
    h = zc
    for i in range(cfg.adacon_blocks):
        h = _act(adacon_graph(_block_params(P, f"G{dom}.ada{i}."), acfg, h, zs))
    h = _act(_c(P, f"G{dom}.up0", ad.upsample2(h)))
    return ad.tanh(_c(P, f"G{dom}.up1", ad.upsample2(h)))


def discriminator(P: Mapping[str, ad.Node], dom: str, x) -> ad.Node:
    """Patch discriminator: ``(1, 3, S, S) -> (1, 1, S/8, S/8)``."""
    h = x
    for i in range(3):
        h = _act(ad.avg_pool2(_c(P, f"D{dom}.{i}", h)))
    return _c(P, f"D{dom}.3", h)


@dataclass
class TranslationModel:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0) -> "TranslationModel":
        return cls(config, init_model_params(config, np.random.default_rng(seed)))

    def consts(self) -> dict[str, ad.Node]:
        return {k: ad.const(v) for k, v in self.params.items()}

    def generator_names(self) -> list[str]:
        return sorted(k for k in self.params if k.startswith(GENERATOR_PREFIXES))

    def discriminator_names(self) -> list[str]:
        return sorted(k for k in self.params if k.startswith(DISCRIMINATOR_PREFIXES))

    def adacon_block(self, dom: str = "B", index: int = 0) -> AdaConBlock:
        return AdaConBlock(self.config.adacon(), _block_params(self.params, f"G{dom}.ada{index}."))

    def check_image(self, x: np.ndarray) -> None:
        s = self.config.image_size
        if np.shape(x) != (1, self.config.image_channels, s, s):
            raise ShapeError(f"expected image of shape (1, {self.config.image_channels}, {s}, {s}), got {np.shape(x)}")


def translate(m: TranslationModel, x_a: np.ndarray, x_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cross-domain outputs ``(x_A->B, x_B->A)``."""
    m.check_image(x_a)
    m.check_image(x_b)
    P, cfg = m.consts(), m.config
    x_ab = decoder(P, cfg, "B", content_encoder(P, "A", x_a), style_encoder(P, "B", x_b))
    x_ba = decoder(P, cfg, "A", content_encoder(P, "B", x_b), style_encoder(P, "A", x_a))
    return x_ab.value, x_ba.value


def translate_one(m: TranslationModel, content: np.ndarray, style: np.ndarray,
                  direction: str = "AtoB") -> np.ndarray:
    """Translate ``content`` using the style of ``style`` (``AtoB`` or ``BtoA``)."""
    if direction not in ("AtoB", "BtoA"):
        raise ValueError(f"direction must be AtoB or BtoA, got {direction!r}")
    m.check_image(content)
    m.check_image(style)
    src, dst = ("A", "B") if direction == "AtoB" else ("B", "A")
    P = m.consts()
    return decoder(P, m.config, dst, content_encoder(P, src, content), style_encoder(P, dst, style)).value
