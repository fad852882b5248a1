"""Synthetic unpaired two-domain image set.

Both domains draw shapes (class, centre, size) from one distribution; the
domains differ only in palette and texture.  Domain palettes are disjoint,
so every pixel colour identifies its domain.  Sample ``i`` of domain ``d``
uses the generator ``default_rng([seed, d, i])``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

SHAPES = ("circle", "square", "triangle")


@dataclass(frozen=True)
class DomainStyle:
    background: tuple[int, int, int]
    foreground: tuple[tuple[int, int, int], ...]  # texture colour pairs are drawn from here
    texture: str  # "stripes" or "checker"
    period: int


DEFAULT_A = DomainStyle(
    background=(20, 20, 40),
    foreground=((230, 60, 40), (250, 170, 30), (200, 40, 120)),
    texture="stripes",
    period=4,
)
DEFAULT_B = DomainStyle(
    background=(235, 235, 215),
    foreground=((30, 90, 200), (40, 160, 90), (20, 180, 200)),
    texture="checker",
    period=3,
)


@dataclass(frozen=True)
class SyntheticDomainSpec:
    n_samples: int = 256
    image_size: int = 32
    seed: int = 0
    domain_a: DomainStyle = field(default_factory=lambda: DEFAULT_A)
    domain_b: DomainStyle = field(default_factory=lambda: DEFAULT_B)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDomainSpec":
        d = dict(d)
        for key in ("domain_a", "domain_b"):
            if key in d and isinstance(d[key], dict):
                s = dict(d[key])
                s["background"] = tuple(s["background"])
                s["foreground"] = tuple(tuple(c) for c in s["foreground"])
                d[key] = DomainStyle(**s)
        return cls(**d)


def palette(style: DomainStyle) -> set[tuple[int, int, int]]:
    return {tuple(style.background), *map(tuple, style.foreground)}


def sample_geometry(rng: np.random.Generator, size: int) -> tuple[str, float, float, float]:
    shape = SHAPES[rng.integers(len(SHAPES))]
    r = rng.uniform(size / 6, size / 3)
    cy, cx = rng.uniform(r, size - r, size=2)
    return shape, cy, cx, r


def shape_mask(shape: str, cy: float, cx: float, r: float, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if shape == "circle":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if shape == "square":
        return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    if shape == "triangle":
        # apex up, base at cy + r
        t = (yy - (cy - r)) / (2 * r)
        return (t >= 0) & (t <= 1) & (np.abs(xx - cx) <= t * r)
    raise ValueError(f"unknown shape {shape!r}")


def _texture(style: DomainStyle, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    if style.texture == "stripes":
        return (yy // style.period) % 2 == 0
    if style.texture == "checker":
        return ((yy // style.period) + (xx // style.period)) % 2 == 0
    raise ValueError(f"unknown texture {style.texture!r}")


def render(style: DomainStyle, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray, str]:
    """One ``(1, 3, S, S)`` image in ``[-1, 1]`` plus its mask and shape class."""
    shape, cy, cx, r = sample_geometry(rng, size)
    mask = shape_mask(shape, cy, cx, r, size)
    i, j = rng.choice(len(style.foreground), size=2, replace=False)
    c1, c2 = np.array(style.foreground[i]), np.array(style.foreground[j])
    fg = np.where(_texture(style, size)[..., None], c1, c2)
    pix = np.where(mask[..., None], fg, np.array(style.background))
    img = pix.transpose(2, 0, 1)[None].astype(np.float64) / 127.5 - 1.0
    return img, mask, shape


def make_domain(style: DomainStyle, spec: SyntheticDomainSpec, domain_index: int):
    images, masks, shapes = [], [], []
    for i in range(spec.n_samples):
        rng = np.random.default_rng([spec.seed, domain_index, i])
        img, mask, shape = render(style, rng, spec.image_size)
        images.append(img)
        masks.append(mask)
        shapes.append(shape)
    return np.concatenate(images, axis=0), np.stack(masks), shapes


def make_synthetic_dataset(spec: SyntheticDomainSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unpaired image sets ``(A, B)``, each ``(n_samples, 3, S, S)``."""
    if palette(spec.domain_a) & palette(spec.domain_b):
        raise ValueError("domain palettes must be disjoint")
    a, _, _ = make_domain(spec.domain_a, spec, 0)
    b, _, _ = make_domain(spec.domain_b, spec, 1)
    return a, b
