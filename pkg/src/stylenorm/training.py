"""Loss stack, the D-then-G training step and the desk training loop.

Generator objective::

    L_G = adv_A + adv_B + lambda_latent * (L_s + L_c)
          + lambda_pixel * (L_cyc + L_id_A + L_id_B)

with least-squares adversarial terms.  Every term without a domain suffix is
summed over both translation directions.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .io import load_manifest, save_manifest
from .nets import (
    ModelConfig,
    TranslationModel,
    content_encoder,
    decoder,
    discriminator,
    style_encoder,
)
from .optim import Adam, lr_at
from .synth import SyntheticDomainSpec, make_synthetic_dataset

log = logging.getLogger(__name__)

SEED_ENV = "STYLENORM_SEED"
METRIC_FIELDS = ("step", "lD", "lG", "lCyc", "lId", "lS", "lC", "lr")


@dataclass(frozen=True)
class LossWeights:
    lambda_latent: float = 1.0
    lambda_pixel: float = 10.0

    def __post_init__(self):
        if self.lambda_latent < 0 or self.lambda_pixel < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch: int = 1
    decay_start: int = 200_000
    decay_every: int = 50_000
    seed: int = 0
    steps: int = 2000
    image_size: int = 32
    n_samples: int = 256

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 0 or self.decay_every <= 0 or self.decay_start < 0:
            raise ValueError("invalid TrainConfig")
        if self.batch != 1:
            raise ValueError("only batch size 1 is supported")

    def lr_at(self, step: int) -> float:
        return lr_at(step, self.lr, self.decay_start, self.decay_every)


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------- losses

def lsgan_d(real: ad.Node, fake: ad.Node) -> ad.Node:
    return ad.mse_const(real, target=1.0) * 0.5 + ad.mse_const(fake, target=0.0) * 0.5


def lsgan_g(fake: ad.Node) -> ad.Node:
    return ad.mse_const(fake, target=1.0) * 0.5


@dataclass
class GeneratorPass:
    """Every generator-side tensor of one A/B pair (nodes, possibly differentiable)."""

    c_a: ad.Node
    s_a: ad.Node
    c_b: ad.Node
    s_b: ad.Node
    x_ab: ad.Node
    x_ba: ad.Node
    x_aa: ad.Node
    x_bb: ad.Node
    x_aba: ad.Node
    x_bab: ad.Node
    c_ab: ad.Node  # E_B^c(x_ab)
    s_ab: ad.Node  # E_B^s(x_ab)
    c_ba: ad.Node
    s_ba: ad.Node


def generator_pass(P: Mapping[str, ad.Node], cfg: ModelConfig, x_a, x_b) -> GeneratorPass:
    x_a, x_b = ad.const(x_a), ad.const(x_b)
    c_a, s_a = content_encoder(P, "A", x_a), style_encoder(P, "A", x_a)
    c_b, s_b = content_encoder(P, "B", x_b), style_encoder(P, "B", x_b)
    x_ab = decoder(P, cfg, "B", c_a, s_b)
    x_ba = decoder(P, cfg, "A", c_b, s_a)
    x_aa = decoder(P, cfg, "A", c_a, s_a)
    x_bb = decoder(P, cfg, "B", c_b, s_b)
    c_ab, s_ab = content_encoder(P, "B", x_ab), style_encoder(P, "B", x_ab)
    c_ba, s_ba = content_encoder(P, "A", x_ba), style_encoder(P, "A", x_ba)
    x_aba = decoder(P, cfg, "A", c_ab, s_a)
    x_bab = decoder(P, cfg, "B", c_ba, s_b)
    return GeneratorPass(c_a, s_a, c_b, s_b, x_ab, x_ba, x_aa, x_bb, x_aba, x_bab,
                         c_ab, s_ab, c_ba, s_ba)


def pixel_terms(g: GeneratorPass, x_a, x_b) -> tuple[ad.Node, ad.Node, ad.Node]:
    """``(L_cyc, L_id_A, L_id_B)``; the cycle term covers A->B->A and B->A->B."""
    cyc = ad.l1_loss(g.x_aba, x_a) + ad.l1_loss(g.x_bab, x_b)
    return cyc, ad.l1_loss(g.x_aa, x_a), ad.l1_loss(g.x_bb, x_b)


def latent_terms(g: GeneratorPass) -> tuple[ad.Node, ad.Node]:
    """``(L_s, L_c)`` summed over both directions."""
    l_s = ad.l1_loss(g.s_ab, g.s_b) + ad.l1_loss(g.s_ba, g.s_a)
    l_c = ad.l1_loss(g.c_ab, g.c_a) + ad.l1_loss(g.c_ba, g.c_b)
    return l_s, l_c


def adversarial_terms(P: Mapping[str, ad.Node], x_a, x_b, x_ab, x_ba) -> tuple[ad.Node, ad.Node]:
    """``(L_D, L_G_adv)`` over both domains."""
    d_real_b, d_fake_b = discriminator(P, "B", x_b), discriminator(P, "B", x_ab)
    d_real_a, d_fake_a = discriminator(P, "A", x_a), discriminator(P, "A", x_ba)
    l_d = lsgan_d(d_real_b, d_fake_b) + lsgan_d(d_real_a, d_fake_a)
    l_g = lsgan_g(d_fake_b) + lsgan_g(d_fake_a)
    return l_d, l_g


def generator_objective(adv: ad.Node, l_s: ad.Node, l_c: ad.Node, cyc: ad.Node, id_a: ad.Node,
                        id_b: ad.Node, w: LossWeights) -> ad.Node:
    return adv + (l_s + l_c) * w.lambda_latent + (cyc + id_a + id_b) * w.lambda_pixel


def loss_pixel(m: TranslationModel, x_a, x_b) -> tuple[float, float, float]:
    g = generator_pass(m.consts(), m.config, x_a, x_b)
    return tuple(float(t.value) for t in pixel_terms(g, x_a, x_b))


def loss_latent(m: TranslationModel, x_a, x_b) -> tuple[float, float]:
    g = generator_pass(m.consts(), m.config, x_a, x_b)
    return tuple(float(t.value) for t in latent_terms(g))


def loss_adversarial(m: TranslationModel, x_a, x_b) -> tuple[float, float]:
    P = m.consts()
    g = generator_pass(P, m.config, x_a, x_b)
    l_d, l_g = adversarial_terms(P, x_a, x_b, g.x_ab.value, g.x_ba.value)
    return float(l_d.value), float(l_g.value)


# ---------------------------------------------------------------- training

@dataclass
class Trainer:
    model: TranslationModel
    config: TrainConfig
    weights: LossWeights = field(default_factory=LossWeights)
    step_count: int = 0

    def __post_init__(self):
        self.opt_g = Adam(self.config.beta1, self.config.beta2)
        self.opt_d = Adam(self.config.beta1, self.config.beta2)

    def step(self, x_a: np.ndarray, x_b: np.ndarray) -> dict[str, float]:
        """One discriminator update on L_D, then one generator update on L_G."""
        m, cfg = self.model, self.model.config
        lr = self.config.lr_at(self.step_count)
        g_names, d_names = m.generator_names(), m.discriminator_names()

        P = {k: ad.param(m.params[k]) for k in g_names}
        P.update({k: ad.const(m.params[k]) for k in d_names})
        g = generator_pass(P, cfg, x_a, x_b)
        x_ab, x_ba = g.x_ab.value, g.x_ba.value

        Pd = {k: ad.param(m.params[k]) for k in d_names}
        l_d, _ = adversarial_terms(Pd, x_a, x_b, x_ab, x_ba)
        self._check_finite("lD", l_d, {"x_ab": x_ab, "x_ba": x_ba})
        ad.backward(l_d)
        self.opt_d.step(m.params, {k: Pd[k].grad for k in d_names}, lr)

        Pd_new = {k: ad.const(m.params[k]) for k in d_names}
        _, adv = adversarial_terms(Pd_new, x_a, x_b, g.x_ab, g.x_ba)
        cyc, id_a, id_b = pixel_terms(g, x_a, x_b)
        l_s, l_c = latent_terms(g)
        l_g = generator_objective(adv, l_s, l_c, cyc, id_a, id_b, self.weights)
        self._check_finite("lG", l_g, {"x_ab": x_ab, "x_ba": x_ba})
        ad.backward(l_g)
        self.opt_g.step(m.params, {k: P[k].grad for k in g_names}, lr)

        self.step_count += 1
        return {
            "step": self.step_count, "lD": float(l_d.value), "lG": float(l_g.value),
            "lCyc": float(cyc.value), "lId": float(id_a.value + id_b.value),
            "lS": float(l_s.value), "lC": float(l_c.value), "lr": lr,
        }

    def _check_finite(self, name: str, loss: ad.Node, tensors: dict[str, np.ndarray]) -> None:
        if np.isfinite(loss.value):
            return
        self.last_tensors = dict(tensors)
        raise TrainingError(
            f"{name} is not finite at step {self.step_count}; "
            f"last tensors: " + ", ".join(_describe(k, v) for k, v in tensors.items())
        )


def _describe(name: str, x: np.ndarray) -> str:
    finite = np.isfinite(x)
    peak = float(np.abs(x[finite]).max()) if finite.any() else float("nan")
    return f"{name} non-finite={int((~finite).sum())}/{x.size} max|finite|={peak:.3g}"


def seed_from_env(seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else seed


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, weights: LossWeights | None = None,
          data: tuple[np.ndarray, np.ndarray] | None = None, metrics_path=None,
          log_every: int = 0) -> tuple[TranslationModel, list[dict[str, float]]]:
    """Run ``train_cfg.steps`` seeded steps; returns the model and per-step metrics."""
    weights = weights or LossWeights()
    if data is None:
        data = make_synthetic_dataset(SyntheticDomainSpec(
            n_samples=train_cfg.n_samples, image_size=train_cfg.image_size, seed=train_cfg.seed))
    data_a, data_b = data
    model = TranslationModel.create(model_cfg, seed=train_cfg.seed)
    trainer = Trainer(model, train_cfg, weights)
    rng = np.random.default_rng([train_cfg.seed, 7])
    history = []
    writer = None
    fh = open(metrics_path, "w", newline="") if metrics_path else None
    try:
        if fh:
            writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
            writer.writeheader()
        with threadpool_limits(limits=1):
            for _ in range(train_cfg.steps):
                ia, ib = rng.integers(len(data_a)), rng.integers(len(data_b))
                rec = trainer.step(data_a[ia:ia + 1], data_b[ib:ib + 1])
                history.append(rec)
                if writer:
                    writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
                if log_every and rec["step"] % log_every == 0:
                    log.info("step %d lD=%.4f lG=%.4f lCyc=%.4f", rec["step"], rec["lD"], rec["lG"], rec["lCyc"])
    finally:
        if fh:
            fh.close()
    return model, history


# ---------------------------------------------------------------- configs and checkpoints

def _pick(cls, d: dict | None):
    d = d or {}
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**d)


def load_config(path) -> tuple[ModelConfig, TrainConfig, LossWeights]:
    """JSON with optional sections ``model``, ``train`` and ``loss``."""
    raw = json.loads(Path(path).read_text())
    unknown = set(raw) - {"model", "train", "loss"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    train_cfg = _pick(TrainConfig, raw.get("train"))
    model_d = dict(raw.get("model") or {})
    model_d.setdefault("image_size", train_cfg.image_size)
    return _pick(ModelConfig, model_d), train_cfg, _pick(LossWeights, raw.get("loss"))


def save_checkpoint(directory, model: TranslationModel, extra: dict | None = None) -> Path:
    meta = {"model": model.config.to_dict(), **(extra or {})}
    return save_manifest(directory, model.params, meta)


def load_checkpoint(directory) -> TranslationModel:
    tensors, meta = load_manifest(directory)
    cfg = ModelConfig(**meta["model"])
    expected = set(TranslationModel.create(cfg).params)
    if set(tensors) != expected:
        raise ValueError("checkpoint tensors do not match the model configuration")
    return TranslationModel(cfg, {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()})


def config_dict(model_cfg: ModelConfig, train_cfg: TrainConfig, weights: LossWeights) -> dict:
    return {"model": model_cfg.to_dict(), "train": asdict(train_cfg), "loss": asdict(weights)}
