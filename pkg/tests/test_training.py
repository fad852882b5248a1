import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from stylenorm import autodiff as ad
from stylenorm.injectors import AdaptiveKernel, conv2d
from stylenorm.nets import ModelConfig, TranslationModel, translate, translate_one
from stylenorm.optim import Adam, lr_at
from stylenorm.synth import (
    DEFAULT_A,
    DEFAULT_B,
    SHAPES,
    SyntheticDomainSpec,
    make_domain,
    make_synthetic_dataset,
    palette,
)
from stylenorm.tensor import ShapeError
from stylenorm.training import (
    LossWeights,
    TrainConfig,
    Trainer,
    TrainingError,
    adversarial_terms,
    generator_objective,
    generator_pass,
    latent_terms,
    load_checkpoint,
    load_config,
    loss_adversarial,
    loss_latent,
    loss_pixel,
    lsgan_d,
    lsgan_g,
    pixel_terms,
    save_checkpoint,
    seed_from_env,
    train,
)

SMALL = ModelConfig(image_size=16, base=4, content_channels=8, style_dim=4, style_out=6)


@pytest.fixture
def model():
    return TranslationModel.create(SMALL, seed=3)


@pytest.fixture
def images():
    a, b = make_synthetic_dataset(SyntheticDomainSpec(n_samples=4, image_size=16, seed=1))
    return a[:1], b[:1]


# ---------------------------------------------------------------- losses

def test_lsgan_perfect_discriminator():
    real, fake = ad.const(np.ones((1, 1, 2, 2))), ad.const(np.zeros((1, 1, 2, 2)))
    assert lsgan_d(real, fake).value == 0.0
    assert lsgan_g(fake).value == 0.5


def test_lsgan_all_zero_discriminator():
    zero = ad.const(np.zeros((1, 1, 2, 2)))
    assert lsgan_d(zero, zero).value == 0.5
    assert lsgan_g(zero).value == 0.5


def test_lsgan_matches_scalar_formula(rng):
    r, f = rng.standard_normal((1, 1, 3, 3)), rng.standard_normal((1, 1, 3, 3))
    d = 0.5 * sum((v - 1) ** 2 for v in r.ravel()) / 9 + 0.5 * sum(v**2 for v in f.ravel()) / 9
    g = 0.5 * sum((v - 1) ** 2 for v in f.ravel()) / 9
    assert_allclose(lsgan_d(ad.const(r), ad.const(f)).value, d, rtol=0, atol=1e-12)
    assert_allclose(lsgan_g(ad.const(f)).value, g, rtol=0, atol=1e-12)


def test_l1_closed_forms(rng):
    x = rng.standard_normal((1, 3, 4, 4))
    assert ad.l1_loss(x, x).value == 0.0
    assert_allclose(ad.l1_loss(x + 0.5, x).value, 0.5, rtol=1e-12)
    y = rng.standard_normal((1, 3, 4, 4))
    loop = sum(abs(a - b) for a, b in zip(x.ravel(), y.ravel())) / x.size
    assert_allclose(ad.l1_loss(x, y).value, loop, rtol=0, atol=1e-12)


def test_losses_are_nonnegative(model, images):
    assert all(v >= 0 for v in loss_pixel(model, *images))
    assert all(v >= 0 for v in loss_latent(model, *images))
    assert all(v >= 0 for v in loss_adversarial(model, *images))


def test_pixel_loss_follows_translation_composition(model, images):
    xa, xb = images
    x_ab = translate_one(model, xa, xb, "AtoB")
    x_ba = translate_one(model, xb, xa, "BtoA")
    x_aba = translate_one(model, x_ab, xa, "BtoA")
    x_bab = translate_one(model, x_ba, xb, "AtoB")
    cyc, _, _ = loss_pixel(model, xa, xb)
    expect = np.abs(x_aba - xa).mean() + np.abs(x_bab - xb).mean()
    assert_allclose(cyc, expect, rtol=0, atol=1e-12)


def test_generator_objective_is_weighted_sum(model, images):
    xa, xb = images
    P = model.consts()
    g = generator_pass(P, SMALL, xa, xb)
    cyc, id_a, id_b = pixel_terms(g, xa, xb)
    l_s, l_c = latent_terms(g)
    _, adv = adversarial_terms(P, xa, xb, g.x_ab, g.x_ba)
    total = generator_objective(adv, l_s, l_c, cyc, id_a, id_b, LossWeights(1.0, 10.0))
    terms = [float(t.value) for t in (adv, l_s, l_c, cyc, id_a, id_b)]
    expect = terms[0] + 1.0 * (terms[1] + terms[2]) + 10.0 * (terms[3] + terms[4] + terms[5])
    assert_allclose(float(total.value), expect, rtol=0, atol=1e-12)


def test_loss_weights_validated():
    with pytest.raises(ValueError):
        LossWeights(-1.0, 10.0)


# ---------------------------------------------------------------- optimizer

def test_adam_closed_form_trace():
    # f(x) = x^2 per coordinate, so g = 2x
    p = {"x": np.array([1.0, -3.0])}
    opt = Adam(0.5, 0.999)
    m = v = np.zeros(2)
    x = p["x"].copy()
    for t in range(1, 4):
        g = 2 * x
        m = 0.5 * m + 0.5 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.1 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        opt.step(p, {"x": 2 * p["x"]}, 0.1)
        assert_allclose(p["x"], x, rtol=1e-14)
    assert_allclose(p["x"], [0.70697131, -2.70208794], atol=1e-8)


def test_lr_schedule():
    assert lr_at(0, 1e-4, 200_000, 50_000) == 1e-4
    assert lr_at(199_999, 1e-4, 200_000, 50_000) == 1e-4
    assert lr_at(200_000, 1e-4, 200_000, 50_000) == 5e-5
    assert lr_at(249_999, 1e-4, 200_000, 50_000) == 5e-5
    assert lr_at(250_000, 1e-4, 200_000, 50_000) == 2.5e-5
    lrs = [lr_at(s, 1.0, 10, 5) for s in range(40)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(batch=2)


# ---------------------------------------------------------------- nets

def test_translate_shapes_and_range(model, images):
    ab, ba = translate(model, *images)
    assert ab.shape == ba.shape == images[0].shape
    assert np.abs(ab).max() <= 1 and np.abs(ba).max() <= 1


def test_zeroed_final_layer_gives_zero_output(model, images):
    for dom in "AB":
        model.params[f"G{dom}.up1.w"][:] = 0
        model.params[f"G{dom}.up1.b"][:] = 0
    ab, ba = translate(model, *images)
    assert_array_equal(ab, 0.0)
    assert_array_equal(ba, 0.0)


def test_translate_rejects_bad_shape(model):
    with pytest.raises(ShapeError):
        translate(model, np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 16, 16)))
    with pytest.raises(ValueError):
        translate_one(model, np.zeros((1, 3, 16, 16)), np.zeros((1, 3, 16, 16)), "AtoA")


def _np_conv(P, name, x):
    return conv2d(x, AdaptiveKernel(P[f"{name}.w"], P[f"{name}.b"]))


def _lrelu(x):
    return np.where(x > 0, x, 0.2 * x)


def _pool(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def test_translate_matches_hand_composition(model, images):
    xa, xb = images
    P = model.params
    h = _lrelu(_np_conv(P, "EcA.0", xa))
    h = _lrelu(_pool(_np_conv(P, "EcA.1", h)))
    content = _lrelu(_pool(_np_conv(P, "EcA.2", h)))
    h = _lrelu(_np_conv(P, "EsB.0", xb))
    for i in (1, 2, 3):
        h = _lrelu(_pool(_np_conv(P, f"EsB.{i}", h)))
    code = P["EsB.fc.w"] @ h.mean(axis=(2, 3))[0] + P["EsB.fc.b"]
    h = _lrelu(model.adacon_block("B")(content, code))
    h = _lrelu(_np_conv(P, "GB.up0", h.repeat(2, axis=2).repeat(2, axis=3)))
    out = np.tanh(_np_conv(P, "GB.up1", h.repeat(2, axis=2).repeat(2, axis=3)))
    assert_allclose(translate(model, xa, xb)[0], out, rtol=0, atol=1e-9)


def test_parameter_partition(model):
    g, d = set(model.generator_names()), set(model.discriminator_names())
    assert not g & d
    assert g | d == set(model.params)
    assert all(k.startswith(("DA.", "DB.")) for k in d)


# ---------------------------------------------------------------- training step

def _snapshot(m):
    return {k: v.copy() for k, v in m.params.items()}


def test_each_update_touches_only_its_partition(model, images, monkeypatch):
    trainer = Trainer(model, TrainConfig())
    before = _snapshot(model)
    monkeypatch.setattr(trainer.opt_g, "step", lambda *a, **k: None)
    trainer.step(*images)
    for k in model.generator_names():
        assert_array_equal(model.params[k], before[k])
    assert any(not np.array_equal(model.params[k], before[k]) for k in model.discriminator_names())

    trainer = Trainer(model, TrainConfig())
    before = _snapshot(model)
    monkeypatch.setattr(trainer.opt_d, "step", lambda *a, **k: None)
    trainer.step(*images)
    for k in model.discriminator_names():
        assert_array_equal(model.params[k], before[k])
    assert any(not np.array_equal(model.params[k], before[k]) for k in model.generator_names())


def test_metrics_record(model, images):
    rec = Trainer(model, TrainConfig()).step(*images)
    assert set(rec) == {"step", "lD", "lG", "lCyc", "lId", "lS", "lC", "lr"}
    assert rec["step"] == 1 and rec["lr"] == 1e-4
    assert all(math.isfinite(v) for v in rec.values())


def test_zero_weights_leave_pure_adversarial_gradient(model, images):
    xa, xb = images
    names = model.generator_names()

    def grads(build):
        P = {k: ad.param(v) if k in names else ad.const(v) for k, v in model.params.items()}
        ad.backward(build(P))
        return {k: P[k].grad for k in names}

    def full(P):
        g = generator_pass(P, SMALL, xa, xb)
        _, adv = adversarial_terms(P, xa, xb, g.x_ab, g.x_ba)
        return generator_objective(adv, *latent_terms(g), *pixel_terms(g, xa, xb), LossWeights(0.0, 0.0))

    def adversarial_only(P):
        g = generator_pass(P, SMALL, xa, xb)
        return adversarial_terms(P, xa, xb, g.x_ab, g.x_ba)[1]

    a, b = grads(full), grads(adversarial_only)
    for k in names:
        ga = np.zeros_like(model.params[k]) if a[k] is None else a[k]
        gb = np.zeros_like(model.params[k]) if b[k] is None else b[k]
        assert_allclose(ga, gb, rtol=0, atol=1e-12)


def test_discriminator_learns_with_frozen_generator(model, images):
    xa, xb = images
    ab, ba = translate(model, xa, xb)
    names = model.discriminator_names()
    opt = Adam(0.5, 0.999)
    losses = []
    for _ in range(100):
        P = {k: ad.param(model.params[k]) for k in names}
        l_d, _ = adversarial_terms(P, xa, xb, ab, ba)
        ad.backward(l_d)
        losses.append(float(l_d.value))
        opt.step(model.params, {k: P[k].grad for k in names}, 1e-3)
    assert losses[-1] < 0.2 * losses[0]
    assert np.mean(np.diff(losses) < 0) > 0.9


def test_nan_aborts_with_diagnostic(model, images):
    model.params["GB.up1.b"][:] = np.nan
    trainer = Trainer(model, TrainConfig())
    with pytest.raises(TrainingError, match="not finite"):
        trainer.step(*images)
    assert "x_ab" in trainer.last_tensors


def test_ten_steps_bitwise_reproducible():
    cfg = TrainConfig(steps=10, image_size=16, n_samples=8, seed=4)
    m1, h1 = train(SMALL, cfg)
    m2, h2 = train(SMALL, cfg)
    assert h1 == h2
    for k in m1.params:
        assert_array_equal(m1.params[k], m2.params[k])


def test_metrics_csv(tmp_path):
    cfg = TrainConfig(steps=3, image_size=16, n_samples=4)
    train(SMALL, cfg, metrics_path=tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "step,lD,lG,lCyc,lId,lS,lC,lr"
    assert len(lines) == 4


def test_seed_from_env(monkeypatch):
    monkeypatch.delenv("STYLENORM_SEED", raising=False)
    assert seed_from_env(3) == 3
    monkeypatch.setenv("STYLENORM_SEED", "17")
    assert seed_from_env(3) == 17


# ---------------------------------------------------------------- config and checkpoints

def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": {"style_out": 8}, "train": {"steps": 5, "image_size": 16},
                                "loss": {"lambda_pixel": 5.0}}))
    m, t, w = load_config(path)
    assert m.style_out == 8 and m.image_size == 16
    assert t.steps == 5 and w.lambda_pixel == 5.0 and w.lambda_latent == 1.0


@pytest.mark.parametrize("raw", [{"optim": {}}, {"train": {"momentum": 0.9}}])
def test_load_config_rejects_unknown(tmp_path, raw):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ValueError):
        load_config(path)


def test_checkpoint_roundtrip(tmp_path, model, images):
    save_checkpoint(tmp_path / "ck", model, {"steps": 0})
    loaded = load_checkpoint(tmp_path / "ck")
    assert loaded.config == model.config
    for a, b in zip(translate(model, *images), translate(loaded, *images)):
        assert_array_equal(a, b)


def test_checkpoint_config_mismatch(tmp_path, model):
    params = dict(model.params)
    params.pop("DA.0.w")
    save_checkpoint(tmp_path / "ck", TranslationModel(SMALL, params))
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "ck")


# ---------------------------------------------------------------- synthetic data

def test_synthetic_is_seeded():
    spec = SyntheticDomainSpec(n_samples=5, image_size=16, seed=9)
    a1, b1 = make_synthetic_dataset(spec)
    a2, b2 = make_synthetic_dataset(spec)
    assert_array_equal(a1, a2)
    assert_array_equal(b1, b2)
    a3, _ = make_synthetic_dataset(SyntheticDomainSpec(n_samples=5, image_size=16, seed=10))
    assert not np.array_equal(a1, a3)


def test_synthetic_palettes_disjoint():
    a, b = make_synthetic_dataset(SyntheticDomainSpec(n_samples=20, image_size=16))
    def colours(x):
        pix = np.rint((x + 1) * 127.5).astype(int).transpose(0, 2, 3, 1).reshape(-1, 3)
        return set(map(tuple, pix))
    ca, cb = colours(a), colours(b)
    assert ca <= palette(DEFAULT_A) and cb <= palette(DEFAULT_B)
    assert not ca & cb


def _chi_square(counts_a, counts_b):
    table = np.array([counts_a, counts_b], dtype=float)
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0) / table.sum()
    return float(((table - expected) ** 2 / expected).sum())


def test_shape_distribution_matches_across_domains():
    spec = SyntheticDomainSpec(n_samples=600, image_size=32, seed=0)
    _, masks_a, shapes_a = make_domain(spec.domain_a, spec, 0)
    _, masks_b, shapes_b = make_domain(spec.domain_b, spec, 1)
    # 1% critical values of the chi-square distribution: df=2 -> 9.21, df=4 -> 13.28
    stat = _chi_square([shapes_a.count(s) for s in SHAPES], [shapes_b.count(s) for s in SHAPES])
    assert stat < 9.21
    area_a, area_b = masks_a.sum(axis=(1, 2)), masks_b.sum(axis=(1, 2))
    edges = np.quantile(np.concatenate([area_a, area_b]), [0.2, 0.4, 0.6, 0.8])
    stat = _chi_square(np.bincount(np.digitize(area_a, edges), minlength=5),
                       np.bincount(np.digitize(area_b, edges), minlength=5))
    assert stat < 13.28


def test_synthetic_spec_dict_roundtrip():
    spec = SyntheticDomainSpec(n_samples=3, seed=2)
    assert SyntheticDomainSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_overlapping_palettes_rejected():
    with pytest.raises(ValueError):
        make_synthetic_dataset(SyntheticDomainSpec(n_samples=1, domain_b=DEFAULT_A))
