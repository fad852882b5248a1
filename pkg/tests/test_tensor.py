import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from stylenorm import reference as ref
from stylenorm.tensor import (
    ShapeError,
    add,
    concat_channels,
    fold,
    matmul,
    mul_scalar,
    overlap_add,
    reduce_mean_std,
    sub,
    unfold,
)


def test_unfold_k1_is_identity():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    p = unfold(x, 1, 1)
    assert p.patches.shape == (1, 2, 2, 1, 1, 1)
    assert_array_equal(p.patches.reshape(-1), [1.0, 2.0, 3.0, 4.0])
    assert p.padding == (0, 0)


def test_unfold_zero_padding_on_corner():
    p = unfold(np.ones((1, 1, 3, 3)), 3, 3).patches
    assert_array_equal(p[0, 1, 1, 0], np.ones((3, 3)))
    corner = p[0, 0, 0, 0]
    assert corner.sum() == 4.0
    assert (corner == 0).sum() == 5
    assert_array_equal(corner, [[0, 0, 0], [0, 1, 1], [0, 1, 1]])


def test_unfold_matches_loop_nest(rng):
    x = rng.standard_normal((2, 3, 5, 5))
    assert_array_equal(unfold(x, 3, 3).patches, ref.unfold_loop(x, 3, 3))


def test_unfold_rectangular_kernel(rng):
    x = rng.standard_normal((1, 2, 4, 6))
    p = unfold(x, 3, 5)
    assert p.patches.shape == (1, 4, 6, 2, 3, 5)
    assert p.padding == (1, 2)
    assert_array_equal(p.patches, ref.unfold_loop(x, 3, 5))


@pytest.mark.parametrize("k", [0, 2, 4, -1])
def test_unfold_rejects_even_or_nonpositive_kernel(k):
    with pytest.raises(ShapeError):
        unfold(np.zeros((1, 1, 3, 3)), k, 3)


def test_unfold_rejects_wrong_rank():
    with pytest.raises(ShapeError):
        unfold(np.zeros((3, 3)), 3, 3)


def test_patch_matrix_layout(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    p = unfold(x, 3, 3)
    m = p.matrix()
    assert m.shape == (2, 16, 27)
    # row r of batch n is patch (r // W, r % W) flattened as (C, kH, kW)
    assert_array_equal(m[1, 6], p.patches[1, 1, 2].reshape(-1))


@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_fold_unfold_roundtrip(rng, k):
    x = rng.standard_normal((2, 3, 6, 5))
    assert_allclose(fold(unfold(x, k, k)), x, rtol=0, atol=1e-12)


def test_fold_k1_exact(rng):
    x = rng.standard_normal((1, 2, 3, 4))
    assert_array_equal(fold(unfold(x, 1, 1)), x)


def test_fold_single_pixel():
    assert_array_equal(fold(unfold(np.full((1, 1, 1, 1), 5.0), 3, 3)), [[[[5.0]]]])


def test_fold_unfold_roundtrip_f32(rng):
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    out = fold(unfold(x, 3, 3))
    assert_allclose(out, x, rtol=0, atol=1e-6)


def test_overlap_add_is_adjoint_of_unfold(rng):
    # <unfold(x), p> == <x, overlap_add(p)> for every x, p
    x = rng.standard_normal((2, 3, 5, 4))
    p = rng.standard_normal((2, 5, 4, 3, 3, 3))
    lhs = np.sum(unfold(x, 3, 3).patches * p)
    rhs = np.sum(x * overlap_add(p, 3, 3))
    assert_allclose(lhs, rhs, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(1, 2), c=st.integers(1, 3), h=st.integers(1, 6), w=st.integers(1, 6),
    k=st.sampled_from([1, 3, 5]), seed=st.integers(0, 2**16),
)
def test_unfold_indexing_property(n, c, h, w, k, seed):
    x = np.random.default_rng(seed).standard_normal((n, c, h, w))
    p = unfold(x, k, k).patches
    r = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    i, j = h // 2, w // 2
    for a in range(k):
        for b in range(k):
            assert_array_equal(p[:, i, j, :, a, b], xp[:, :, i + a, j + b])
    assert_allclose(fold(unfold(x, k, k)), x, atol=1e-12)


def test_mean_std_hand_values():
    mean, std = reduce_mean_std(np.array([1.0, 2.0, 3.0]), axes=(0,), eps=0.0)
    assert_allclose(mean, [2.0])
    assert_allclose(std, [np.sqrt(2.0 / 3.0)])


def test_mean_std_constant_floor():
    _, std = reduce_mean_std(np.full((1, 1, 4, 4), 7.0), axes=(2, 3), eps=1e-5)
    assert_allclose(std, np.sqrt(1e-5), rtol=1e-12)


def test_mean_std_matches_two_pass(rng):
    x = rng.standard_normal((2, 4, 8, 8))
    mean, std = reduce_mean_std(x, axes=(2, 3), eps=1e-5)
    assert mean.shape == (2, 4, 1, 1)
    for n in range(2):
        for c in range(4):
            m, s = ref.mean_std_loop(x[n, c], 1e-5)
            assert_allclose(mean[n, c, 0, 0], m, rtol=0, atol=1e-12)
            assert_allclose(std[n, c, 0, 0], s, rtol=0, atol=1e-12)


def test_mean_std_rejects_bad_axes():
    with pytest.raises(ShapeError):
        reduce_mean_std(np.zeros((2, 3)), axes=(1, 1))
    with pytest.raises(ShapeError):
        reduce_mean_std(np.zeros((2, 0)), axes=(1,))


def test_concat_channels_shape(rng):
    out = concat_channels(rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 5, 4, 4)))
    assert out.shape == (2, 8, 4, 4)
    with pytest.raises(ShapeError):
        concat_channels(np.zeros((2, 3, 4, 4)), np.zeros((2, 5, 4, 5)))


def test_matmul_identity_and_oracle(rng):
    a = rng.standard_normal((4, 6))
    assert_array_equal(matmul(np.eye(4), a), a)
    b = rng.standard_normal((6, 3))
    assert_allclose(matmul(a, b), ref.matmul_loop(a, b), rtol=0, atol=1e-10)
    with pytest.raises(ShapeError):
        matmul(a, a)


def test_elementwise_shape_checks(rng):
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    assert_array_equal(add(a, b), a + b)
    assert_array_equal(sub(a, b), a - b)
    assert_array_equal(mul_scalar(a, 2.5), 2.5 * a)
    with pytest.raises(ShapeError):
        add(a, b.T)
