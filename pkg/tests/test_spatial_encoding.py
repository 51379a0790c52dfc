import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import conv2d_same_zero_pad
from spatial_uda.exceptions import ConfigError, InvalidInputError
from spatial_uda.spatial_encoding import (
    SOBEL_X,
    SOBEL_Y,
    SpatialEncoder,
    build_discriminator_input,
    discriminator_channels,
    encode_spatial,
    invert,
    sobel_x,
    sobel_y,
)

prob_maps = arrays(
    np.float64,
    st.tuples(st.integers(3, 10), st.integers(3, 10)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


def test_sobel_constant_map_has_zero_interior():
    out = sobel_x(np.full((5, 5), 0.7))
    assert np.all(out[1:-1, 1:-1] == 0.0)
    out = sobel_y(np.full((5, 5), 0.7))
    assert np.all(out[1:-1, 1:-1] == 0.0)


def test_sobel_x_vertical_step():
    P = np.zeros((4, 4))
    P[:, 2:] = 1.0
    out = sobel_x(P)
    # hand convolution: |(-1)(0)+(1)(1)| * (1+2+1) = 4 -> 1.0 on the step columns
    assert out[1, 1] == 1.0 and out[2, 1] == 1.0
    assert out[1, 2] == 1.0 and out[2, 2] == 1.0


def test_sobel_y_horizontal_step():
    P = np.zeros((4, 4))
    P[2:, :] = 1.0
    out = sobel_y(P)
    assert out[1, 1] == 1.0 and out[1, 2] == 1.0
    assert out[2, 1] == 1.0 and out[2, 2] == 1.0


def test_sobel_matches_bruteforce_convolution():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        P = rng.random((8, 8))
        ox = np.abs(conv2d_same_zero_pad(P, SOBEL_X)) / 4
        oy = np.abs(conv2d_same_zero_pad(P, SOBEL_Y)) / 4
        worst = max(worst, np.abs(sobel_x(P) - ox).max(), np.abs(sobel_y(P) - oy).max())
    assert worst <= 1e-9


def test_sobel_y_is_transposed_sobel_x():
    rng = np.random.default_rng(1)
    for _ in range(10):
        P = rng.random((7, 9))
        np.testing.assert_allclose(sobel_y(P), sobel_x(P.T).T, atol=1e-15)


@pytest.mark.parametrize("shape", [(2, 5), (5, 2), (1, 1)])
def test_sobel_rejects_small_maps(shape):
    with pytest.raises(InvalidInputError):
        sobel_x(np.zeros(shape))


def test_sobel_rejects_out_of_range():
    with pytest.raises(InvalidInputError):
        sobel_x(np.full((4, 4), 1.5))


def test_invert_examples():
    np.testing.assert_array_equal(invert(np.zeros((3, 3))), np.ones((3, 3)))
    np.testing.assert_array_equal(invert(np.full((4, 4), 0.25)), np.full((4, 4), 0.75))


@given(prob_maps)
def test_invert_is_involution(M):
    # 1 - (1 - m) is not always m in floating point; check the documented
    # exactness on dyadic values and closeness elsewhere
    np.testing.assert_allclose(invert(invert(M)), M, atol=1e-15)


def test_invert_involution_exact_on_dyadic():
    rng = np.random.default_rng(2)
    M = rng.integers(0, 1025, size=(6, 6)) / 1024.0
    np.testing.assert_array_equal(invert(invert(M)), M)


def test_encode_all_zeros():
    enc = encode_spatial(np.zeros((5, 5)))
    assert enc.shape == (6, 5, 5)
    for c, value in enumerate([0, 1, 0, 0, 1, 1]):
        assert np.all(enc[c] == value)


def test_encode_half_constant_interior():
    enc = encode_spatial(np.full((6, 6), 0.5))
    for c, value in enumerate([0.5, 0.5, 0, 0, 1, 1]):
        assert np.all(enc[c, 1:-1, 1:-1] == value)


@settings(max_examples=50)
@given(prob_maps)
def test_encode_pair_sums_and_range(P):
    enc = encode_spatial(P)
    ones = np.ones_like(P)
    for a, b in [(0, 1), (2, 4), (3, 5)]:
        np.testing.assert_array_equal(enc[a] + enc[b], ones)
    assert enc.min() >= 0.0 and enc.max() <= 1.0


def test_encode_deterministic():
    P = np.random.default_rng(3).random((9, 9))
    assert encode_spatial(P).tobytes() == encode_spatial(P.copy()).tobytes()


def test_encoding_modes():
    P = np.random.default_rng(4).random((8, 8))
    full = encode_spatial(P, "full")
    np.testing.assert_array_equal(encode_spatial(P, "mask")[0], full[0])
    np.testing.assert_array_equal(encode_spatial(P, "edge"), full[[0, 2, 3]])
    np.testing.assert_array_equal(encode_spatial(P, "full7"), full[:5])
    assert [discriminator_channels(m) for m in ("mask", "edge", "full7", "full")] == [3, 5, 7, 8]
    with pytest.raises(ConfigError):
        encode_spatial(P, "bogus")


def test_build_discriminator_input():
    rng = np.random.default_rng(5)
    images = rng.normal(size=(2, 8, 8))
    P = rng.random((8, 8))
    out = build_discriminator_input(images, P)
    assert out.shape == (8, 8, 8)
    assert out[:2].tobytes() == images.tobytes()
    np.testing.assert_array_equal(out[2:], encode_spatial(P))


def test_build_discriminator_input_shape_mismatch():
    with pytest.raises(InvalidInputError):
        build_discriminator_input(np.zeros((2, 8, 8)), np.zeros((7, 8)))


def test_spatial_encoder_transformer():
    X = np.random.default_rng(6).random((3, 8, 8))
    enc = SpatialEncoder(mode="edge").fit(X)
    out = enc.transform(X)
    assert out.shape == (3, 3, 8, 8)
    assert enc.n_channels_out_ == 3
    assert enc.get_params() == {"mode": "edge"}
