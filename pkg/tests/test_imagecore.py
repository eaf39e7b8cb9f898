import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from softmask import imagecore
from softmask.imagecore import gaussian_blur, gradient, gradient_adjoint, to_luma


def pixel(r, g, b):
    return np.array([[[r, g, b]]], dtype=float)


@pytest.mark.parametrize("rgb, expected", [((1, 1, 1), 1.0), ((0, 0, 0), 0.0), ((1, 0, 0), 0.299)])
def test_luma_values(rgb, expected):
    assert to_luma(pixel(*rgb))[0, 0] == pytest.approx(expected, abs=1e-12)


def test_luma_matches_opencv_reference():
    import cv2

    rng = np.random.default_rng(3)
    img = rng.random((8, 9, 3)).astype(np.float32)
    # cv2 YCrCb uses the same BT.601 weights on the Y channel
    ref = cv2.cvtColor(img, cv2.COLOR_RGB2YCrCb)[..., 0]
    np.testing.assert_allclose(to_luma(img.astype(float)), ref, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (4, 4, 3), elements=st.floats(0, 1)), st.integers(0, 2), st.floats(0, 1))
def test_luma_monotone(img, ch, bump):
    brighter = img.copy()
    brighter[..., ch] = np.minimum(1.0, brighter[..., ch] + bump)
    assert np.all(to_luma(brighter) >= to_luma(img) - 1e-15)


def test_blur_preserves_constant():
    m = np.full((20, 17), 0.4)
    for sigma in (0.5, 1.5, 4.0):
        np.testing.assert_allclose(gaussian_blur(m, sigma), 0.4, atol=1e-12)


def test_blur_impulse_center_matches_direct_gaussian():
    m = np.zeros((33, 33))
    m[16, 16] = 1.0
    out = gaussian_blur(m, 1.5)
    radius = math.ceil(4.5)
    ii, jj = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    g2 = np.exp(-(ii**2 + jj**2) / (2 * 1.5**2))
    assert out[16, 16] == pytest.approx(g2[radius, radius] / g2.sum(), rel=1e-12)
    np.testing.assert_allclose(out[16 - radius : 17 + radius, 16 - radius : 17 + radius],
                               g2 / g2.sum(), atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-9)


def test_blur_linear():
    rng = np.random.default_rng(0)
    m1, m2 = rng.random((15, 12)), rng.random((15, 12))
    lhs = gaussian_blur(0.3 * m1 - 2.0 * m2, 1.5)
    rhs = 0.3 * gaussian_blur(m1, 1.5) - 2.0 * gaussian_blur(m2, 1.5)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@pytest.mark.parametrize("sigma", [0, -1, float("nan"), float("inf")])
def test_blur_rejects_bad_sigma(sigma):
    with pytest.raises(ValueError):
        gaussian_blur(np.zeros((5, 5)), sigma)


def test_gradient_constant_and_affine():
    gx, gy = gradient(np.full((6, 7), 0.3))
    assert not gx.any() and not gy.any()
    ii, jj = np.mgrid[0:6, 0:7]
    gx, gy = gradient(0.1 * jj)
    np.testing.assert_allclose(gx, 0.1, atol=1e-15)
    np.testing.assert_allclose(gy, 0.0, atol=1e-15)
    gx, gy = gradient(0.05 * ii + 0.02 * jj)
    np.testing.assert_allclose(gx[1:-1, 1:-1], 0.02, atol=1e-15)
    np.testing.assert_allclose(gy[1:-1, 1:-1], 0.05, atol=1e-15)


def test_gradient_coordinate_convention():
    # dx follows columns (rightward), dy follows rows (downward)
    m = np.zeros((5, 5))
    m[:, 3:] = 1.0
    gx, gy = gradient(m)
    assert gx[2, 2] == 0.5 and gx[2, 3] == 0.5 and not gy.any()
    gx, gy = gradient(m.T)
    assert gy[2, 2] == 0.5 and not gx.any()


def test_gradient_borders_one_sided():
    m = np.array([[0.0, 1.0, 4.0], [0.0, 1.0, 4.0]])
    gx, _ = gradient(m)
    np.testing.assert_array_equal(gx[0], [1.0, 2.0, 3.0])


def test_gradient_rejects_small():
    with pytest.raises(ValueError):
        gradient(np.zeros((1, 5)))


def test_gradient_adjoint_identity():
    rng = np.random.default_rng(5)
    m = rng.random((7, 9))
    cx, cy = rng.normal(size=(2, 7, 9))
    gx, gy = gradient(m)
    lhs = np.sum(cx * gx + cy * gy)
    rhs = np.sum(gradient_adjoint(cx, cy) * m)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_longdouble_preserved():
    m = np.linspace(0, 1, 12).reshape(3, 4).astype(np.longdouble)
    assert gradient(m)[0].dtype == np.longdouble


@pytest.mark.parametrize("bits", [8, 16])
def test_png_roundtrip(tmp_path, bits):
    rng = np.random.default_rng(2)
    img = rng.random((6, 5, 3))
    img[0, 0] = (1.3, -0.2, 0.5)
    imagecore.save_image(tmp_path / "a.png", img, bits=bits)
    back = imagecore.load_image(tmp_path / "a.png")
    q = 2**bits - 1
    expected = np.floor(np.clip(img, 0, 1) * q + 0.5) / q
    np.testing.assert_array_equal(back, expected)
    # channel order survives the round trip
    assert back[0, 0, 0] == 1.0 and back[0, 0, 1] == 0.0


def test_map_roundtrip(tmp_path):
    m = np.linspace(0, 1, 30).reshape(5, 6)
    imagecore.save_map(tmp_path / "m.png", m)
    back = imagecore.load_map(tmp_path / "m.png")
    assert back.shape == (5, 6)
    np.testing.assert_allclose(back, m, atol=0.5 / 65535 + 1e-15)


def test_round_half_up():
    m = np.array([[0.5 / 255, 1.5 / 255]])
    q = imagecore._quantize(m, 8)
    np.testing.assert_array_equal(q, [[1, 2]])


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        imagecore.load_image(tmp_path / "nope.png")
