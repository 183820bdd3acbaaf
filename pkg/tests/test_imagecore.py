import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from weldnde.imagecore import (AffineTransform, BinaryMask, FormatError, GrayImage, apply_affine,
                               crop, downsample2, gaussian_blur, load_mask, load_pgm16,
                               make_input_stack, mirror_pad, save_mask, save_pgm16, unsharp_mask,
                               write_pgm)


# -- explicit-kernel oracle ---------------------------------------------------

def oracle_kernel(sigma):
    r = math.ceil(3 * sigma)
    w = [math.exp(-0.5 * (i / sigma) ** 2) for i in range(-r, r + 1)]
    s = sum(w)
    return [x / s for x in w], r


def oracle_blur(a, sigma):
    """Separable blur by explicit loops; borders reflect about the pixel edge."""
    k, r = oracle_kernel(sigma)
    h, w = a.shape

    def refl(i, n):
        while i < 0 or i >= n:
            i = -i - 1 if i < 0 else 2 * n - i - 1
        return i

    tmp = np.zeros_like(a, dtype=float)
    for y in range(h):
        for x in range(w):
            tmp[y, x] = sum(k[j] * a[refl(y + j - r, h), x] for j in range(2 * r + 1))
    out = np.zeros_like(tmp)
    for y in range(h):
        for x in range(w):
            out[y, x] = sum(k[j] * tmp[y, refl(x + j - r, w)] for j in range(2 * r + 1))
    return out


def img(a, pitch=0.1):
    return GrayImage(np.asarray(a, dtype=float), pitch)


# -- PGM I/O ------------------------------------------------------------------

def test_load_pgm16_normalises_16bit(tmp_path):
    p = tmp_path / "a.pgm"
    write_pgm(p, np.array([[0, 65535], [32768, 0]]), 65535)
    g = load_pgm16(p, pixel_pitch=0.1)
    assert g.shape == (2, 2)
    np.testing.assert_array_equal(g.pixels, [[0.0, 1.0], [32768 / 65535, 0.0]])
    assert g.pixels[1, 0] == pytest.approx(0.5000076, abs=1e-7)


def test_load_pgm_8bit_saturates_to_one(tmp_path):
    p = tmp_path / "b.pgm"
    write_pgm(p, np.array([[255]]), 255)
    assert load_pgm16(p, 0.2).pixels[0, 0] == 1.0


def test_load_pgm_with_header_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(load_pgm16(p, 0.1).pixels, [[0.0, 1.0]])


@pytest.mark.parametrize("payload", [
    b"P5\n2 2\n65535\n\x00\x01\x02",           # truncated
    b"P5\n0 2\n255\n",                          # zero width
    b"P5\n2 0\n255\n",                          # zero height
    b"P6\n1 1\n255\n\x00\x00\x00",              # colour
    b"P5\nx 1\n255\n\x00",                      # malformed
    b"P5\n1",                                   # header cut short
])
def test_load_pgm_format_errors(tmp_path, payload):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(FormatError):
        load_pgm16(p, 0.1)


def test_pitch_comes_from_sidecar(tmp_path):
    p = tmp_path / "s.pgm"
    save_pgm16(img(np.full((3, 4), 0.25), pitch=0.07), p)
    g = load_pgm16(p)
    assert g.pixel_pitch == 0.07
    assert g.shape == (3, 4)


def test_missing_sidecar_is_format_error(tmp_path):
    p = tmp_path / "n.pgm"
    write_pgm(p, np.zeros((2, 2)), 255)
    with pytest.raises(FormatError):
        load_pgm16(p)


def test_save_load_constant_half_within_quantisation(tmp_path):
    p = tmp_path / "h.pgm"
    save_pgm16(img(np.full((5, 6), 0.5)), p)
    assert np.max(np.abs(load_pgm16(p).pixels - 0.5)) <= 1 / 65535


def test_save_load_zeros_exact(tmp_path):
    p = tmp_path / "z.pgm"
    save_pgm16(img(np.zeros((4, 4))), p)
    assert np.all(load_pgm16(p).pixels == 0.0)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(0, 1)))
def test_pgm_round_trip_quantisation_bound(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("rt") / "r.pgm"
    save_pgm16(img(a), p)
    assert np.max(np.abs(load_pgm16(p).pixels - a)) <= 0.5 / 65535 + 1e-12


def test_save_to_unwritable_path_raises(tmp_path):
    with pytest.raises(OSError):
        save_pgm16(img(np.zeros((2, 2))), tmp_path / "no_such_dir" / "x.pgm")


def test_mask_round_trip_uses_0_255(tmp_path):
    bits = np.array([[1, 0, 1], [0, 0, 1]], dtype=bool)
    p = tmp_path / "m.pgm"
    save_mask(BinaryMask(bits, "weld_region", 0.1), p)
    raw = p.read_bytes()
    assert raw.endswith(bytes([255, 0, 255, 0, 0, 255]))
    m = load_mask(p)
    assert m.semantics == "weld_region"
    np.testing.assert_array_equal(m.bits, bits)


# -- types --------------------------------------------------------------------

def test_gray_image_rejects_out_of_range_and_bad_pitch():
    with pytest.raises(ValueError):
        GrayImage(np.array([[1.2]]))
    with pytest.raises(ValueError):
        GrayImage(np.array([[0.2]]), pixel_pitch=0.0)


def test_gray_image_is_read_only():
    g = img(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        g.pixels[0, 0] = 1.0


def test_singular_affine_rejected():
    t = AffineTransform(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]))
    with pytest.raises(ValueError):
        apply_affine(img(np.zeros((3, 3))), t)


# -- blur / unsharp -----------------------------------------------------------

def test_blur_constant_image_unchanged():
    out = gaussian_blur(img(np.full((9, 7), 0.37)), 1.5)
    np.testing.assert_allclose(out.pixels, 0.37, atol=1e-15)


def test_blur_impulse_centre_equals_kernel_peak():
    a = np.zeros((11, 11))
    a[5, 5] = 1.0
    k, r = oracle_kernel(1.0)
    assert gaussian_blur(img(a), 1.0).pixels[5, 5] == pytest.approx(k[r] ** 2, abs=1e-15)


def test_blur_matches_explicit_oracle_including_borders():
    rng = np.random.default_rng(0)
    a = rng.random((8, 13))
    np.testing.assert_allclose(gaussian_blur(img(a), 1.3).pixels, oracle_blur(a, 1.3), atol=1e-12)


def test_blur_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        gaussian_blur(img(np.zeros((3, 3))), 0.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 24), st.integers(1, 24)),
              elements=st.floats(0, 1)),
       st.floats(0.3, 4.0))
def test_blur_preserves_mean(a, sigma):
    assert abs(gaussian_blur(img(a), sigma).pixels.mean() - a.mean()) < 1e-6


def test_unsharp_constant_and_zero_amount_identity():
    c = img(np.full((6, 6), 0.4))
    np.testing.assert_array_equal(unsharp_mask(c, 2.0, 1.0).pixels, c.pixels)
    rng = np.random.default_rng(1)
    r = img(rng.random((7, 9)))
    np.testing.assert_array_equal(unsharp_mask(r, 2.0, 0.0).pixels, r.pixels)


def test_unsharp_step_edge_overshoot_matches_oracle():
    a = np.zeros((5, 20))
    a[:, 10:] = 1.0
    pre = a + (a - oracle_blur(a, 1.0))
    assert pre[2, 10] > 1.0 and pre[2, 9] < 0.0
    out = unsharp_mask(img(a), 1.0, 1.0).pixels
    assert out[2, 10] == 1.0 and out[2, 9] == 0.0
    np.testing.assert_allclose(out, np.clip(pre, 0, 1), atol=1e-12)


def test_unsharp_partial_amount_matches_oracle():
    rng = np.random.default_rng(2)
    a = 0.3 + 0.4 * rng.random((9, 9))
    np.testing.assert_allclose(unsharp_mask(img(a), 1.0, 0.3).pixels,
                               np.clip(a + 0.3 * (a - oracle_blur(a, 1.0)), 0, 1), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 16), st.integers(1, 16)), elements=st.floats(0, 1)),
       st.floats(0.5, 3.0), st.floats(0.0, 5.0))
def test_unsharp_output_in_unit_interval(a, sigma, amount):
    out = unsharp_mask(img(a), sigma, amount).pixels
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_input_stack_planes():
    c = img(np.full((6, 8), 0.6))
    s = make_input_stack(c)
    assert s.shape == (2, 6, 8)
    np.testing.assert_array_equal(s.planes[0], s.planes[1])
    a = np.zeros((4, 30))
    a[:, 15:] = 0.8
    a += 0.1
    sigma = 1.0
    s = make_input_stack(img(a), sigma, 1.0)
    np.testing.assert_array_equal(s.planes[0], a)
    changed = np.nonzero(np.any(s.planes[0] != s.planes[1], axis=0))[0]
    r = math.ceil(3 * sigma)
    assert len(changed) > 0
    assert changed.min() >= 15 - r and changed.max() <= 15 + r - 1


# -- resampling ---------------------------------------------------------------

def test_downsample_block_mean_and_pitch():
    d = downsample2(img(np.array([[0.0, 0.2], [0.4, 0.6]])))
    assert d.shape == (1, 1)
    assert d.pixels[0, 0] == pytest.approx(0.3, abs=1e-15)
    c = downsample2(img(np.full((4, 6), 0.7), pitch=0.1))
    assert c.shape == (2, 3) and c.pixel_pitch == pytest.approx(0.2)
    np.testing.assert_allclose(c.pixels, 0.7)
    with pytest.raises(ValueError):
        downsample2(img(np.zeros((3, 3))))


def test_downsample_then_replicate_constant_identity():
    c = np.full((6, 8), 0.55)
    d = downsample2(img(c)).pixels
    np.testing.assert_array_equal(d.repeat(2, 0).repeat(2, 1), c)


def test_mirror_pad_examples():
    a = np.array([[0.1, 0.2, 0.3]] * 3)
    assert mirror_pad(img(a), 0).pixels.tolist() == a.tolist()
    p = mirror_pad(img(a), 1).pixels
    np.testing.assert_array_equal(p[2], [0.2, 0.1, 0.2, 0.3, 0.2])
    with pytest.raises(ValueError):
        mirror_pad(img(a), 3)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 12)), elements=st.floats(0, 1)),
       st.integers(0, 11))
def test_mirror_pad_crop_identity(a, m):
    m = min(m, min(a.shape) - 1)
    p = mirror_pad(img(a), m)
    assert p.shape == (a.shape[0] + 2 * m, a.shape[1] + 2 * m)
    np.testing.assert_array_equal(crop(p, m, m, *a.shape).pixels, a)


def test_affine_identity_bit_exact():
    rng = np.random.default_rng(3)
    g = img(rng.random((7, 5)))
    m = BinaryMask(rng.random((7, 5)) > 0.5)
    np.testing.assert_array_equal(apply_affine(g, AffineTransform.identity()).pixels, g.pixels)
    np.testing.assert_array_equal(apply_affine(m, AffineTransform.identity()).bits, m.bits)


def test_affine_horizontal_flip_of_single_pixel_mask():
    w, h = 9, 5
    bits = np.zeros((h, w), dtype=bool)
    bits[3, 2] = True
    flip = AffineTransform(np.array([[-1.0, 0.0, w - 1], [0.0, 1.0, 0.0]]))
    out = apply_affine(BinaryMask(bits), flip).bits
    assert np.argwhere(out).tolist() == [[3, w - 1 - 2]]


def test_affine_rotation_90_matches_coordinate_oracle():
    a = np.array([[0.1, 0.2], [0.3, 0.4]])
    t = AffineTransform.rotation(90.0, 0.5, 0.5)
    out = apply_affine(img(a), t).pixels
    # oracle: destination (x, y) samples source R(-90) (p - c) + c
    expect = np.zeros_like(a)
    for y in range(2):
        for x in range(2):
            dx, dy = x - 0.5, y - 0.5
            sx, sy = dy + 0.5, -dx + 0.5
            expect[y, x] = a[int(round(sy)), int(round(sx))]
    np.testing.assert_allclose(out, expect, atol=1e-12)
    assert sorted(out.ravel().round(12)) == sorted(a.ravel())


@settings(max_examples=30, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(2, 16), st.integers(2, 16))),
       st.floats(-180, 180), st.floats(-0.4, 0.4), st.floats(0.6, 1.6))
def test_affine_mask_stays_binary(bits, angle, shear, scale):
    h, w = bits.shape
    lin = scale * np.array([[1.0, shear], [0.0, 1.0]])
    t = AffineTransform.about(lin, (w - 1) / 2, (h - 1) / 2).then(
        AffineTransform.rotation(angle, (w - 1) / 2, (h - 1) / 2))
    out = apply_affine(BinaryMask(bits), t).bits
    assert out.dtype == bool and set(np.unique(out.astype(int))) <= {0, 1}
