import math

import numpy as np
import pytest
from scipy import ndimage, stats

from oracles import exact_feret
from weldnde.synthgen import (DefectSpec, SceneSpec, SynthConfig, _clean_image, generate_dataset,
                              read_dataset, render_scene, sample_sizes, write_dataset)


def scene(defects=(), noise=0.0, seed=5):
    return SceneSpec(width=128, height=128, pixel_pitch=0.1, weld_width_mm=8.0, weld_sag_px=2.0,
                     noise_sigma=noise, defects=tuple(defects), rng_seed=seed)


def test_empty_scene_is_clean_background():
    s = scene()
    img, gt, weld = render_scene(s)
    assert not gt.bits.any()
    clean, band = _clean_image(s)
    np.testing.assert_array_equal(img.pixels, np.clip(clean, 0, 1))
    np.testing.assert_array_equal(weld.bits, band)
    assert weld.bits.any()
    # smooth: no pixel-to-pixel jumps beyond the shoulder ramp
    assert np.abs(np.diff(img.pixels, axis=1)).max() < 0.02


def test_rendering_is_bit_deterministic():
    d = [DefectSpec("pore", 1.2, (4.0, 6.35)), DefectSpec("crack", 2.5, (9.0, 6.3), 30.0, 0.3, 0.25)]
    a = render_scene(scene(d, noise=0.01))
    b = render_scene(scene(d, noise=0.01))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(getattr(x, "pixels", None) if hasattr(x, "pixels") else x.bits,
                                      getattr(y, "pixels", None) if hasattr(y, "pixels") else y.bits)


def test_pore_one_mm_has_ten_px_feret():
    s = scene([DefectSpec("pore", 1.0, (6.3, 6.35), contrast=0.3)])
    _, gt, _ = render_scene(s)
    ys, xs = np.nonzero(gt.bits)
    fmax, _ = exact_feret(list(zip(xs, ys)))
    assert abs(fmax - 10.0) <= 2.0


def test_crack_is_thin_and_long():
    s = scene([DefectSpec("crack", 3.0, (6.3, 6.35), orientation_deg=0.0, contrast=0.3, width_mm=0.2)])
    _, gt, _ = render_scene(s)
    ys, xs = np.nonzero(gt.bits)
    fmax, fmin = exact_feret(list(zip(xs, ys)))
    assert abs(fmax - 30.0) <= 3.0
    assert 1.0 <= fmin <= 4.0


def test_defect_outside_weld_is_rejected():
    with pytest.raises(ValueError):
        render_scene(scene([DefectSpec("pore", 1.0, (6.3, 1.0))]))


def test_defect_spec_validation():
    with pytest.raises(ValueError):
        DefectSpec("pore", 0.0, (1, 1))
    with pytest.raises(ValueError):
        DefectSpec("pore", 1.0, (1, 1), contrast=0.6)
    with pytest.raises(ValueError):
        DefectSpec("slag", 1.0, (1, 1))


def test_defects_are_darker_than_their_surroundings(small_dataset):
    checked = 0
    for s in small_dataset:
        for k in range(len(s.defects)):
            m = s.flaw_mask(k)
            ring = ndimage.binary_dilation(m, iterations=4) & ~ndimage.binary_dilation(m, iterations=1)
            ring &= ~s.ground_truth.bits
            assert s.image.pixels[m].mean() < s.image.pixels[ring].mean()
            checked += 1
    assert checked > 10


def test_dataset_invariants(small_dataset):
    for s in small_dataset:
        assert not np.any(s.ground_truth.bits & ~s.weld.bits)
        assert s.weld.bits.any()
        for k in range(len(s.defects)):
            assert s.flaw_mask(k).sum() >= 1
        assert s.image.shape == s.ground_truth.shape == s.weld.shape


def test_generate_dataset_reproducible():
    a = generate_dataset(5, seed=3)
    b = generate_dataset(5, seed=3)
    assert len(a) == 5
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.image.pixels, y.image.pixels)
        assert x.defects == y.defects
    c = generate_dataset(5, seed=4)
    assert not np.array_equal(a[0].image.pixels, c[0].image.pixels)


def test_zero_density_gives_empty_truth():
    ds = generate_dataset(4, SynthConfig(flaws_per_image=0.0), seed=1)
    assert all(not s.ground_truth.bits.any() and not s.defects for s in ds)


def test_size_sampler_log_uniform():
    rng = np.random.default_rng(0)
    sizes = sample_sizes(rng, 200, (0.5, 4.0))
    assert sizes.min() >= 0.5 and sizes.max() <= 4.0
    u = (np.log(sizes) - math.log(0.5)) / (math.log(4.0) - math.log(0.5))
    assert stats.kstest(u, "uniform").statistic < 0.1


def test_rendered_flaw_sizes_stay_in_range():
    ds = generate_dataset(20, SynthConfig(size_range_mm=(0.8, 3.0)), seed=2)
    sizes = [d.size_mm for s in ds for d in s.defects]
    assert sizes and min(sizes) >= 0.8 and max(sizes) <= 3.0


def test_empty_size_range_rejected():
    with pytest.raises(ValueError):
        SynthConfig(size_range_mm=(2.0, 2.0))
    with pytest.raises(ValueError):
        sample_sizes(np.random.default_rng(0), 3, (3.0, 1.0))
    with pytest.raises(ValueError):
        generate_dataset(0)


def test_dataset_manifest_round_trip(tmp_path, small_dataset):
    path = write_dataset(small_dataset[:3], tmp_path / "ds")
    back = read_dataset(path)
    assert [s.image_id for s in back] == [s.image_id for s in small_dataset[:3]]
    for a, b in zip(small_dataset, back):
        np.testing.assert_array_equal(a.ground_truth.bits, b.ground_truth.bits)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert np.max(np.abs(a.image.pixels - b.image.pixels)) <= 0.5 / 65535 + 1e-12
        assert a.defects == b.defects
