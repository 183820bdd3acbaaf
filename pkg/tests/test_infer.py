import numpy as np
import pytest

from weldnde.imagecore import GrayImage
from weldnde.infer import InferConfig, benchmark, plan_tiles, predict_image, prepare_stack
from weldnde.nnet import UNetConfig, UNetModel

SMALL = UNetConfig(depth=2, base_channels=4, input_size=64)


def zero_model(cfg=SMALL):
    m = UNetModel.initialize(cfg, seed=0)
    return UNetModel(cfg, {k: np.zeros_like(v) for k, v in m.params.items()})


def coverage_oracle(width, height, grid):
    cov = np.zeros((height, width), int)
    for y, x in grid.origins:
        for r in range(y, min(y + grid.tile, height)):
            for c in range(x, min(x + grid.tile, width)):
                cov[r, c] += 1
    return cov


def test_plan_tiles_examples():
    g = plan_tiles(256, 256, 256, 0)
    assert g.origins == [(0, 0)]
    assert len(plan_tiles(512, 512, 256, 0)) == 4
    g = plan_tiles(300, 300, 256, 32)
    assert g.xs == (0, 44) and g.ys == (0, 44) and len(g) == 4
    assert coverage_oracle(300, 300, g).min() >= 1
    with pytest.raises(ValueError):
        plan_tiles(300, 300, 256, 256)


@pytest.mark.parametrize("w,h,tile,ov", [(1000, 700, 256, 32), (257, 900, 256, 0), (90, 90, 64, 16),
                                         (513, 129, 64, 50)])
def test_tile_coverage(w, h, tile, ov):
    g = plan_tiles(w, h, tile, ov)
    cov = coverage_oracle(w, h, g)
    assert cov.min() >= 1
    np.testing.assert_array_equal(cov, g.coverage())
    for axis in (g.xs, g.ys):
        steps = np.diff(axis)
        assert np.all(steps[:-1] == tile - ov) and np.all(steps <= tile - ov)
    # overlap bands between consecutive tiles are covered twice
    if len(g.xs) > 1 and ov > 0:
        x1 = g.xs[1]
        assert cov[0, x1:x1 + ov].min() >= 2


def test_uniform_model_thresholds():
    img = GrayImage(np.random.default_rng(0).random((150, 210)))
    m = zero_model()
    assert not predict_image(m, img, InferConfig(overlap=16), threshold=0.6).bits.any()
    full = predict_image(m, img, InferConfig(overlap=16), threshold=0.4)
    assert full.bits.all() and full.shape == img.shape and full.semantics == "prediction"


def union_oracle(model, img, cfg):
    """OR of every tile's binarised, replicated mask placed on its own canvas."""
    tile = model.config.input_size
    stack, margin = prepare_stack(img.pixels, tile, cfg)
    grid = plan_tiles(stack.shape[2], stack.shape[1], tile, cfg.overlap)
    total = np.zeros((2 * stack.shape[1], 2 * stack.shape[2]), bool)
    for y, x in grid.origins:
        p = model.forward(stack[None, :, y:y + tile, x:x + tile].astype(np.float32), record=False)[0, 0]
        canvas = np.zeros_like(total)
        up = np.kron(p >= cfg.threshold, np.ones((2, 2), bool))
        canvas[2 * y:2 * y + 2 * tile, 2 * x:2 * x + 2 * tile] = up
        total |= canvas
    h, w = img.shape
    return total[margin:margin + h, margin:margin + w]


@pytest.mark.parametrize("shape,seed", [((128, 128), 0), ((171, 260), 1), ((300, 97), 2)])
def test_or_merge_equals_union(shape, seed):
    rng = np.random.default_rng(seed)
    model = UNetModel.initialize(SMALL, seed=seed)
    img = GrayImage(rng.random(shape))
    cfg = InferConfig(overlap=16)
    # pick a threshold that splits the map, so the comparison is not trivial
    stack, _ = prepare_stack(img.pixels, 64, cfg)
    p = model.forward(stack[None, :, :64, :64].astype(np.float32), record=False)
    cfg = InferConfig(overlap=16, threshold=float(np.median(p)))
    got = predict_image(model, img, cfg).bits
    assert 0 < got.mean() < 1
    np.testing.assert_array_equal(got, union_oracle(model, img, cfg))
    np.testing.assert_array_equal(got, predict_image(model, img, cfg).bits)


def test_mean_merge_mode():
    img = GrayImage(np.random.default_rng(3).random((140, 140)))
    m = zero_model()
    assert predict_image(m, img, InferConfig(overlap=16, merge="mean"), threshold=0.5).bits.all()
    with pytest.raises(ValueError):
        InferConfig(merge="max")


def test_or_merge_is_monotone_in_overlap():
    # every pixel the mean merge marks is also marked by some tile, hence by OR
    rng = np.random.default_rng(4)
    model = UNetModel.initialize(SMALL, seed=4)
    img = GrayImage(rng.random((200, 200)))
    stack, _ = prepare_stack(img.pixels, 64, InferConfig(overlap=16))
    thr = float(np.median(model.forward(stack[None, :, :64, :64].astype(np.float32), record=False)))
    a = predict_image(model, img, InferConfig(overlap=16, threshold=thr)).bits
    b = predict_image(model, img, InferConfig(overlap=16, threshold=thr, merge="mean")).bits
    assert not np.any(b & ~a)


def test_shift_consistency_for_interior_flaw():
    # cropping two strides (model scale) off the left edge moves the flaw from
    # the third tile column into the second at the same in-tile position
    model = UNetModel.initialize(SMALL, seed=5)
    rng = np.random.default_rng(5)
    base = 0.6 + 0.01 * rng.standard_normal((256, 400))
    yy, xx = np.mgrid[:256, :400]
    base[(yy - 128) ** 2 + (xx - 240) ** 2 < 36] -= 0.2
    crop = 2 * 48
    stack, _ = prepare_stack(base, 64, InferConfig(overlap=16))
    p = model.forward(stack[None, :, 48:112, 96:160].astype(np.float32), record=False)
    cfg = InferConfig(overlap=16, threshold=float(np.quantile(p, 0.7)))
    a = predict_image(model, GrayImage(base), cfg).bits
    b = predict_image(model, GrayImage(base[:, crop:]), cfg).bits
    wa = a[118:138, 230:250]
    wb = b[118:138, 230 - crop:250 - crop]
    assert wa.any()
    np.testing.assert_array_equal(wa, wb)


def test_overlap_must_be_below_tile():
    with pytest.raises(ValueError):
        predict_image(zero_model(), GrayImage(np.zeros((64, 64))), InferConfig(overlap=64))


def test_benchmark_contract():
    img = GrayImage(np.random.default_rng(6).random((96, 96)))
    m = UNetModel.initialize(SMALL, seed=0)
    with pytest.raises(ValueError):
        benchmark(m, img, repetitions=2)
    r = benchmark(m, img, repetitions=3, cfg=InferConfig(overlap=16))
    assert len(r.samples_ms) == 3 and r.n_tiles == 1
    assert min(r.samples_ms) <= r.median_ms_per_tile <= max(r.samples_ms)
    assert r.tiles_per_s == pytest.approx(1e3 / r.median_ms_per_tile)


def test_benchmark_scales_with_tile_count():
    m = UNetModel.initialize(SMALL, seed=0)
    cfg = InferConfig(overlap=16)
    r2 = benchmark(m, GrayImage(np.zeros((96, 192))), repetitions=7, cfg=cfg)
    r4 = benchmark(m, GrayImage(np.zeros((192, 192))), repetitions=7, cfg=cfg)
    assert (r2.n_tiles, r4.n_tiles) == (2, 4)
    ratio = r4.median_total_ms / r2.median_total_ms
    assert 1.0 <= ratio <= 3.0
