import math

import numpy as np
import pytest
from scipy import ndimage

from weldnde.evalnde import (DegenerateDataError, EmptyMetricError, ExperimentConfig,
                             HitMissRecord, InconsistencyError, MetricsRow, NotDemonstrableError,
                             PodCurve, a90_95, false_call_rates, fit_pod, kfold_split,
                             match_indications, rows_from_csv, rows_to_csv, run_experiment,
                             sizing_error, weld_length_mm, worst_row)
from weldnde.evalnde.matching import FalseCall
from weldnde.evalnde.rates import skeleton_length_px
from weldnde.postproc import analyze_mask
from weldnde.imagecore import BinaryMask


def blob(shape, r0, c0, h=3, w=3):
    m = np.zeros(shape, bool)
    m[r0:r0 + h, c0:c0 + w] = True
    return m


def inds_of(mask):
    return analyze_mask(BinaryMask(mask, "prediction", 0.1))


def logistic_records(rng, n, b0=-6.0, b1=4.0, lo=1.0, hi=30.0):
    a = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    p = 1 / (1 + np.exp(-(b0 + b1 * np.log(a))))
    hits = rng.random(n) < p
    return [HitMissRecord(float(x), bool(h), float(x) if h else None) for x, h in zip(a, hits)]


# -- matching -----------------------------------------------------------------

def test_match_perfect_and_empty():
    shape = (40, 60)
    truths = [blob(shape, 5, 5), blob(shape, 20, 40, 4, 6)]
    weld = np.ones(shape, bool)
    pred = truths[0] | truths[1]
    recs, fcs = match_indications(inds_of(pred), truths, [0.3, 0.6], weld)
    assert all(r.hit for r in recs) and not fcs
    recs, fcs = match_indications([], truths, [0.3, 0.6], weld)
    assert not any(r.hit for r in recs) and not fcs and len(recs) == 2


def test_match_far_blob_is_miss_and_false_call():
    shape = (40, 60)
    truth = blob(shape, 10, 10)
    pred = blob(shape, 10, 23)  # 10 px gap
    recs, fcs = match_indications(inds_of(pred), [truth], [0.3], blob(shape, 0, 0, 40, 30))
    assert [r.hit for r in recs] == [False]
    assert len(fcs) == 1 and fcs[0].inside_weld


def test_match_dilation_edge():
    shape = (30, 30)
    truth = blob(shape, 10, 10, 1, 1)
    near = blob(shape, 10, 12, 1, 1)   # 2 px: inside the dilated disk
    far = blob(shape, 12, 12, 1, 1)    # sqrt(8) px: outside
    assert match_indications(inds_of(near), [truth], [0.1], np.ones(shape, bool))[0][0].hit
    assert not match_indications(inds_of(far), [truth], [0.1], np.ones(shape, bool))[0][0].hit


def test_blob_spanning_two_truths_credits_both():
    shape = (30, 60)
    t1, t2 = blob(shape, 10, 10), blob(shape, 10, 20)
    pred = blob(shape, 10, 10, 3, 13)
    recs, fcs = match_indications(inds_of(pred), [t1, t2], [0.3, 0.3], np.ones(shape, bool))
    assert all(r.hit for r in recs) and not fcs


def test_match_conserves_counts():
    rng = np.random.default_rng(0)
    shape = (80, 80)
    for _ in range(20):
        truths = [blob(shape, *rng.integers(0, 75, 2)) for _ in range(rng.integers(1, 5))]
        pred = ndimage.binary_dilation(rng.random(shape) < 0.004)
        inds = inds_of(pred)
        recs, fcs = match_indications(inds, truths, [0.3] * len(truths), np.ones(shape, bool))
        assert len(recs) == len(truths)
        matched = [j for j, d in enumerate(inds) if j not in {f.index for f in fcs}]
        assert len(matched) + len(fcs) == len(inds)


def test_match_frame_mismatch():
    with pytest.raises(ValueError):
        match_indications([], [np.zeros((5, 5), bool)], [1.0], np.zeros((6, 6), bool))


def test_record_validation():
    with pytest.raises(ValueError):
        HitMissRecord(0.0, False)
    with pytest.raises(ValueError):
        HitMissRecord(1.0, True)


# -- POD ----------------------------------------------------------------------

def test_pod_sampling_oracle():
    true_a90 = math.exp((math.log(9) + 6) / 4)
    assert true_a90 == pytest.approx(7.76, abs=0.01)
    within, ratio_ok, trials = 0, 0, 40
    for seed in range(trials):
        c = fit_pod(logistic_records(np.random.default_rng(seed), 200))
        within += abs(c.a90 / true_a90 - 1) <= 0.2
        ratio_ok += 1.0 <= c.a90_95 / c.a90 <= 2.0
    assert within >= 0.9 * trials and ratio_ok >= 0.9 * trials


def test_pod_consistency_within_three_se():
    ok = 0
    for seed in range(40):
        c = fit_pod(logistic_records(np.random.default_rng(500 + seed), 500))
        se = np.sqrt(np.diag(c.cov))
        ok += abs(c.b0 + 6) <= 3 * se[0] and abs(c.b1 - 4) <= 3 * se[1]
    assert ok >= 38


def test_pod_band_and_monotone():
    c = fit_pod(logistic_records(np.random.default_rng(1), 200))
    a = np.exp(np.linspace(0, 4, 200))
    assert np.all(c.pod_lo(a) <= c.pod(a))
    assert np.all(np.diff(c.pod(a)) >= 0)
    assert c.a90_95 > c.a90
    assert c.pod_lo(c.a90_95) >= 0.9 and c.pod_lo(c.a90_95 - 2e-4) < 0.9


def test_zero_covariance_band_collapses():
    c = PodCurve(-6.0, 4.0, np.zeros((2, 2)), 1.0, 30.0, 100)
    assert a90_95(c) == c.a90


def test_degenerate_inputs():
    with pytest.raises(DegenerateDataError):
        fit_pod([HitMissRecord(1.0 + i, True, 1.0) for i in range(10)])
    with pytest.raises(DegenerateDataError):
        fit_pod([HitMissRecord(1.0 + i, i % 2 == 0, 1.0 if i % 2 == 0 else None) for i in range(10)])
    narrow = [HitMissRecord(1.0 + 0.01 * i, i % 2 == 0, 1.0 if i % 2 == 0 else None) for i in range(30)]
    with pytest.raises(DegenerateDataError):
        fit_pod(narrow)


def test_not_demonstrable():
    c = PodCurve(-6.0, 0.5, np.eye(2), 1.0, 2.0, 30)
    with pytest.raises(NotDemonstrableError):
        a90_95(c)


def separable_records(n=40):
    rng = np.random.default_rng(0)
    a = np.exp(rng.uniform(math.log(0.5), math.log(8.0), n))
    return [HitMissRecord(float(x), bool(x > 2), float(x) if x > 2 else None) for x in a], a


def test_separable_fit_is_penalized_and_centred():
    recs, a = separable_records()
    c = fit_pod(recs)
    assert c.penalized and c.b1 > 0
    a50 = math.exp(-c.b0 / c.b1)
    assert a[a < 2].max() <= a50 <= a[a > 2].min()


def test_separable_a90_in_gap():
    # the stated example: a90 between the largest miss and the smallest hit
    recs, a = separable_records()
    c = fit_pod(recs)
    assert a[a < 2].max() <= c.a90 <= a[a > 2].min()


# -- sizing and rates ---------------------------------------------------------

def hm(true, pred):
    return HitMissRecord(true, pred is not None, pred)


def test_sizing_examples():
    assert sizing_error([hm(1.0, 1.0), hm(2.0, 2.0)]).rms == 0
    se = sizing_error([hm(1.0, 1.1), hm(2.0, 1.9), hm(3.0, None)])
    assert se.mean == pytest.approx(0.0, abs=1e-12) and se.rms == pytest.approx(0.1)
    se = sizing_error([hm(1.0, 1.3)])
    assert se.mean == pytest.approx(0.3) and se.rms == pytest.approx(0.3)
    with pytest.raises(EmptyMetricError):
        sizing_error([hm(1.0, None)])


def band(h=100, w=150, rows=(40, 60)):
    m = np.zeros((h, w), bool)
    m[rows[0]:rows[1]] = True
    return m


def test_weld_length_of_straight_band():
    assert skeleton_length_px(band()) == pytest.approx(150.0)
    assert weld_length_mm([band()] * 10, 0.1) == pytest.approx(150.0)
    assert skeleton_length_px(np.zeros((10, 10), bool)) == 0.0


def test_false_call_rates_examples():
    fcs = [FalseCall(i, 0.3, i < 3) for i in range(5)]
    r = false_call_rates(fcs, [band()] * 10, 10, 0.1)
    assert r.per_10cm_weld == pytest.approx(2.0) and r.per_image == pytest.approx(0.5)
    r0 = false_call_rates([], [band()] * 10, 10, 0.1)
    assert r0.per_10cm_weld == 0 and r0.per_image == 0
    with pytest.raises(InconsistencyError):
        false_call_rates(fcs, [np.zeros((10, 10), bool)], 1, 0.1)


def test_kfold():
    folds = kfold_split(10, 5, seed=3)
    assert [len(f) for f in folds] == [2] * 5
    assert sorted(i for f in folds for i in f) == list(range(10))
    assert folds == kfold_split(10, 5, seed=3)
    sizes = [len(f) for f in kfold_split(13, 5, seed=0)]
    assert max(sizes) - min(sizes) <= 1
    with pytest.raises(ValueError):
        kfold_split(3, 5)


# -- experiment ---------------------------------------------------------------

def row(fold, a9095, mean, fc):
    return MetricsRow("standard", 1.0, fold, 1.0, a9095, mean, abs(mean), fc, fc / 2)


def test_worst_row_definition():
    rows = [row("0", 2.0, 0.1, 1.0), row("1", 3.0, -0.4, 0.5), row("2", math.inf, 0.2, 2.0)]
    w = worst_row(rows)
    assert w.fold == "worst" and w.a90_95 == math.inf
    assert w.sizing_mean == -0.4 and w.sizing_rms == 0.4
    assert w.fc_per_10cm_weld == 2.0 and w.fc_per_image == 1.0


def test_csv_round_trip():
    rows = [row("0", 2.0, 0.1, 1.0), row("worst", math.inf, math.nan, 0.0)]
    back = rows_from_csv(rows_to_csv(rows))
    assert rows_to_csv(back) == rows_to_csv(rows)
    with pytest.raises(ValueError):
        MetricsRow("standard", 1.0, "0", 1, 1, 0, 0, -1.0, 0.0)


def test_run_experiment_counting(small_dataset):
    from weldnde.augment import TrainingSetConfig
    from weldnde.infer import InferConfig
    from weldnde.nnet import TrainConfig, UNetConfig
    cfg = ExperimentConfig(model=UNetConfig(depth=2, base_channels=4, input_size=64),
                           train=TrainConfig(batch_size=4, max_steps=3, val_interval=3),
                           training_set=TrainingSetConfig(patch_size=128, patches_per_image=2),
                           infer=InferConfig(overlap=16), val_patches_per_image=1)
    res = run_experiment(small_dataset[:6], ["standard"], [1.0], k=2, cfg=cfg, seed=1)
    assert not res.failures
    assert len(res.fold_rows()) == 2 and len(res.worst_rows()) == 1
    again = run_experiment(small_dataset[:6], ["standard"], [1.0], k=2, cfg=cfg, seed=1)
    assert rows_to_csv(res.rows) == rows_to_csv(again.rows)
    w = res.worst_rows()[0]
    assert w.fc_per_image == max(r.fc_per_image for r in res.fold_rows())
