"""Cross-validated strategy x fraction experiment grid."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..augment import STRATEGIES, TrainingSetConfig, build_training_set, sample_patches, subset_indices
from ..geometry import max_feret_mm
from ..infer import InferConfig, predict_image
from ..nnet.train import TrainConfig, train
from ..nnet.unet import UNetConfig, UNetModel
from ..postproc import AcceptanceRules, analyze_mask
from ..seeding import mix_seed
from .matching import HIT_DILATION_PX, HitMissRecord, match_indications
from .pod import DegenerateDataError, FitError, NotDemonstrableError, PodCurve, fit_pod
from .rates import EmptyMetricError, false_call_rates, kfold_split, sizing_error

log = logging.getLogger(__name__)

METRIC_FIELDS = ("a90", "a90_95", "sizing_mean", "sizing_rms", "fc_per_10cm_weld", "fc_per_image")
CSV_FIELDS = ("strategy", "fraction", "fold") + METRIC_FIELDS + ("n_flaws", "n_hits", "n_false_calls", "note")


@dataclass(frozen=True)
class ExperimentConfig:
    model: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    training_set: TrainingSetConfig = field(default_factory=TrainingSetConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    rules: AcceptanceRules = field(default_factory=AcceptanceRules)
    val_patches_per_image: int = 4
    hit_dilation: int = HIT_DILATION_PX


@dataclass
class MetricsRow:
    strategy: str
    fraction: float
    fold: str  # fold index or "worst"
    a90: float
    a90_95: float
    sizing_mean: float
    sizing_rms: float
    fc_per_10cm_weld: float
    fc_per_image: float
    n_flaws: int = 0
    n_hits: int = 0
    n_false_calls: int = 0
    note: str = ""

    def __post_init__(self):
        if self.fc_per_10cm_weld < 0 or self.fc_per_image < 0:
            raise ValueError("false-call rates must be non-negative")


@dataclass
class FoldOutcome:
    records: list[HitMissRecord]
    false_calls: list
    curve: PodCurve | None
    row: MetricsRow


@dataclass
class ExperimentResult:
    rows: list[MetricsRow]
    failures: list[tuple[str, float, int, str]] = field(default_factory=list)
    curves: dict = field(default_factory=dict)  # (strategy, fraction) -> pooled PodCurve | None
    records: dict = field(default_factory=dict)  # (strategy, fraction, fold) -> records

    def fold_rows(self) -> list[MetricsRow]:
        return [r for r in self.rows if r.fold != "worst"]

    def worst_rows(self) -> list[MetricsRow]:
        return [r for r in self.rows if r.fold == "worst"]


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    return str(v)


def rows_to_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricsRow]:
    out = []
    for d in csv.DictReader(io.StringIO(text)):
        kw = {k: d[k] for k in CSV_FIELDS}
        kw["fraction"] = float(kw["fraction"])
        for k in METRIC_FIELDS:
            kw[k] = float(kw[k])
        for k in ("n_flaws", "n_hits", "n_false_calls"):
            kw[k] = int(kw[k])
        out.append(MetricsRow(**kw))
    return out


def rows_to_json(rows: list[MetricsRow]) -> str:
    def clean(d):
        return {k: (_fmt(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}
    return json.dumps([clean(asdict(r)) for r in rows], indent=1, sort_keys=True)


def pod_csv(curve: PodCurve, n: int = 100) -> str:
    a, p, lo = curve.sample(n)
    lines = ["a_mm,pod,pod_lo95"]
    lines += [f"{x:.10g},{y:.10g},{z:.10g}" for x, y, z in zip(a, p, lo)]
    return "\n".join(lines) + "\n"


def evaluate_predictions(samples, predictions, rules: AcceptanceRules, fold_id: str = "",
                         dilation: int = HIT_DILATION_PX):
    """Hit/miss records and false calls for predicted masks against ``samples``' truth.

    True sizes are measured on each flaw's ground-truth mask with the same
    Feret convention used for indications, so a perfect segmentation has zero
    sizing error.
    """
    records, false_calls = [], []
    for s, pred in zip(samples, predictions):
        inds = analyze_mask(pred, rules)
        truth = [s.flaw_mask(k) for k in range(len(s.defects))]
        sizes = [max_feret_mm(m, s.image.pixel_pitch) for m in truth]
        r, f = match_indications(inds, truth, sizes, s.weld.bits, s.image_id, fold_id, dilation)
        records += r
        false_calls += f
    return records, false_calls


def compute_metrics(strategy: str, fraction: float, fold: str, samples, records, false_calls):
    notes = []
    curve = None
    a90 = math.nan
    a9095 = math.inf
    try:
        curve = fit_pod(records)
        a90 = curve.a90
        if curve.penalized:
            notes.append("firth")
        a9095 = curve.a90_95
    except (DegenerateDataError, FitError, NotDemonstrableError) as e:
        notes.append(f"pod: {e}")
    try:
        se = sizing_error(records)
        sm, sr = se.mean, se.rms
    except EmptyMetricError:
        sm = sr = math.nan
        notes.append("no hits")
    pitch = samples[0].image.pixel_pitch if samples else 0.1
    fc = false_call_rates(false_calls, [s.weld.bits for s in samples], max(len(samples), 1), pitch)
    row = MetricsRow(strategy, float(fraction), fold, float(a90), float(a9095), float(sm), float(sr),
                     fc.per_10cm_weld, fc.per_image, len(records), sum(r.hit for r in records),
                     len(false_calls), "; ".join(notes))
    return row, curve


def _nanmax(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return max(vals) if vals else math.nan


def worst_row(rows: list[MetricsRow]) -> MetricsRow:
    """Pessimistic envelope over folds: per-metric maximum (largest |mean| for the signed sizing mean)."""
    means = [r.sizing_mean for r in rows if not math.isnan(r.sizing_mean)]
    worst_mean = max(means, key=abs) if means else math.nan
    return MetricsRow(rows[0].strategy, rows[0].fraction, "worst",
                      _nanmax([r.a90 for r in rows]), _nanmax([r.a90_95 for r in rows]),
                      worst_mean, _nanmax([r.sizing_rms for r in rows]),
                      max(r.fc_per_10cm_weld for r in rows), max(r.fc_per_image for r in rows),
                      sum(r.n_flaws for r in rows), sum(r.n_hits for r in rows),
                      sum(r.n_false_calls for r in rows), f"{len(rows)} folds")


def run_fold(dataset, train_idx, test_idx, strategy: str, fraction: float, fold: int,
             cfg: ExperimentConfig, seed: int) -> FoldOutcome:
    fold_seed = mix_seed(seed, fold)
    patches = build_training_set(dataset, train_idx, strategy, fraction, cfg.training_set,
                                 seed=fold_seed, fold_id=f"fold{fold}")
    subset = subset_indices(train_idx, fraction, fold_seed)
    vrng = np.random.default_rng(mix_seed(seed, 200 + fold))
    val = []
    for i in subset:
        s = dataset[i]
        val += sample_patches(s.image, s.ground_truth, s.weld, cfg.val_patches_per_image, vrng,
                              cfg.training_set.patch_size, cfg.training_set.augment.weld_fraction,
                              source_id=s.image_id)
    model = UNetModel.initialize(cfg.model, seed=mix_seed(seed, 100 + fold))
    tcfg = TrainConfig(**{**asdict(cfg.train), "seed": mix_seed(seed, 300 + fold)})
    model, _ = train(model, patches, val, tcfg)
    samples = [dataset[i] for i in test_idx]
    preds = [predict_image(model, s.image, cfg.infer) for s in samples]
    records, fcs = evaluate_predictions(samples, preds, cfg.rules, str(fold), cfg.hit_dilation)
    row, curve = compute_metrics(strategy, fraction, str(fold), samples, records, fcs)
    return FoldOutcome(records, fcs, curve, row)


def run_experiment(dataset, strategies=STRATEGIES, fractions=(1.0,), k: int = 5,
                   cfg: ExperimentConfig | None = None, seed: int = 0, progress=None) -> ExperimentResult:
    """Per-fold metric rows plus one worst-of-folds row for every (strategy, fraction) cell.

    Every strategy sees the same folds, training subsets, initial weights and
    evaluation images, so cells differ only in how the training patches were
    built.
    """
    cfg = cfg or ExperimentConfig()
    folds = kfold_split(len(dataset), k, seed)
    result = ExperimentResult([])
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        for fraction in fractions:
            fold_rows, pooled = [], []
            for f, test_idx in enumerate(folds):
                train_idx = sorted(i for g, fo in enumerate(folds) if g != f for i in fo)
                try:
                    out = run_fold(dataset, train_idx, test_idx, strategy, fraction, f, cfg, seed)
                except Exception as e:  # recorded and excluded
                    log.warning("fold %d of %s@%g failed: %s", f, strategy, fraction, e)
                    result.failures.append((strategy, fraction, f, f"{type(e).__name__}: {e}"))
                    continue
                fold_rows.append(out.row)
                pooled += out.records
                result.records[(strategy, fraction, f)] = out.records
                if progress:
                    progress(out.row)
            result.rows += fold_rows
            if fold_rows:
                result.rows.append(worst_row(fold_rows))
            try:
                result.curves[(strategy, fraction)] = fit_pod(pooled)
            except (DegenerateDataError, FitError):
                result.curves[(strategy, fraction)] = None
    return result
