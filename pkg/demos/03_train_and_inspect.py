"""A short end-to-end run: train a small U-Net, segment held-out radiographs, score them.

This is the pipeline behind ``weldnde experiment`` on one split with 1500
steps, about four minutes on one CPU core. With only four test images every
flaw may be hit, in which case the POD fit reports that it needs misses too;
``weldnde experiment`` pools many more flaws per fold.

    python demos/03_train_and_inspect.py [outdir]
"""
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from weldnde.augment import build_training_set, sample_patches
from weldnde.config import PipelineConfig
from weldnde.evalnde.experiment import compute_metrics, evaluate_predictions
from weldnde.imagecore import save_pgm16
from weldnde.infer import predict_image
from weldnde.nnet import UNetModel, train
from weldnde.postproc import analyze_mask, render_overlay, report_json
from weldnde.synthgen import generate_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/run")
out.mkdir(parents=True, exist_ok=True)

cfg = PipelineConfig()
ds = generate_dataset(16, cfg.synth, seed=2)
train_idx, test_idx = list(range(12)), list(range(12, 16))

patches = build_training_set(ds, train_idx, "combined", 1.0, cfg.training_set(), seed=0)
val = [p for i in train_idx[:4] for p in
       sample_patches(ds[i].image, ds[i].ground_truth, ds[i].weld, 2,
                      np.random.default_rng(i), cfg.patch_size)]
print(f"{len(patches)} training patches, {len(val)} validation patches")

model = UNetModel.initialize(cfg.unet, seed=100)
tcfg = replace(cfg.train_config(), max_steps=1500, val_interval=250)
model, hist = train(model, patches, val, tcfg,
                    progress=lambda step, loss, vl, lr: print(f"step {step} train {loss:.4f} val {vl:.4f}"))

samples = [ds[i] for i in test_idx]
preds = [predict_image(model, s.image, cfg.infer) for s in samples]
records, false_calls = evaluate_predictions(samples, preds, cfg.rules)
row, _ = compute_metrics("combined", 1.0, "demo", samples, records, false_calls)
print(f"hits {row.n_hits}/{row.n_flaws}, false calls {row.n_false_calls}, "
      f"a90 {row.a90:.2f} mm, a90/95 {row.a90_95:.2f} mm, notes: {row.note or '-'}")

inds = analyze_mask(preds[0], cfg.rules)
save_pgm16(render_overlay(samples[0].image, inds), out / "overlay.pgm")
(out / "indications.json").write_text(report_json(inds))
print("wrote", out)
