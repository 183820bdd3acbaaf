"""Virtual flaws: cut real defects out of training images and paste them elsewhere.

Builds a small synthetic set, extracts the flaw bank from a training subset,
and assembles a combined training set in which every second patch is a
defect-free crop carrying transplanted flaws. Writes a few patches as PGM so
they can be inspected with any image viewer.

    python demos/01_virtual_flaws.py [outdir]
"""
import sys
from collections import Counter
from pathlib import Path

from weldnde.augment import TrainingSetConfig, build_training_set, extract_flaws
from weldnde.imagecore import save_mask, save_pgm16
from weldnde.synthgen import generate_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/virtual")
out.mkdir(parents=True, exist_ok=True)

ds = generate_dataset(8, seed=1)
train_idx = list(range(6))  # images 6 and 7 play the held-out fold

bank = extract_flaws(ds, train_idx, fold_id="demo")
print(f"flaw bank: {len(bank)} flaws from {len(bank.source_ids)} images")

cfg = TrainingSetConfig(patch_size=128, patches_per_image=4)
patches = build_training_set(ds, train_idx, "combined", 1.0, cfg, seed=0, bank=bank,
                             fold_id="demo")
print("provenance:", dict(Counter(p.provenance for p in patches)))

held_out = {ds[i].image_id for i in (6, 7)}
leaked = [p for p in patches if set(p.flaw_sources) & held_out]
print("patches carrying held-out flaws:", len(leaked))

for k, p in enumerate(patches[:6]):
    save_pgm16(p.image, out / f"patch{k}_{p.provenance}.pgm")
    save_mask(p.mask, out / f"patch{k}_{p.provenance}_mask.pgm")
print("wrote", out)
