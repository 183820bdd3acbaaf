"""``weldnde`` command-line orchestrator.

Subcommands: synth, augment, train, infer, eval, experiment, report. All
share ``--config`` (INI file, see :mod:`weldnde.config`), ``--seed``,
``--out`` and repeatable ``--set section.key=value`` overrides. Relative
output directories are resolved under ``$WELDNDE_OUT_ROOT`` when that
variable is set; no other environment variable is read.

On failure a single machine-readable line ``error: {json}`` is written to
stderr and the exit status is 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .augment import build_training_set, sample_patches, subset_indices
from .evalnde.experiment import (compute_metrics, evaluate_predictions, pod_csv, rows_from_csv,
                                 rows_to_csv, rows_to_json, run_experiment)
from .imagecore import BinaryMask, load_mask, load_pgm16, save_mask, save_pgm16
from .infer import InferConfig, benchmark, predict_image
from .nnet.checkpoint import load_model, save_model
from .nnet.train import train
from .nnet.unet import UNetModel
from .postproc import analyze_mask, render_overlay, report_json
from .report import machine_description, metric_plots, pod_plot, summary_markdown
from .seeding import mix_seed
from .synthgen import generate_dataset, read_dataset, write_dataset

OUT_ROOT_ENV = "WELDNDE_OUT_ROOT"
log = logging.getLogger("weldnde")


class MissingArtifact(FileNotFoundError):
    pass


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifact(f"missing {what}: {path}")
    return Path(path)


def _versions() -> dict:
    import scipy
    import skimage
    try:
        own = metadata.version("weldnde")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"weldnde": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-image": skimage.__version__, "python": sys.version.split()[0]}


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _manifest(out: Path, command: str, cfg: cfgmod.PipelineConfig, **extra) -> Path:
    doc = {"command": command, "config_hash": cfg.digest(), "seed": cfg.seed,
           "versions": _versions(), "config": cfg.to_dict()}
    doc.update(extra)
    return _write(out / f"run_{command}.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _out_dir(cfg: cfgmod.PipelineConfig) -> Path:
    out = Path(cfg.out)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(args, out: Path, cfg: cfgmod.PipelineConfig):
    path = Path(args.dataset) if getattr(args, "dataset", None) else out / "dataset" / "manifest.json"
    return read_dataset(_require(path, "dataset manifest")), str(path)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg, out):
    ds = generate_dataset(cfg.n_images, cfg.synth, cfg.seed)
    path = write_dataset(ds, out / "dataset")
    _manifest(out, "synth", cfg, outputs=[str(path)])
    return {"manifest": str(path), "images": len(ds)}


def cmd_augment(args, cfg, out):
    ds, src = _dataset(args, out, cfg)
    idx = list(range(len(ds)))
    patches = build_training_set(ds, idx, cfg.strategy, cfg.fraction, cfg.training_set(),
                                 seed=cfg.seed, fold_id="all")
    d = out / "augment"
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, p in enumerate(patches):
        stem = f"patch_{i:05d}"
        save_pgm16(p.image, d / f"{stem}.pgm")
        save_mask(p.mask, d / f"{stem}_mask.pgm")
        save_mask(p.weld, d / f"{stem}_weld.pgm")
        entries.append({"id": stem, "provenance": p.provenance, "source": p.source_id,
                        "origin": list(p.origin)})
    _write(d / "manifest.json", json.dumps({"strategy": cfg.strategy, "fraction": cfg.fraction,
                                            "patches": entries}, indent=1, sort_keys=True) + "\n")
    _manifest(out, "augment", cfg, inputs=[src])
    return {"patches": len(patches)}


def cmd_train(args, cfg, out):
    ds, src = _dataset(args, out, cfg)
    idx = list(range(len(ds)))
    tcfg = cfg.train_config()
    patches = build_training_set(ds, idx, cfg.strategy, cfg.fraction, cfg.training_set(),
                                 seed=cfg.seed, fold_id="all")
    vrng = np.random.default_rng(mix_seed(cfg.seed, 200))
    val = []
    for i in subset_indices(idx, cfg.fraction, cfg.seed):
        s = ds[i]
        val += sample_patches(s.image, s.ground_truth, s.weld, cfg.val_patches_per_image, vrng,
                              cfg.patch_size, cfg.augment.weld_fraction, source_id=s.image_id)
    model = UNetModel.initialize(cfg.unet, seed=mix_seed(cfg.seed, 100))
    model, history = train(model, patches, val, tcfg,
                           progress=lambda s, l, v, lr: log.info("step %d loss %.4f val %.4f lr %g", s, l, v, lr))
    ckpt = out / "model.ckpt"
    save_model(model, ckpt)
    _write(out / "train_history.csv", history.to_csv())
    _manifest(out, "train", cfg, inputs=[src], outputs=[str(ckpt)])
    return {"checkpoint": str(ckpt), "best_step": history.best_step}


def _infer_cfg(cfg, args) -> InferConfig:
    kw = {}
    if getattr(args, "threshold", None) is not None:
        kw["threshold"] = args.threshold
    if getattr(args, "overlap", None) is not None:
        kw["overlap"] = args.overlap
    return InferConfig(**{**cfg.infer.__dict__, **kw})


def cmd_infer(args, cfg, out):
    model = load_model(_require(Path(args.model), "model checkpoint"))
    img = load_pgm16(_require(Path(args.image), "input image"))
    icfg = _infer_cfg(cfg, args)
    mask = predict_image(model, img, icfg)
    out_mask = Path(args.out_mask) if args.out_mask else out / (Path(args.image).stem + "_pred.pgm")
    out_mask.parent.mkdir(parents=True, exist_ok=True)
    save_mask(mask, out_mask)
    inds = analyze_mask(mask, cfg.rules)
    stem = out_mask.with_suffix("")
    save_pgm16(render_overlay(img, inds), Path(f"{stem}_overlay.pgm"))
    _write(Path(f"{stem}_indications.json"), report_json(inds) + "\n")
    result = {"mask": str(out_mask), "indications": len(inds)}
    if args.benchmark:
        b = benchmark(model, img, args.benchmark, icfg)
        doc = {"median_ms_per_tile": b.median_ms_per_tile, "tiles_per_s": b.tiles_per_s,
               "n_tiles": b.n_tiles, "samples_ms": list(b.samples_ms),
               "tile_px": model.config.input_size, "machine": machine_description()}
        _write(out / "benchmark.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
        result["median_ms_per_tile"] = b.median_ms_per_tile
    _manifest(out, "infer", cfg, inputs=[args.model, args.image])
    return result


def cmd_eval(args, cfg, out):
    ds, src = _dataset(args, out, cfg)
    if args.pred_dir:
        pdir = Path(args.pred_dir)
        preds = [load_mask(_require(pdir / f"{s.image_id}_pred.pgm", "prediction mask"), "prediction")
                 for s in ds]
        preds = [BinaryMask(p.bits, "prediction", s.image.pixel_pitch) for p, s in zip(preds, ds)]
    elif args.model:
        model = load_model(_require(Path(args.model), "model checkpoint"))
        preds = [predict_image(model, s.image, _infer_cfg(cfg, args)) for s in ds]
    else:
        raise ValueError("eval needs --pred-dir or --model")
    records, fcs = evaluate_predictions(ds, preds, cfg.rules, "eval", cfg.hit_dilation)
    row, curve = compute_metrics("eval", 1.0, "eval", ds, records, fcs)
    _write(out / "eval_metrics.csv", rows_to_csv([row]))
    _write(out / "eval_metrics.json", rows_to_json([row]) + "\n")
    if curve is not None:
        _write(out / "eval_pod.csv", pod_csv(curve))
    _manifest(out, "eval", cfg, inputs=[src])
    return {"hits": row.n_hits, "flaws": row.n_flaws, "note": row.note}


def cmd_experiment(args, cfg, out):
    if getattr(args, "dataset", None):
        ds, src = _dataset(args, out, cfg)
    else:
        ds, src = generate_dataset(cfg.n_images, cfg.synth, cfg.seed), "synthesized in memory"
    res = run_experiment(ds, cfg.strategies, cfg.fractions, cfg.k, cfg.experiment(), cfg.seed,
                         progress=lambda r: log.info("%s %g fold %s a90/95=%s", r.strategy, r.fraction,
                                                     r.fold, r.a90_95))
    _write(out / "metrics.csv", rows_to_csv(res.rows))
    _write(out / "metrics.json", rows_to_json(res.rows) + "\n")
    for (strategy, fraction), curve in sorted(res.curves.items()):
        if curve is not None:
            _write(out / "pod" / f"pod_{strategy}_{fraction:g}.csv", pod_csv(curve))
    _manifest(out, "experiment", cfg, inputs=[src],
              failures=[list(f) for f in res.failures])
    return {"rows": len(res.rows), "failures": len(res.failures)}


def _read_pod_csv(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


def cmd_report(args, cfg, out):
    mpath = _require(Path(args.metrics) if args.metrics else out / "metrics.csv", "metrics CSV")
    rows = rows_from_csv(mpath.read_text())
    if not rows:
        raise ValueError(f"metrics file {mpath} contains no rows")
    rdir = out / "report"
    written = []
    for stem, svg in metric_plots(rows).items():
        written.append(_write(rdir / f"{stem}.svg", svg))
    pod_dir = Path(args.pod_dir) if args.pod_dir else mpath.parent / "pod"
    pods = sorted(pod_dir.glob("*.csv")) if pod_dir.exists() else []
    if mpath.parent.joinpath("eval_pod.csv").exists():
        pods.append(mpath.parent / "eval_pod.csv")
    for p in pods:
        a, pod, lo = _read_pod_csv(p)
        written.append(_write(rdir / f"{p.stem}.svg", pod_plot(a, pod, lo, f"POD: {p.stem}")))
    bpath = Path(args.benchmark) if args.benchmark else mpath.parent / "benchmark.json"
    bench = json.loads(bpath.read_text()) if bpath.exists() else None
    written.append(_write(rdir / "summary.md", summary_markdown(rows, bench)))
    _manifest(out, "report", cfg, inputs=[str(mpath)])
    return {"files": [str(w) for w in written]}


COMMANDS = {"synth": cmd_synth, "augment": cmd_augment, "train": cmd_train, "infer": cmd_infer,
            "eval": cmd_eval, "experiment": cmd_experiment, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="configuration override; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="weldnde", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="render a synthetic radiograph dataset")
    for name, hlp in (("augment", "materialise an augmented training set"),
                      ("train", "train a segmentation model")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("--dataset", help="dataset manifest.json")
    sp = sub.add_parser("infer", parents=[common], help="predict a defect mask for one image")
    sp.add_argument("--model", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--out-mask")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--overlap", type=int)
    sp.add_argument("--benchmark", type=int, default=0, metavar="REPS",
                    help="also time per-tile inference over REPS repetitions")
    sp = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    sp.add_argument("--dataset")
    sp.add_argument("--pred-dir", help="directory of <id>_pred.pgm masks")
    sp.add_argument("--model", help="checkpoint to predict with instead of --pred-dir")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--overlap", type=int)
    sp = sub.add_parser("experiment", parents=[common], help="run the cross-validated grid")
    sp.add_argument("--dataset", help="dataset manifest (default: synthesize from the config)")
    sp = sub.add_parser("report", parents=[common], help="plots and summary from metrics")
    sp.add_argument("--metrics")
    sp.add_argument("--pod-dir")
    sp.add_argument("--benchmark", help="benchmark.json from `infer --benchmark`")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.build_config(args.config, args.set, args.seed, args.out)
        out = _out_dir(cfg)
        result = COMMANDS[args.command](args, cfg, out)
    except Exception as e:  # reported as one machine-readable line
        err = {"command": args.command, "error": type(e).__name__, "message": str(e)}
        print("error: " + json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "ok": True, **result}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
