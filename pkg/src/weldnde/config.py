"""Pipeline configuration: an INI file layered under command-line overrides.

Grammar
-------
Standard INI sections; every value is a Python literal (``3``, ``0.5``,
``(0.5, 4.0)``, ``"combined"``, ``None``, ``True``). A value that does not
parse as a literal is taken as a bare string. Overrides use
``section.key=value`` with the same value syntax and win over the file.

Sections and keys mirror the library's config dataclasses::

    [global]       seed, out
    [synthgen]     n_images + SynthConfig fields
    [augment]      AugmentConfig fields
    [training_set] strategy, fraction, patch_size, patches_per_image, flaws_per_patch
    [unet]         UNetConfig fields
    [train]        TrainConfig fields (seed comes from [global])
    [infer]        InferConfig fields
    [postproc]     AcceptanceRules fields
    [evalnde]      k, strategies, fractions, val_patches_per_image, hit_dilation

Defaults describe the desk-scale preset: 256 x 256 synthetic radiographs,
128 px training patches (64 px at model scale) and a depth-3, base-8 network.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .augment import AugmentConfig, FlawTransformRanges, TrainingSetConfig
from .evalnde.experiment import ExperimentConfig
from .infer import InferConfig
from .nnet.train import TrainConfig
from .nnet.unet import UNetConfig
from .postproc import AcceptanceRules
from .synthgen import SynthConfig

DESK_UNET = {"depth": 3, "base_channels": 8, "input_size": 64}
DESK_TRAIN = {"batch_size": 8, "max_steps": 2000, "val_interval": 250}
DESK_INFER = {"overlap": 16}


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "runs"
    n_images: int = 64
    synth: SynthConfig = field(default_factory=SynthConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    strategy: str = "combined"
    fraction: float = 1.0
    patch_size: int = 128
    patches_per_image: int = 16
    flaws_per_patch: tuple[int, int] = (1, 3)
    unet: UNetConfig = field(default_factory=lambda: UNetConfig(**DESK_UNET))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(**DESK_TRAIN))
    infer: InferConfig = field(default_factory=lambda: InferConfig(**DESK_INFER))
    rules: AcceptanceRules = field(default_factory=AcceptanceRules)
    k: int = 5
    strategies: tuple[str, ...] = ("standard", "pure_virtual", "combined")
    fractions: tuple[float, ...] = (1.0, 0.25, 0.10)
    val_patches_per_image: int = 4
    hit_dilation: int = 2

    def training_set(self) -> TrainingSetConfig:
        return TrainingSetConfig(self.patch_size, self.patches_per_image, tuple(self.flaws_per_patch),
                                 self.augment, FlawTransformRanges())

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(self.unet, self.train_config(), self.training_set(), self.infer,
                                self.rules, self.val_patches_per_image, self.hit_dilation)

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_SECTIONS = {
    "synthgen": ("synth", SynthConfig),
    "augment": ("augment", AugmentConfig),
    "unet": ("unet", UNetConfig),
    "train": ("train", TrainConfig),
    "infer": ("infer", InferConfig),
    "postproc": ("rules", AcceptanceRules),
}
_FLAT = {
    "global": ("seed", "out"),
    "synthgen": ("n_images",),
    "training_set": ("strategy", "fraction", "patch_size", "patches_per_image", "flaws_per_patch"),
    "evalnde": ("k", "strategies", "fractions", "val_patches_per_image", "hit_dilation"),
}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and v == float("inf"):
        return "inf"
    return v


def parse_value(text: str):
    try:
        v = ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return text.strip()
    return tuple(v) if isinstance(v, list) else v


def _coerce(v, current):
    if isinstance(current, tuple) and isinstance(v, (list, tuple)):
        return tuple(tuple(x) if isinstance(x, list) else x for x in v)
    if isinstance(current, float) and isinstance(v, int) and not isinstance(v, bool):
        return float(v)
    return v


class ConfigError(ValueError):
    pass


def build_config(path: str | Path | None = None, overrides: list[str] = (),
                 seed: int | None = None, out: str | None = None) -> PipelineConfig:
    entries: dict[str, dict[str, str]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read(path)
        for sec in cp.sections():
            entries.setdefault(sec, {}).update(cp[sec])
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        key, value = item.split("=", 1)
        sec, name = key.split(".", 1)
        entries.setdefault(sec, {})[name] = value
    cfg = PipelineConfig()
    top: dict = {}
    nested: dict[str, dict] = {}
    for sec, kv in entries.items():
        if sec not in _FLAT and sec not in _SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")
        for name, raw in kv.items():
            value = parse_value(raw)
            if name in _FLAT.get(sec, ()):
                top[name] = _coerce(value, getattr(cfg, name))
            elif sec in _SECTIONS:
                attr, cls = _SECTIONS[sec]
                known = {f.name for f in fields(cls)}
                if name not in known:
                    raise ConfigError(f"unknown key {name!r} in [{sec}]")
                nested.setdefault(attr, {})[name] = _coerce(value, getattr(getattr(cfg, attr), name))
            else:
                raise ConfigError(f"unknown key {name!r} in [{sec}]")
    if seed is not None:
        top["seed"] = seed
    if out is not None:
        top["out"] = out
    try:
        for attr, kw in nested.items():
            top[attr] = dataclasses.replace(getattr(cfg, attr), **kw)
        return dataclasses.replace(cfg, **top)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
