"""Reduced-width encoder-decoder segmentation network.

Encoder level ``i`` holds two 3x3 conv + ReLU layers with ``base * 2**i``
channels followed by 2x2 max pooling.  The decoder replaces transposed
convolution by nearest upsampling: the upsampled tensor is concatenated with
the skip tensor and fed to the level's first 3x3 conv.  A 1x1 conv and a
sigmoid produce the defect probability map.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .ops import ShapeError


class StateError(RuntimeError):
    """Backward was requested without a recorded forward pass."""


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 2
    out_channels: int = 1
    depth: int = 4
    base_channels: int = 16
    input_size: int = 256

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1:
            raise ValueError("depth and base_channels must be >= 1")
        if self.input_size % (2**self.depth):
            raise ValueError(
                f"input_size {self.input_size} not divisible by 2**depth={2**self.depth}"
            )

    def widths(self) -> list[int]:
        return [self.base_channels * 2**i for i in range(self.depth + 1)]


def _layer_shapes(cfg: UNetConfig) -> list[tuple[str, int, int]]:
    """(name, in_channels, out_channels) of every 3x3 conv, in forward order."""
    ch = cfg.widths()
    layers = []
    prev = cfg.in_channels
    for i in range(cfg.depth):
        layers += [(f"enc{i}.conv0", prev, ch[i]), (f"enc{i}.conv1", ch[i], ch[i])]
        prev = ch[i]
    layers += [("mid.conv0", prev, ch[-1]), ("mid.conv1", ch[-1], ch[-1])]
    for i in reversed(range(cfg.depth)):
        layers += [(f"dec{i}.conv0", ch[i + 1] + ch[i], ch[i]), (f"dec{i}.conv1", ch[i], ch[i])]
    return layers


class UNetModel:
    def __init__(self, config: UNetConfig | None = None, params: dict | None = None):
        self.config = config or UNetConfig()
        self.params: dict[str, np.ndarray] = params if params is not None else {}
        self.grads: dict[str, np.ndarray] = {}
        self._tape: list | None = None

    @classmethod
    def initialize(cls, config: UNetConfig | None = None, seed: int = 0,
                   dtype=np.float32) -> "UNetModel":
        """He-uniform (fan-in) weights, zero biases."""
        config = config or UNetConfig()
        rng = np.random.default_rng(seed)
        params = {}
        for name, cin, cout in _layer_shapes(config):
            limit = np.sqrt(6.0 / (cin * 9))
            params[f"{name}.weight"] = rng.uniform(-limit, limit, (cout, cin, 3, 3)).astype(dtype)
            params[f"{name}.bias"] = np.zeros(cout, dtype=dtype)
        c0 = config.base_channels
        limit = np.sqrt(6.0 / c0)
        params["head.weight"] = rng.uniform(-limit, limit, (config.out_channels, c0)).astype(dtype)
        params["head.bias"] = np.zeros(config.out_channels, dtype=dtype)
        return cls(config, params)

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype) -> "UNetModel":
        return UNetModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "UNetModel":
        return UNetModel(self.config, {k: v.copy() for k, v in self.params.items()})

    # ------------------------------------------------------------------
    def _conv_relu(self, x, name, tape):
        y, cache = ops.conv3x3_forward(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])
        y, mask = ops.relu_forward(y)
        if tape is not None:
            tape.append(("conv", name, cache, mask))
        return y

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        """Probability map for a batch ``(N, C, H, W)``; returns ``(N, 1, H, W)``."""
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ShapeError(f"expected (N, {cfg.in_channels}, H, W) input, got {x.shape}")
        h, w = x.shape[2:]
        step = 2**cfg.depth
        if h % step or w % step:
            raise ShapeError(f"input extent {h}x{w} not divisible by {step}")
        tape = [] if record else None
        a = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
        skips = []
        for i in range(cfg.depth):
            a = self._conv_relu(a, f"enc{i}.conv0", tape)
            a = self._conv_relu(a, f"enc{i}.conv1", tape)
            skips.append(a)
            a, idx = ops.maxpool2_forward(a)
            if tape is not None:
                tape.append(("pool", idx))
        a = self._conv_relu(a, "mid.conv0", tape)
        a = self._conv_relu(a, "mid.conv1", tape)
        for i in reversed(range(cfg.depth)):
            up = ops.upsample_nearest2(a)
            a = np.concatenate([up, skips[i]], axis=0)
            if tape is not None:
                tape.append(("cat", up.shape[0]))
            a = self._conv_relu(a, f"dec{i}.conv0", tape)
            a = self._conv_relu(a, f"dec{i}.conv1", tape)
        z, cache = ops.conv1x1_forward(a, self.params["head.weight"], self.params["head.bias"])
        p = ops.sigmoid(z)
        if tape is not None:
            tape.append(("head", cache, p))
        self._tape = tape
        return p.transpose(1, 0, 2, 3)

    def backward(self, dpred: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of every parameter given dL/dpred of the last recorded forward."""
        if self._tape is None:
            raise StateError("backward() called before a recorded forward()")
        cfg = self.config
        tape = list(self._tape)
        grads: dict[str, np.ndarray] = {}
        _, cache, p = tape.pop()
        dz = dpred.transpose(1, 0, 2, 3) * p * (1 - p)
        da, grads["head.weight"], grads["head.bias"] = ops.conv1x1_backward(dz, cache)
        dskips = [None] * cfg.depth

        def conv_back(da):
            _, name, cache, mask = tape.pop()
            dx, grads[f"{name}.weight"], grads[f"{name}.bias"] = ops.conv3x3_backward(
                ops.relu_backward(da, mask), cache)
            return dx

        for i in range(cfg.depth):
            da = conv_back(da)
            da = conv_back(da)
            _, n_up = tape.pop()
            dskips[i] = da[n_up:]
            da = ops.upsample_nearest2_backward(da[:n_up])
        da = conv_back(da)
        da = conv_back(da)
        for i in reversed(range(cfg.depth)):
            _, idx = tape.pop()
            da = ops.maxpool2_backward(da, idx) + dskips[i]
            da = conv_back(da)
            da = conv_back(da)
        self.grads = grads
        self._input_grad = da.transpose(1, 0, 2, 3)
        return grads

    def state_config(self) -> dict:
        return asdict(self.config)


def forward_patch(model: UNetModel, stack: np.ndarray) -> np.ndarray:
    """Probability map ``(1, S, S)`` for one preprocessed ``(2, S, S)`` input.

    ``S`` is the model's configured input size (256 by default).
    """
    stack = np.asarray(stack)
    s = model.config.input_size
    if stack.shape != (model.config.in_channels, s, s):
        raise ShapeError(f"expected input ({model.config.in_channels}, {s}, {s}), got {stack.shape}")
    dtype = next(iter(model.params.values())).dtype
    return model.forward(stack[None].astype(dtype, copy=False), record=False)[0]
