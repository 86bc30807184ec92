"""QRNet: hierarchical Quad-Bayer to RGB restoration network.

Five levels, coarse to fine. The single-channel mosaic enters through an
input enhancement block (IEB) that runs pixel-unshuffle and three reflect-
padded average-pooling branches in parallel, gates their concatenation with
channel attention, and fuses back with the unshuffled branch. Levels 1-3
operate at 1/16, 1/8 and 1/4 resolution with residual blocks and start/tail
connections between neighboring levels; levels 4 and 5 climb back to full
resolution via pixel shuffle, re-concatenating the (unshuffled) input on
the way. The output head is linear; evaluation clamps to [0, 1].

Channel plan for base width C: levels 1/2/3 use 4C/2C/C, level 4 uses
max(4, C/2), level 5 uses max(4, C/4). Truncated variants (levels=4 or 3)
end in a head producing (2^missing)^2 times the output channels, restored
to full resolution by pixel shuffles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .autodiff import (Tensor, avg_pool2d, concat, conv2d, global_avg_pool,
                       leaky_relu, linear, mul, pixel_shuffle, pixel_unshuffle,
                       reshape, sigmoid, upsample_bilinear2x, ShapeError)
from .noise import Rng

_IEB_POOL_WINDOWS = (4, 6, 8)  # all stride 4; reflect pads 0, 1, 2


@dataclass(frozen=True)
class QRNetConfig:
    base_channels: int = 16
    res_blocks: int = 2
    output_mode: str = "rgb"  # rgb | raw
    activation_slope: float = 0.2
    interaction: bool = True
    ieb: bool = True
    levels: int = 5  # 5, 4 or 3

    def __post_init__(self):
        if self.base_channels < 4 or self.base_channels % 4:
            raise ValueError(f"base_channels must be >= 4 and divisible by 4, got {self.base_channels}")
        if self.res_blocks < 1:
            raise ValueError(f"res_blocks must be >= 1, got {self.res_blocks}")
        if self.output_mode not in ("rgb", "raw"):
            raise ValueError(f"output_mode must be rgb or raw, got {self.output_mode}")
        if self.levels not in (3, 4, 5):
            raise ValueError(f"levels must be 3, 4 or 5, got {self.levels}")

    @property
    def out_channels(self) -> int:
        return 3 if self.output_mode == "rgb" else 1

    @property
    def c4(self) -> int:
        return max(4, self.base_channels // 2)

    @property
    def c5(self) -> int:
        return max(4, self.base_channels // 4)


class QRNetWeights:
    """Named parameter tensors keyed by stable path strings."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = dict(params)

    def __getitem__(self, key: str) -> Tensor:
        return self.params[key]

    def __contains__(self, key: str) -> bool:
        return key in self.params

    def keys(self):
        return self.params.keys()

    def items(self):
        return self.params.items()

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self.params.items()}

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None


@dataclass(frozen=True)
class _Layer:
    name: str
    kind: str  # conv | linear
    cin: int
    cout: int
    k: int
    out_h: int
    out_w: int


def _layer_table(cfg: QRNetConfig, h: int = 64, w: int = 64) -> list[_Layer]:
    """Every parametrized layer with its output resolution at input h x w."""
    c = cfg.base_channels
    h4, w4 = h // 4, w // 4
    h8, w8 = h // 8, w // 8
    h16, w16 = h // 16, w // 16
    t: list[_Layer] = []
    if cfg.ieb:
        t.append(_Layer("ieb.b0.conv", "conv", 16, c, 3, h4, w4))
        for win in _IEB_POOL_WINDOWS:
            t.append(_Layer(f"ieb.p{win}.conv", "conv", 1, c, 3, h4, w4))
        t.append(_Layer("ieb.att.fc1", "linear", 4 * c, c, 1, 1, 1))
        t.append(_Layer("ieb.att.fc2", "linear", c, 4 * c, 1, 1, 1))
        t.append(_Layer("ieb.merge.conv", "conv", 4 * c, c, 3, h4, w4))
        t.append(_Layer("ieb.fuse.conv", "conv", 2 * c, c, 3, h4, w4))
    else:
        t.append(_Layer("stem.conv", "conv", 16, c, 3, h4, w4))
    t.append(_Layer("down2.conv", "conv", c, 2 * c, 3, h8, w8))
    t.append(_Layer("down1.conv", "conv", 2 * c, 4 * c, 3, h16, w16))

    t.append(_Layer("l1.head.conv", "conv", 4 * c, 4 * c, 3, h16, w16))
    for i in range(cfg.res_blocks):
        t.append(_Layer(f"l1.res{i}.conv1", "conv", 4 * c, 4 * c, 3, h16, w16))
        t.append(_Layer(f"l1.res{i}.conv2", "conv", 4 * c, 4 * c, 3, h16, w16))

    t.append(_Layer("l2.start.conv", "conv", 4 * c + 2 * c, 2 * c, 1, h8, w8))
    for i in range(cfg.res_blocks):
        t.append(_Layer(f"l2.res{i}.conv1", "conv", 2 * c, 2 * c, 3, h8, w8))
        t.append(_Layer(f"l2.res{i}.conv2", "conv", 2 * c, 2 * c, 3, h8, w8))
    t.append(_Layer("l2.tail.conv", "conv", 2 * c + 4 * c, 2 * c, 3, h8, w8))

    t.append(_Layer("l3.start.conv", "conv", 2 * c + c, c, 1, h4, w4))
    for i in range(cfg.res_blocks):
        t.append(_Layer(f"l3.res{i}.conv1", "conv", c, c, 3, h4, w4))
        t.append(_Layer(f"l3.res{i}.conv2", "conv", c, c, 3, h4, w4))
    t.append(_Layer("l3.tail.conv", "conv", c + 2 * c, c, 3, h4, w4))

    if cfg.levels >= 4:
        cin4 = c // 4 + (4 if cfg.interaction else 0)
        t.append(_Layer("l4.conv1", "conv", cin4, cfg.c4, 3, h // 2, w // 2))
        t.append(_Layer("l4.conv2", "conv", cfg.c4, cfg.c4, 3, h // 2, w // 2))
    if cfg.levels == 5:
        cin5 = cfg.c4 // 4 + (1 if cfg.interaction else 0)
        t.append(_Layer("l5.conv1", "conv", cin5, cfg.c5, 3, h, w))
        t.append(_Layer("l5.conv2", "conv", cfg.c5, cfg.c5, 3, h, w))
        t.append(_Layer("head.conv", "conv", cfg.c5, cfg.out_channels, 3, h, w))
    elif cfg.levels == 4:
        t.append(_Layer("head.conv", "conv", cfg.c4, 4 * cfg.out_channels, 3, h // 2, w // 2))
    else:
        t.append(_Layer("head.conv", "conv", c, 16 * cfg.out_channels, 3, h4, w4))
    return t


def init_weights(cfg: QRNetConfig, rng: Rng, scheme: str = "scaled",
                 dtype: str = "f32") -> QRNetWeights:
    """Gaussian init: N(0,1) for scheme 'paper_literal', N(0, 0.02^2) for
    'scaled' (the default); biases start at zero."""
    if scheme not in ("scaled", "paper_literal"):
        raise ValueError(f"unknown init scheme {scheme}")
    std = 1.0 if scheme == "paper_literal" else 0.02
    params: dict[str, Tensor] = {}
    for layer in _layer_table(cfg):
        if layer.kind == "conv":
            shape = (layer.cout, layer.cin, layer.k, layer.k)
        else:
            shape = (layer.cout, layer.cin)
        wdata = std * rng.normals(int(np.prod(shape))).reshape(shape)
        params[layer.name + ".w"] = Tensor(wdata, dtype=dtype, requires_grad=True)
        params[layer.name + ".b"] = Tensor(np.zeros(layer.cout), dtype=dtype, requires_grad=True)
    return QRNetWeights(params)


def count_macs(cfg: QRNetConfig, h: int, w: int) -> int:
    """Analytic multiply-accumulate count of one forward pass at h x w."""
    total = 0
    for layer in _layer_table(cfg, h, w):
        if layer.kind == "conv":
            total += layer.cout * layer.cin * layer.k * layer.k * layer.out_h * layer.out_w
        else:
            total += layer.cout * layer.cin
    return total


def conv_macs(cin: int, cout: int, k: int, out_h: int, out_w: int) -> int:
    """Closed-form MACs of a single convolution."""
    return cout * cin * k * k * out_h * out_w


def _conv(x: Tensor, weights: QRNetWeights, name: str, padding: int) -> Tensor:
    return conv2d(x, weights[name + ".w"], weights[name + ".b"], stride=1, padding=padding)


def ieb_forward(q: Tensor, weights: QRNetWeights, cfg: QRNetConfig,
                probe: Callable[[str, Tensor], None] | None = None) -> Tensor:
    """Input enhancement block: quarter-resolution features from the mosaic."""
    act = lambda t: leaky_relu(t, cfg.activation_slope)
    n = q.shape[0]
    c = cfg.base_channels
    if not cfg.ieb:
        return act(_conv(pixel_unshuffle(pixel_unshuffle(q)), weights, "stem.conv", 1))
    b0 = act(_conv(pixel_unshuffle(pixel_unshuffle(q)), weights, "ieb.b0.conv", 1))
    branches = [b0]
    for win in _IEB_POOL_WINDOWS:
        pooled = avg_pool2d(q, window=win, stride=4, pad=(win - 4) // 2)
        branches.append(act(_conv(pooled, weights, f"ieb.p{win}.conv", 1)))
    cat = concat(branches, axis=1)
    gate = global_avg_pool(cat)
    gate = act(linear(gate, weights["ieb.att.fc1.w"], weights["ieb.att.fc1.b"]))
    gate = sigmoid(linear(gate, weights["ieb.att.fc2.w"], weights["ieb.att.fc2.b"]))
    gated = mul(cat, reshape(gate, (n, 4 * c, 1, 1)))
    merged = act(_conv(gated, weights, "ieb.merge.conv", 1))
    out = act(_conv(concat([merged, b0], axis=1), weights, "ieb.fuse.conv", 1))
    if probe is not None:
        probe("ieb", out)
    return out


def _res_blocks(x: Tensor, weights: QRNetWeights, prefix: str, cfg: QRNetConfig) -> Tensor:
    for i in range(cfg.res_blocks):
        y = _conv(x, weights, f"{prefix}.res{i}.conv1", 1)
        y = leaky_relu(y, cfg.activation_slope)
        y = _conv(y, weights, f"{prefix}.res{i}.conv2", 1)
        x = x + y
    return x


def qrnet_forward(q: Tensor, weights: QRNetWeights, cfg: QRNetConfig,
                  probe: Callable[[str, Tensor], None] | None = None) -> Tensor:
    """Full forward pass. q is (N, 1, H, W) with H, W divisible by 16; the
    output is (N, 3, H, W) in rgb mode, (N, 1, H, W) in raw mode, unclamped."""
    if q.data.ndim != 4 or q.shape[1] != 1:
        raise ShapeError(f"expected (N, 1, H, W) input, got {q.shape}")
    n, _, h, w = q.shape
    if h % 16 or w % 16:
        raise ShapeError(f"input dims must be divisible by 16, got {h}x{w}")
    act = lambda t: leaky_relu(t, cfg.activation_slope)

    def report(name, t):
        if probe is not None:
            probe(name, t)
        return t

    in3 = report("in3", ieb_forward(q, weights, cfg))
    in2 = report("in2", act(_conv(avg_pool2d(in3, 2, 2, 0), weights, "down2.conv", 1)))
    in1 = report("in1", act(_conv(avg_pool2d(in2, 2, 2, 0), weights, "down1.conv", 1)))

    f = act(_conv(in1, weights, "l1.head.conv", 1))
    f = report("l1", _res_blocks(f, weights, "l1", cfg))

    for lvl, feed in ((2, in2), (3, in3)):
        up = upsample_bilinear2x(f)
        f = act(_conv(concat([up, feed], axis=1), weights, f"l{lvl}.start.conv", 0))
        f = _res_blocks(f, weights, f"l{lvl}", cfg)
        f = report(f"l{lvl}", act(_conv(concat([f, up], axis=1), weights, f"l{lvl}.tail.conv", 1)))

    if cfg.levels >= 4:
        t = pixel_shuffle(f)
        if cfg.interaction:
            t = concat([t, pixel_unshuffle(q)], axis=1)
        f = act(_conv(t, weights, "l4.conv1", 1))
        f = report("l4", act(_conv(f, weights, "l4.conv2", 1)))
    if cfg.levels == 5:
        t = pixel_shuffle(f)
        if cfg.interaction:
            t = concat([t, q], axis=1)
        f = act(_conv(t, weights, "l5.conv1", 1))
        f = report("l5", act(_conv(f, weights, "l5.conv2", 1)))

    out = _conv(f, weights, "head.conv", 1)
    if cfg.levels == 4:
        out = pixel_shuffle(out)
    elif cfg.levels == 3:
        out = pixel_shuffle(pixel_shuffle(out))
    return report("head", out)


# The published ablation settings, as executable configurations:
# name -> (model config overrides, quad input selector, loss alpha override)
ABLATIONS = {
    "with_short": ({}, "short", None),
    "with_long": ({}, "long", None),
    "no_ieb": ({"ieb": False}, "dual", None),
    "no_fi": ({"interaction": False}, "dual", None),
    "no_level5": ({"levels": 4}, "dual", None),
    "no_level45": ({"levels": 3}, "dual", None),
    "no_freq": ({}, "dual", 0.0),
}


def ablation_setting(name: str, base: QRNetConfig) -> tuple[QRNetConfig, str, float | None]:
    """Config, input mode and alpha override for a named ablation."""
    if name not in ABLATIONS:
        raise KeyError(f"unknown ablation {name}; options: {sorted(ABLATIONS)}")
    overrides, input_mode, alpha = ABLATIONS[name]
    return replace(base, **overrides), input_mode, alpha
