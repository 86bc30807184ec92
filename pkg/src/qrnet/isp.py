"""RAW <-> RGB image signal processing.

raw2rgb runs demosaic -> white-balance gains -> gamma; rgb2raw inverts the
chain (x^gamma -> divide gains -> mosaic). Demosaicking uses the 5x5
gradient-corrected linear kernels, which preserve constants exactly and
reproduce affine ramps; it is a fixed linear filter, so clamping happens in
the composed pipelines, never inside the demosaicker.

Quad-Bayer pre-processing for the network is noise modeling, then
amplification of short-exposure cells by the exposure ratio (clamped at
full well), then gamma correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .cfa import BayerImage, QuadBayerImage, mosaic_from_rgb
from .noise import NoiseParams, Rng, add_physical_noise


@dataclass
class IspParams:
    """White balance gains, gamma exponent, and sharpening strength."""

    w_r: float = 1.7
    w_g: float = 1.0
    w_b: float = 1.5
    gamma: float = 2.2
    epsilon: float = 1e-8
    sharpen_radius: float = 1.0
    sharpen_amount: float = 0.8

    def __post_init__(self):
        if self.w_g != 1.0:
            raise ValueError(f"green gain is fixed to 1, got {self.w_g}")
        if not 1.6 <= self.w_r <= 1.8:
            raise ValueError(f"w_r must lie in [1.6, 1.8], got {self.w_r}")
        if not 1.4 <= self.w_b <= 1.6:
            raise ValueError(f"w_b must lie in [1.4, 1.6], got {self.w_b}")
        if self.gamma <= 0 or self.epsilon <= 0:
            raise ValueError("gamma and epsilon must be positive")

    @property
    def gains(self) -> np.ndarray:
        return np.array([self.w_r, self.w_g, self.w_b])


def gamma_correct(x: np.ndarray, gamma: float = 2.2, epsilon: float = 1e-8) -> np.ndarray:
    """(x + epsilon) ** (1 / gamma); strictly monotone on x >= 0."""
    x = np.asarray(x)
    if np.any(x < 0):
        raise ValueError("gamma_correct requires non-negative input; clamp first")
    return (x + epsilon) ** (1.0 / gamma)


def amplify_short(x: QuadBayerImage, exposure_ratio: float) -> QuadBayerImage:
    """Scale short-exposure cells by the exposure ratio, clamped at 1."""
    a = float(exposure_ratio)
    if a <= 0:
        raise ValueError(f"exposure ratio must be positive, got {a}")
    short = ~x.long_mask()
    out = np.where(short, np.clip(a * x.data, 0.0, 1.0), x.data)
    return QuadBayerImage(out, x.layout, x.exposure_ratio, x.exposure_mode)


def preprocess_quad(x: QuadBayerImage, noise: NoiseParams | None,
                    exposure_ratio: float, gamma: float = 2.2,
                    epsilon: float = 1e-8, rng: Rng | None = None,
                    dtype: str = "f32") -> Tensor:
    """Noise modeling, then amplification, then gamma correction.

    ``noise=None`` bypasses the noise step exactly (the vanishing-noise
    limit). Returns the network input as a 2-d tensor.
    """
    data = x.data
    if noise is not None:
        if rng is None:
            raise ValueError("rng is required when noise is enabled")
        data = add_physical_noise(data, noise, rng)
    amped = amplify_short(QuadBayerImage(data, x.layout, x.exposure_ratio, x.exposure_mode),
                          exposure_ratio)
    out = gamma_correct(np.clip(amped.data, 0.0, 1.0), gamma, epsilon)
    return Tensor(out, dtype=dtype)


# 5x5 gradient-corrected linear demosaicking kernels (all rows sum to 1).
_K_GREEN = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0]], dtype=np.float64) / 8.0
_K_ROW = np.array([  # same-color neighbors left/right
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0]], dtype=np.float64) / 8.0
_K_COL = _K_ROW.T.copy()  # same-color neighbors up/down
_K_DIAG = np.array([  # same-color neighbors on the diagonals
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0]], dtype=np.float64) / 8.0


def _correlate5(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view
    pad = np.pad(img, 2, mode="reflect")
    win = sliding_window_view(pad, (5, 5))
    return np.einsum("hwij,ij->hw", win, kernel.astype(img.dtype, copy=False))


def demosaic_hqlinear(bayer: BayerImage) -> np.ndarray:
    """Full RGB from an RGGB mosaic via the 5x5 linear kernels (no clamp)."""
    m = bayer.data
    h, w = m.shape
    g_est = _correlate5(m, _K_GREEN)
    row_est = _correlate5(m, _K_ROW)
    col_est = _correlate5(m, _K_COL)
    diag_est = _correlate5(m, _K_DIAG)

    r_mask = np.zeros((h, w), dtype=bool)
    r_mask[0::2, 0::2] = True
    gr_mask = np.zeros((h, w), dtype=bool)
    gr_mask[0::2, 1::2] = True
    gb_mask = np.zeros((h, w), dtype=bool)
    gb_mask[1::2, 0::2] = True
    b_mask = np.zeros((h, w), dtype=bool)
    b_mask[1::2, 1::2] = True

    red = np.where(r_mask, m, np.where(gr_mask, row_est,
                   np.where(gb_mask, col_est, diag_est)))
    green = np.where(gr_mask | gb_mask, m, g_est)
    blue = np.where(b_mask, m, np.where(gb_mask, row_est,
                    np.where(gr_mask, col_est, diag_est)))
    return np.stack([red, green, blue], axis=-1)


def white_balance(rgb: np.ndarray, params: IspParams) -> np.ndarray:
    """Channelwise gains, clamped to [0, 1]."""
    return np.clip(rgb * params.gains.astype(rgb.dtype), 0.0, 1.0)


def _gaussian_kernel1d(radius: float) -> np.ndarray:
    sigma = float(radius)
    half = max(1, int(math.ceil(2.0 * sigma)))
    xs = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, radius: float) -> np.ndarray:
    """Separable Gaussian with reflect borders; kernel half-width ceil(2r)."""
    k = _gaussian_kernel1d(radius).astype(img.dtype, copy=False)
    half = (k.size - 1) // 2

    def along(a, axis):
        pad = [(0, 0)] * a.ndim
        pad[axis] = (half, half)
        ap = np.pad(a, pad, mode="reflect")
        out = np.zeros_like(a)
        sel = [slice(None)] * a.ndim
        for i, kv in enumerate(k):
            sel[axis] = slice(i, i + a.shape[axis])
            out += kv * ap[tuple(sel)]
        return out

    return along(along(img, 0), 1)


def unsharp_mask(rgb: np.ndarray, radius: float = 1.0, amount: float = 0.8) -> np.ndarray:
    """x + amount * (x - gaussian_blur(x)), clamped to [0, 1]."""
    blurred = gaussian_blur(rgb, radius)
    return np.clip(rgb + amount * (rgb - blurred), 0.0, 1.0)


def rgb2raw(rgb: np.ndarray, params: IspParams) -> BayerImage:
    """Inverse gamma (x^gamma), inverse gains, then mosaic."""
    lin = np.clip(rgb, 0.0, 1.0) ** params.gamma
    lin = lin / params.gains.astype(lin.dtype)
    return mosaic_from_rgb(lin)


def raw2rgb(bayer: BayerImage, params: IspParams) -> np.ndarray:
    """Demosaic, gains, then gamma correction; output clamped to [0, 1]."""
    rgb = demosaic_hqlinear(bayer)
    rgb = white_balance(np.clip(rgb, 0.0, 1.0), params)
    return np.clip(gamma_correct(rgb, params.gamma, params.epsilon), 0.0, 1.0)


def demosaic_quad_bilinear(quad: np.ndarray, layout=None) -> np.ndarray:
    """Naive RGB from a Quad-Bayer mosaic by per-color tent interpolation.

    Serves as the no-network reference for degraded inputs; exposures must
    already be illumination-matched (post amplification).
    """
    from .cfa import quad_layout_default, _CHANNEL
    layout = layout or quad_layout_default()
    h, w = quad.shape
    color_idx = np.array([[_CHANNEL[c] for c in row] for row in layout.colors])
    full_idx = np.tile(color_idx, (h // 4, w // 4))
    tent = np.array([1.0, 2.0, 3.0, 2.0, 1.0])
    kernel = np.outer(tent, tent)
    from numpy.lib.stride_tricks import sliding_window_view

    def smooth(a):
        pad = np.pad(a, 2, mode="reflect")
        win = sliding_window_view(pad, (5, 5))
        return np.einsum("hwij,ij->hw", win, kernel.astype(a.dtype))

    channels = []
    for ch in range(3):
        mask = (full_idx == ch).astype(quad.dtype)
        channels.append(smooth(quad * mask) / smooth(mask))
    return np.stack(channels, axis=-1)
