"""Physical sensor noise: shot (Poisson), read (Gaussian), quantization (uniform).

The model operates in digital-number units. For a clean value x in [0, 1]
and full scale ``white_level``:

    x_dn   = x * white_level
    shot   : x_dn -> Poisson(x_dn * K) / K
    read   : + Normal(0, sigma^2)
    quant  : + Uniform(-white_level / (2 qu), +white_level / (2 qu))

then renormalize by white_level and clamp to [0, 1]. Pre-clamp variance of
the normalized output is x / (K * white_level) + (sigma / white_level)^2
+ (1 / qu)^2 / 12.

Randomness comes from a self-contained xoshiro256++ stream so results are
bit-reproducible across platforms; worker streams derive as seed XOR index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_POISSON_GAUSSIAN_CUTOVER = 30.0  # exact Knuth below, moment-matched normal above


@dataclass
class NoiseParams:
    """Shot/read/quantization noise parameters in digital-number units."""

    K: float = 0.25
    sigma: float = 5.0
    qu: int = 1023
    white_level: int = 1023

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"K must be > 0, got {self.K}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.qu < 2:
            raise ValueError(f"qu must be >= 2, got {self.qu}")
        if self.white_level < 1:
            raise ValueError(f"white_level must be >= 1, got {self.white_level}")

    def normalized_variance(self, x: float) -> float:
        """Analytic pre-clamp variance of the noisy normalized value."""
        return (x / (self.K * self.white_level)
                + (self.sigma / self.white_level) ** 2
                + (1.0 / self.qu) ** 2 / 12.0)


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31), state


class Rng:
    """Deterministic 64-bit generator (xoshiro256++), seeded via splitmix64."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        s = self.seed
        state = []
        for _ in range(4):
            z, s = _splitmix64(s)
            state.append(z)
        if not any(state):  # all-zero state is a fixed point
            state[0] = 1
        self._s = state
        self._spare_normal: float | None = None

    def derive(self, index: int) -> "Rng":
        """Independent worker stream seeded as seed XOR index."""
        return Rng(self.seed ^ int(index))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s0 + s3) & _MASK64
        result = ((((x << 23) | (x >> 41)) & _MASK64) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) drawn in stream order."""
        s0, s1, s2, s3 = self._s
        out = np.empty(n, dtype=np.uint64)
        m = _MASK64
        for i in range(n):
            x = (s0 + s3) & m
            out[i] = ((((x << 23) | (x >> 41)) & m) + s0) & m
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self._s = [s0, s1, s2, s3]
        return (out >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self) -> float:
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        u1 = (self.next_u64() >> 11) * 2.0 ** -53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log1p(-u1))  # u1 in [0,1) -> 1-u1 in (0,1]
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller on paired uniforms."""
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1, u2 = u[:pairs], u[pairs:]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        ang = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(ang), r * np.sin(ang)])
        return z[:n]

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        return self.next_u64() % n


def sample_poisson(mean: float, rng: Rng) -> int:
    """One Poisson draw; Knuth below the cutover mean, rounded normal above."""
    if mean < 0:
        raise ValueError(f"Poisson mean must be >= 0, got {mean}")
    if mean == 0:
        return 0
    if mean < _POISSON_GAUSSIAN_CUTOVER:
        limit = math.exp(-mean)
        k = 0
        p = 1.0
        while True:
            k += 1
            p *= rng.uniform()
            if p <= limit:
                return k - 1
    return int(round(max(0.0, mean + math.sqrt(mean) * rng.normal())))


def _poisson_block(means: np.ndarray, rng: Rng) -> np.ndarray:
    """Vectorized Poisson draws matching sample_poisson's branch split.

    Draw order: Knuth rounds over the small-mean subset (row-major), then
    one normal per large-mean element.
    """
    flat = means.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)
    small = (flat > 0) & (flat < _POISSON_GAUSSIAN_CUTOVER)
    large = flat >= _POISSON_GAUSSIAN_CUTOVER
    if small.any():
        m = flat[small]
        limit = np.exp(-m)
        p = np.ones_like(m)
        k = np.zeros(m.shape, dtype=np.int64)
        active = np.ones(m.shape, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            p[idx] *= rng.uniforms(idx.size)
            k[idx] += 1
            active[idx] = p[idx] > limit[idx]
        out[small] = k - 1
    if large.any():
        m = flat[large]
        z = rng.normals(m.size)
        out[large] = np.round(np.maximum(0.0, m + np.sqrt(m) * z))
    return out.reshape(means.shape)


def add_physical_noise(x, params: NoiseParams, rng: Rng, clip: bool = True):
    """Apply the shot + read + quantization model to normalized values.

    Accepts a numpy array or an autodiff Tensor and returns the same kind.
    ``clip=False`` skips the final clamp (used when measuring pre-clamp
    statistics).
    """
    tensor_in = hasattr(x, "data") and hasattr(x, "requires_grad")
    data = x.data if tensor_in else np.asarray(x)
    wl = float(params.white_level)
    x_dn = data.astype(np.float64) * wl
    noisy = _poisson_block(x_dn * params.K, rng) / params.K
    if params.sigma > 0:
        noisy += params.sigma * rng.normals(noisy.size).reshape(noisy.shape)
    step = wl / params.qu
    noisy += step * (rng.uniforms(noisy.size).reshape(noisy.shape) - 0.5)
    out = noisy / wl
    if clip:
        out = np.clip(out, 0.0, 1.0)
    out = out.astype(data.dtype, copy=False)
    if tensor_in:
        from .autodiff import Tensor
        return Tensor(out, requires_grad=False)
    return out


def degrade_rgb_long(y_l: np.ndarray, noise: NoiseParams, rng: Rng, isp_params=None) -> np.ndarray:
    """Noisy long-exposure RGB: to RAW, add noise, back to RGB."""
    from . import isp
    params = isp_params or isp.IspParams()
    raw = isp.rgb2raw(y_l, params)
    noisy = add_physical_noise(raw.data, noise, rng)
    return isp.raw2rgb(type(raw)(noisy, raw.pattern, raw.bit_depth), params)


def degrade_rgb_short(y_s: np.ndarray, noise: NoiseParams, exposure_ratio: float,
                      rng: Rng, isp_params=None) -> np.ndarray:
    """Noisy short-exposure RGB: dim by the exposure ratio in RAW, add noise,
    re-amplify, back to RGB."""
    from . import isp
    params = isp_params or isp.IspParams()
    a = float(exposure_ratio)
    raw = isp.rgb2raw(y_s, params)
    dim = raw.data / a
    noisy = add_physical_noise(dim, noise, rng)
    amplified = np.clip(a * noisy, 0.0, 1.0)
    return isp.raw2rgb(type(raw)(amplified, raw.pattern, raw.bit_depth), params)
