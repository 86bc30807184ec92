"""Mixed-radix FFT over the last one or two axes.

Decimation-in-time with radices 2, 3 and 5; axis lengths whose residual
factor contains other primes fall back to a direct DFT matrix for that
base case, so any length >= 1 is supported. Transforms are unnormalized:
ifft2d(fft2d(x)) equals x * (H * W).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_RADICES = (2, 3, 5)


@lru_cache(maxsize=None)
def _dft_matrix(n: int, sign: float) -> np.ndarray:
    k = np.arange(n)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / n)


@lru_cache(maxsize=None)
def _twiddles(n: int, r: int, sign: float) -> tuple[np.ndarray, np.ndarray]:
    m = n // r
    j = np.arange(r)
    # per-subsequence twiddle (r, m) and the r-point combining matrix (r, r)
    tw = np.exp(sign * 2j * np.pi * np.outer(j, np.arange(m)) / n)
    wr = np.exp(sign * 2j * np.pi * np.outer(j, j) / r)
    return tw, wr


def _fft_last_axis(a: np.ndarray, sign: float) -> np.ndarray:
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    for r in _RADICES:
        if n % r == 0:
            break
    else:
        return a @ _dft_matrix(n, sign).T.astype(a.dtype)
    m = n // r
    # decimate into r interleaved subsequences, transform them in one batch
    sub = np.stack([a[..., j::r] for j in range(r)], axis=-2)
    sub = _fft_last_axis(sub, sign)
    tw, wr = _twiddles(n, r, sign)
    sub = sub * tw.astype(a.dtype)
    # X[s*m + q] = sum_j wr[s, j] * sub[j, q]
    out = np.einsum("sj,...jq->...sq", wr.astype(a.dtype), sub)
    return out.reshape(a.shape)


def _as_complex(x: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(x):
        return np.ascontiguousarray(x)
    if x.dtype == np.float32:
        return x.astype(np.complex64)
    return x.astype(np.complex128)


def fft2d(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2-d DFT over the last two axes."""
    a = _as_complex(x)
    a = _fft_last_axis(a, -1.0)
    a = np.swapaxes(_fft_last_axis(np.swapaxes(a, -1, -2), -1.0), -1, -2)
    return a


def ifft2d(x: np.ndarray) -> np.ndarray:
    """Unnormalized inverse 2-d DFT (conjugate twiddles, no 1/N)."""
    a = _as_complex(x)
    a = _fft_last_axis(a, 1.0)
    a = np.swapaxes(_fft_last_axis(np.swapaxes(a, -1, -2), 1.0), -1, -2)
    return a


def fft1d(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT over the last axis."""
    return _fft_last_axis(_as_complex(x), -1.0)


def ifft1d(x: np.ndarray) -> np.ndarray:
    return _fft_last_axis(_as_complex(x), 1.0)
