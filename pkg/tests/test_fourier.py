"""Mixed-radix FFT against the quadratic DFT oracle."""

import numpy as np
import pytest

from qrnet.fourier import fft1d, fft2d, ifft2d


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft2_oracle(x):
    h, w = x.shape
    return dft_matrix(h) @ x.astype(complex) @ dft_matrix(w).T


def test_constant_dc_only():
    x = np.full((4, 4), 2.0)
    spec = fft2d(x)
    assert abs(spec[0, 0] - 32.0) < 1e-12
    spec[0, 0] = 0
    assert np.abs(spec).max() < 1e-12


@pytest.mark.parametrize("n", [4, 8, 20, 24, 40, 64])
def test_reference_sizes_match_oracle(n):
    x = np.random.default_rng(n).standard_normal((n, n))
    got = fft2d(x)
    want = dft2_oracle(x)
    scale = np.abs(want).max()
    assert np.abs(got - want).max() / scale <= 1e-9


def test_all_sizes_2_to_64_1d():
    rng = np.random.default_rng(0)
    for n in range(2, 65):
        x = rng.standard_normal(n)
        got = fft1d(x)
        want = dft_matrix(n) @ x.astype(complex)
        scale = max(np.abs(want).max(), 1e-30)
        assert np.abs(got - want).max() / scale <= 1e-9, f"n={n}"


def test_rectangular_and_odd_sizes():
    rng = np.random.default_rng(1)
    for h, w in [(6, 10), (7, 9), (5, 32), (1, 13), (11, 1), (49, 3)]:
        x = rng.standard_normal((h, w))
        got = fft2d(x)
        want = dft2_oracle(x)
        scale = max(np.abs(want).max(), 1e-30)
        assert np.abs(got - want).max() / scale <= 1e-9


def test_parseval():
    x = np.random.default_rng(2).standard_normal((20, 24))
    spec = fft2d(x)
    lhs = (np.abs(x) ** 2).sum()
    rhs = (np.abs(spec) ** 2).sum() / x.size
    assert abs(lhs - rhs) / lhs <= 1e-9


def test_inverse_round_trip():
    x = np.random.default_rng(3).standard_normal((12, 18))
    back = ifft2d(fft2d(x)) / x.size
    assert np.abs(back.imag).max() < 1e-10
    np.testing.assert_allclose(back.real, x, atol=1e-10)


def test_batched_leading_axes():
    x = np.random.default_rng(4).standard_normal((3, 2, 8, 12))
    got = fft2d(x)
    for i in range(3):
        for j in range(2):
            np.testing.assert_allclose(got[i, j], dft2_oracle(x[i, j]), atol=1e-9)


def test_f32_input_uses_complex64():
    x = np.random.default_rng(5).standard_normal((8, 8)).astype(np.float32)
    assert fft2d(x).dtype == np.complex64
