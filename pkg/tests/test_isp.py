"""ISP transforms: gamma, amplification, demosaic kernels, round trips."""

import numpy as np
import pytest

from qrnet.cfa import BayerImage, QuadBayerImage, mosaic_from_rgb, quad_layout_default
from qrnet.isp import (IspParams, amplify_short, demosaic_hqlinear,
                       demosaic_quad_bilinear, gamma_correct, gaussian_blur,
                       preprocess_quad, raw2rgb, rgb2raw, unsharp_mask,
                       white_balance, _gaussian_kernel1d)
from qrnet.noise import NoiseParams, Rng
from qrnet.training import psnr


class TestGamma:
    def test_one_maps_near_one(self):
        assert abs(gamma_correct(np.array(1.0)) - 1.0) <= 1e-8

    def test_zero_maps_near_zero(self):
        assert gamma_correct(np.array(0.0)) <= 1e-3

    def test_half_value(self):
        assert abs(gamma_correct(np.array(0.5)) - 0.5 ** (1 / 2.2)) <= 1e-4
        assert abs(0.5 ** (1 / 2.2) - 0.72974) <= 1e-4

    def test_strictly_monotone(self):
        rng = np.random.default_rng(0)
        pairs = rng.random((10_000, 2))
        lo = pairs.min(axis=1)
        hi = pairs.max(axis=1) + 1e-9
        assert np.all(gamma_correct(lo) < gamma_correct(hi))

    def test_negative_raises(self):
        with pytest.raises(ValueError):
            gamma_correct(np.array([-0.1]))


class TestAmplify:
    def test_zero_image(self):
        x = QuadBayerImage(np.zeros((8, 8)))
        assert np.all(amplify_short(x, 4.0).data == 0.0)

    def test_short_scaled_long_untouched(self):
        x = QuadBayerImage(np.full((8, 8), 0.1))
        out = amplify_short(x, 4.0)
        lm = x.long_mask()
        assert np.allclose(out.data[lm], 0.1)
        assert np.allclose(out.data[~lm], 0.4)

    def test_clamp_at_full_well(self):
        x = QuadBayerImage(np.full((8, 8), 0.3))
        out = amplify_short(x, 4.0)
        lm = x.long_mask()
        assert np.allclose(out.data[~lm], 1.0)  # clamp(1.2)
        assert np.allclose(out.data[lm], 0.3)

    def test_exposure_mode_short_amplifies_everything(self):
        x = QuadBayerImage(np.full((8, 8), 0.1), exposure_mode="short")
        assert np.allclose(amplify_short(x, 4.0).data, 0.4)

    def test_exposure_mode_long_amplifies_nothing(self):
        x = QuadBayerImage(np.full((8, 8), 0.1), exposure_mode="long")
        assert np.allclose(amplify_short(x, 4.0).data, 0.1)


class TestPreprocess:
    def test_identity_chain(self):
        rng = np.random.default_rng(1)
        x = QuadBayerImage(rng.random((16, 16)))
        out = preprocess_quad(x, None, 1.0, gamma=1.0)
        assert np.abs(out.data - x.data).max() <= 1e-6

    def test_composition_with_amplification(self):
        x = QuadBayerImage(np.full((16, 16), 0.1))
        out = preprocess_quad(x, None, 4.0, gamma=2.2, dtype="f64")
        lm = x.long_mask()
        np.testing.assert_allclose(out.data[lm], gamma_correct(np.array(0.1)), atol=1e-9)
        np.testing.assert_allclose(out.data[~lm], gamma_correct(np.array(0.4)), atol=1e-9)

    def test_static_scene_equalizes_illumination(self):
        rng = np.random.default_rng(2)
        base = 0.2 + 0.6 * rng.random((32, 32))
        lm = quad_layout_default().long_mask(32, 32)
        x = QuadBayerImage(np.where(lm, base, base / 4.0))
        out = preprocess_quad(x, None, 4.0, dtype="f64")
        want = gamma_correct(base)
        assert np.abs(out.data - want).max() <= 1e-6

    def test_noise_needs_rng(self):
        x = QuadBayerImage(np.full((8, 8), 0.5))
        with pytest.raises(ValueError):
            preprocess_quad(x, NoiseParams(), 4.0)

    def test_noise_path_is_deterministic(self):
        x = QuadBayerImage(np.full((16, 16), 0.5))
        a = preprocess_quad(x, NoiseParams(), 4.0, rng=Rng(5))
        b = preprocess_quad(x, NoiseParams(), 4.0, rng=Rng(5))
        assert np.array_equal(a.data, b.data)


class TestDemosaic:
    def test_constancy(self):
        rgb = demosaic_hqlinear(BayerImage(np.full((16, 16), 0.37)))
        assert np.abs(rgb - 0.37).max() <= 1e-6

    def test_linearity(self):
        rng = np.random.default_rng(3)
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        lhs = demosaic_hqlinear(BayerImage(2.0 * a + 3.0 * b))
        rhs = 2.0 * demosaic_hqlinear(BayerImage(a)) + 3.0 * demosaic_hqlinear(BayerImage(b))
        assert np.abs(lhs - rhs).max() <= 1e-6

    def test_pure_red_scene(self):
        rgb = np.zeros((16, 16, 3))
        rgb[:, :, 0] = 0.8
        out = demosaic_hqlinear(mosaic_from_rgb(rgb))
        assert np.abs(out[:, :, 0] - 0.8).max() <= 0.05
        assert np.abs(out[:, :, 1]).max() <= 0.05
        assert np.abs(out[:, :, 2]).max() <= 0.05

    def test_linear_ramp_reproduced(self):
        h = 32
        ramp = np.tile(np.linspace(0.1, 0.9, h), (h, 1))
        out = demosaic_hqlinear(BayerImage(ramp))
        interior = out[4:-4, 4:-4]
        assert np.abs(interior - ramp[4:-4, 4:-4, None]).max() <= 1e-3

    def test_odd_dims_raise(self):
        from qrnet.cfa import LayoutError
        with pytest.raises(LayoutError):
            demosaic_hqlinear(BayerImage(np.zeros((15, 16))))


class TestWhiteBalanceAndSharpen:
    def test_unit_gains_identity(self):
        rng = np.random.default_rng(4)
        rgb = rng.random((8, 8, 3)) * 0.5
        params = IspParams(w_r=1.6, w_b=1.4)
        out = rgb * np.array([1.0, 1.0, 1.0])
        np.testing.assert_allclose(white_balance(rgb, params)[:, :, 1], out[:, :, 1])

    def test_gains_applied_and_clamped(self):
        rgb = np.full((4, 4, 3), 0.7)
        params = IspParams(w_r=1.7, w_b=1.5)
        out = white_balance(rgb, params)
        np.testing.assert_allclose(out[:, :, 0], 1.0)   # 0.7*1.7 clamped
        np.testing.assert_allclose(out[:, :, 1], 0.7)
        np.testing.assert_allclose(out[:, :, 2], np.clip(0.7 * 1.5, 0, 1))

    def test_unsharp_constant_unchanged(self):
        rgb = np.full((12, 12, 3), 0.42)
        np.testing.assert_allclose(unsharp_mask(rgb, 1.0, 0.8), 0.42, atol=1e-12)

    def test_unsharp_step_overshoot_matches_1d_formula(self):
        # closed form on a horizontal step: out = x + amount * (x - k*x)
        n = 32
        img = np.zeros((n, n, 3))
        img[:, n // 2:, :] = 0.5
        amount, radius = 0.8, 1.0
        out = unsharp_mask(img, radius, amount)
        k = _gaussian_kernel1d(radius)
        half = (k.size - 1) // 2
        row = img[0, :, 0]
        padded = np.pad(row, half, mode="reflect")
        blur = np.array([padded[i:i + k.size] @ k for i in range(n)])
        want = np.clip(row + amount * (row - blur), 0.0, 1.0)
        np.testing.assert_allclose(out[5, :, 0], want, atol=1e-12)

    def test_gaussian_blur_preserves_mean_of_constant(self):
        img = np.full((16, 16), 0.3)
        np.testing.assert_allclose(gaussian_blur(img, 1.5), 0.3, atol=1e-12)


class TestRawRgbRoundTrip:
    def test_constant_gray_round_trip(self):
        params = IspParams()
        rgb = np.full((16, 16, 3), 0.5)
        back = raw2rgb(rgb2raw(rgb, params), params)
        assert np.abs(back - 0.5).max() <= 1e-4

    def test_raw_site_value_formula(self):
        params = IspParams(w_r=1.7, w_b=1.5)
        rgb = np.full((8, 8, 3), 0.5)
        raw = rgb2raw(rgb, params)
        want_r = (0.5 ** 2.2) / 1.7
        assert abs(raw.data[0, 0] - want_r) <= 1e-12

    def test_smooth_gradient_round_trip_psnr(self):
        params = IspParams()
        yy, xx = np.meshgrid(np.linspace(0, 1, 64), np.linspace(0, 1, 64), indexing="ij")
        rgb = np.stack([0.3 + 0.3 * xx, 0.35 + 0.3 * yy, 0.4 + 0.2 * xx * yy], axis=-1)
        back = raw2rgb(rgb2raw(rgb, params), params)
        assert psnr(back, rgb) >= 40.0

    def test_outputs_in_unit_interval(self):
        params = IspParams()
        rng = np.random.default_rng(6)
        rgb = rng.random((16, 16, 3))
        out = raw2rgb(rgb2raw(rgb, params), params)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestQuadBilinearReference:
    def test_constant_reproduced(self):
        out = demosaic_quad_bilinear(np.full((16, 16), 0.4))
        np.testing.assert_allclose(out, 0.4, atol=1e-12)


class TestIspParams:
    def test_gain_ranges_enforced(self):
        with pytest.raises(ValueError):
            IspParams(w_r=1.0)
        with pytest.raises(ValueError):
            IspParams(w_b=1.7)
        with pytest.raises(ValueError):
            IspParams(w_g=1.2)
