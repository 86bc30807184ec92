"""CFA layouts, B2QB index mapping, exposure splitting, target alignment."""

import numpy as np
import pytest

from qrnet.cfa import (BayerImage, CfaLayout, LayoutError, QuadBayerImage,
                       align_target_rgb, b2qb_sample, bayer_channel,
                       mosaic_from_rgb, quad_layout_default, quad_pixel_source,
                       quad_to_bayer, split_exposures)


@pytest.fixture
def layout():
    return quad_layout_default()


class TestLayout:
    def test_stated_cells(self, layout):
        assert layout.cell(0, 0) == ("R", "long")
        assert layout.cell(1, 1) == ("R", "short")
        assert layout.cell(0, 2) == ("G", "long")

    def test_tiles_periodically(self, layout):
        assert layout.cell(4, 4) == layout.cell(0, 0)
        assert layout.cell(7, 6) == layout.cell(3, 2)

    def test_each_block_has_both_exposures(self, layout):
        for bu in range(2):
            for bv in range(2):
                exps = {layout.exposures[2 * bu + i][2 * bv + j]
                        for i in range(2) for j in range(2)}
                assert exps == {"long", "short"}

    def test_macro_structure_enforced(self):
        colors = tuple(tuple("R" for _ in range(4)) for _ in range(4))
        exps = quad_layout_default().exposures
        with pytest.raises(LayoutError):
            CfaLayout("bad", colors, exps)


class TestMosaic:
    def test_constant_gray(self):
        rgb = np.full((8, 8, 3), 0.4)
        np.testing.assert_array_equal(mosaic_from_rgb(rgb).data, np.full((8, 8), 0.4))

    def test_pure_red(self):
        rgb = np.zeros((8, 8, 3))
        rgb[:, :, 0] = 1.0
        m = mosaic_from_rgb(rgb).data
        assert np.all(m[0::2, 0::2] == 1.0)
        assert np.all(m[0::2, 1::2] == 0.0)
        assert np.all(m[1::2, 0::2] == 0.0)
        assert np.all(m[1::2, 1::2] == 0.0)

    def test_coordinate_encoded_site_selection(self):
        h = w = 8
        rgb = np.zeros((h, w, 3))
        for c in range(3):
            rgb[:, :, c] = (c + 1) * 100 + np.arange(h)[:, None] + np.arange(w)[None, :] * 0.01
        m = mosaic_from_rgb(rgb / 1000.0).data * 1000.0
        chan = {"R": 0, "G": 1, "B": 2}
        for r in range(h):
            for c in range(w):
                expect = rgb[r, c, chan[bayer_channel(r, c)]]
                assert abs(m[r, c] - expect) < 1e-9


class TestQuadPixelSource:
    def test_stated_examples(self):
        assert quad_pixel_source(0, 0) == (0, 0, "long", "R")
        assert quad_pixel_source(1, 1) == (2, 2, "short", "R")

    def test_exhaustive_color_consistency_64(self):
        for r in range(64):
            for c in range(64):
                sr, sc, exposure, color = quad_pixel_source(r, c)
                assert 0 <= sr < 128 and 0 <= sc < 128
                assert bayer_channel(sr, sc) == color, (r, c)

    def test_negative_coordinates_raise(self):
        with pytest.raises(IndexError):
            quad_pixel_source(-1, 0)


def _coordinate_bayer(n):
    code = (10000 * np.arange(n)[:, None] + np.arange(n)[None, :]).astype(np.float64)
    return code / code.max()


class TestB2qb:
    def test_constant_sources(self):
        v = 0.37
        img = BayerImage(np.full((16, 16), v))
        out = b2qb_sample(img, img)
        np.testing.assert_array_equal(out.data, np.full((8, 8), v))

    def test_selector_semantics(self, layout):
        one = BayerImage(np.ones((16, 16)))
        zero = BayerImage(np.zeros((16, 16)))
        out = b2qb_sample(one, zero)
        np.testing.assert_array_equal(out.data.astype(bool), layout.long_mask(8, 8))

    def test_coordinate_encoded_oracle(self):
        src = _coordinate_bayer(128)
        mov = BayerImage(src)
        sta = BayerImage(src * 0.5)
        out = b2qb_sample(mov, sta)
        for r in range(64):
            for c in range(64):
                sr, sc, exposure, _ = quad_pixel_source(r, c)
                want = src[sr, sc] * (1.0 if exposure == "long" else 0.5)
                assert out.data[r, c] == want, (r, c)

    def test_shape_mismatch_raises(self):
        with pytest.raises(LayoutError):
            b2qb_sample(BayerImage(np.zeros((16, 16))), BayerImage(np.zeros((8, 8))))

    def test_long_short_site_values(self, layout):
        rng = np.random.default_rng(0)
        mov = BayerImage(rng.random((32, 32)))
        sta = BayerImage(rng.random((32, 32)))
        out = b2qb_sample(mov, sta)
        lm = layout.long_mask(16, 16)
        rows = np.empty((16, 16), dtype=int)
        cols = np.empty((16, 16), dtype=int)
        for r in range(16):
            for c in range(16):
                rows[r, c], cols[r, c], _, _ = quad_pixel_source(r, c)
        np.testing.assert_array_equal(out.data[lm], mov.data[rows, cols][lm])
        np.testing.assert_array_equal(out.data[~lm], sta.data[rows, cols][~lm])


class TestSplitExposures:
    def test_constant(self):
        x = QuadBayerImage(np.full((8, 8), 0.5))
        xs, xl = split_exposures(x)
        assert np.all(xs.data == 0.5) and np.all(xl.data == 0.5)
        assert xs.exposure_mode == "short" and xl.exposure_mode == "long"

    def test_kept_sites_match_original(self):
        rng = np.random.default_rng(1)
        x = QuadBayerImage(rng.random((16, 16)))
        xs, xl = split_exposures(x)
        lm = x.long_mask()
        np.testing.assert_array_equal(xs.data[~lm], x.data[~lm])
        np.testing.assert_array_equal(xl.data[lm], x.data[lm])

    def test_fill_rule_matches_block_oracle(self):
        # brute force: nearest same-color cell of the other exposure per block
        layout = quad_layout_default()
        rng = np.random.default_rng(2)
        x = QuadBayerImage(rng.random((8, 8)))
        xs, xl = split_exposures(x)
        for r in range(8):
            for c in range(8):
                u, v = r % 4, c % 4
                color, exposure = layout.cell(r, c)
                bu, bv = (u // 2) * 2, (v // 2) * 2
                candidates = []
                for i in range(2):
                    for j in range(2):
                        uu, vv = bu + i, bv + j
                        if layout.exposures[uu][vv] != exposure:
                            candidates.append((abs(uu - u) + abs(vv - v), uu, vv))
                d, uu, vv = min(candidates)
                partner = x.data[r - u + uu, c - v + vv]
                if exposure == "long":
                    assert xs.data[r, c] == partner
                    assert xl.data[r, c] == x.data[r, c]
                else:
                    assert xs.data[r, c] == x.data[r, c]
                    assert xl.data[r, c] == partner

    def test_recombine_reproduces_short_sites(self):
        rng = np.random.default_rng(3)
        x = QuadBayerImage(rng.random((16, 16)))
        xs, xl = split_exposures(x)
        lm = x.long_mask()
        recombined = np.where(lm, xl.data, xs.data)
        np.testing.assert_array_equal(recombined, x.data)


class TestAlignTarget:
    def test_constant(self):
        rgb = np.full((16, 16, 3), 0.25)
        out = align_target_rgb(rgb)
        np.testing.assert_array_equal(out, np.full((8, 8, 3), 0.25))

    def test_half_resolution_shape(self):
        out = align_target_rgb(np.zeros((32, 48, 3)))
        assert out.shape == (16, 24, 3)

    def test_coordinate_encoded_oracle(self):
        n = 32
        rgb = np.zeros((n, n, 3))
        code = (10000 * np.arange(n)[:, None] + np.arange(n)[None, :]) / 1e6
        for ch in range(3):
            rgb[:, :, ch] = code + ch
        out = align_target_rgb(rgb)
        for r in range(n // 2):
            for c in range(n // 2):
                sr, sc, _, _ = quad_pixel_source(r, c)
                np.testing.assert_array_equal(out[r, c], rgb[sr, sc])


class TestQuadToBayer:
    def test_rggb_colors_and_value_preservation(self, layout):
        rng = np.random.default_rng(4)
        x = QuadBayerImage(rng.random((16, 16)))
        b = quad_to_bayer(x)
        assert sorted(b.data.reshape(-1)) == sorted(x.data.reshape(-1))
        # each redistributed value keeps its color
        for r in range(16):
            for c in range(16):
                bi, p, di = r // 4, (r % 4) // 2, r % 2
                bj, q, dj = c // 4, (c % 4) // 2, c % 2
                src = x.data[4 * bi + 2 * di + p, 4 * bj + 2 * dj + q]
                assert b.data[r, c] == src
                assert bayer_channel(r, c) == layout.colors[2 * di + p][2 * dj + q]


class TestPurity:
    def test_sampling_is_pure(self):
        rng = np.random.default_rng(5)
        mov = BayerImage(rng.random((16, 16)))
        sta = BayerImage(rng.random((16, 16)))
        a = b2qb_sample(mov, sta).data
        b = b2qb_sample(mov, sta).data
        assert np.array_equal(a, b)
