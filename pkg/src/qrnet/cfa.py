"""Color filter array layouts and Bayer -> Quad-Bayer sampling.

The Quad-Bayer unit is a 4x4 cell grid built from 2x2 same-color blocks in
an R,G / G,B macro arrangement; each color block interleaves a long and a
short exposure. ``b2qb_sample`` builds a half-resolution dual-exposure
Quad-Bayer mosaic from a pair of full-resolution RGGB mosaics by copying,
for every target cell, one source pixel of the matching color:

    target (r, c), with bi = r // 4, u = r % 4 (and likewise bj, v):
      source row = 8*bi + 4*(u // 2) + 2*(u % 2) + pr
      source col = 8*bj + 4*(v // 2) + 2*(v % 2) + pc
    where (pr, pc) is the color's offset inside the source RGGB unit
    (R=(0,0), top G=(0,1), bottom G=(1,0), B=(1,1)).

Long cells copy from the "moving" mosaic, short cells from the dimmed
static one. Targets are aligned by sampling the full-resolution RGB with
the same coordinate map (exposure ignored).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

COLORS = ("R", "G", "B")
LONG, SHORT = "long", "short"

# channel index per color and per-color offset inside one RGGB unit
_CHANNEL = {"R": 0, "G": 1, "B": 2}
_MACRO = (("R", "G"), ("G", "B"))
_RGGB_OFFSET = {(0, 0): (0, 0), (0, 1): (0, 1), (1, 0): (1, 0), (1, 1): (1, 1)}


class LayoutError(ValueError):
    """A CFA layout violates the Quad-Bayer structural invariants."""


@dataclass(frozen=True)
class CfaLayout:
    """4x4 unit of (color, exposure) cells tiling the sensor plane."""

    name: str
    colors: tuple[tuple[str, ...], ...]
    exposures: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.colors) != 4 or any(len(r) != 4 for r in self.colors):
            raise LayoutError("layout colors must form a 4x4 grid")
        if len(self.exposures) != 4 or any(len(r) != 4 for r in self.exposures):
            raise LayoutError("layout exposures must form a 4x4 grid")
        for u in range(4):
            for v in range(4):
                want = _MACRO[u // 2][v // 2]
                if self.colors[u][v] != want:
                    raise LayoutError(
                        f"cell ({u},{v}) must be {want} in the R,G/G,B macro structure")
                if self.exposures[u][v] not in (LONG, SHORT):
                    raise LayoutError(f"bad exposure at ({u},{v}): {self.exposures[u][v]}")
        for bu in range(2):
            for bv in range(2):
                exps = {self.exposures[2 * bu + i][2 * bv + j] for i in range(2) for j in range(2)}
                if exps != {LONG, SHORT}:
                    raise LayoutError(
                        f"color block ({bu},{bv}) must contain both exposures")

    def cell(self, r: int, c: int) -> tuple[str, str]:
        """(color, exposure) of the cell at absolute coordinates (r, c)."""
        return self.colors[r % 4][c % 4], self.exposures[r % 4][c % 4]

    def long_mask(self, h: int, w: int) -> np.ndarray:
        unit = np.array([[e == LONG for e in row] for row in self.exposures], dtype=bool)
        return np.tile(unit, (h // 4, w // 4))


def quad_layout_default() -> CfaLayout:
    """Row-paired convention: within each color block, top row long, bottom short."""
    colors = tuple(tuple(_MACRO[u // 2][v // 2] for v in range(4)) for u in range(4))
    exposures = tuple(tuple(LONG if u % 2 == 0 else SHORT for v in range(4)) for u in range(4))
    return CfaLayout("quad_rggb_rowpair", colors, exposures)


@dataclass
class BayerImage:
    """Single-channel RGGB mosaic, normalized to [0, 1]."""

    data: np.ndarray
    pattern: str = "RGGB"
    bit_depth: int = 10

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise LayoutError(f"Bayer data must be 2-d, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 2 or w % 2:
            raise LayoutError(f"Bayer dims must be even, got {h}x{w}")
        if self.pattern != "RGGB":
            raise LayoutError(f"only RGGB is supported, got {self.pattern}")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class QuadBayerImage:
    """Single-channel dual-exposure Quad-Bayer mosaic, normalized to [0, 1].

    ``exposure_mode`` marks single-exposure variants produced by
    ``split_exposures``: their cells all carry one exposure even though the
    layout geometry is unchanged.
    """

    data: np.ndarray
    layout: CfaLayout = field(default_factory=quad_layout_default)
    exposure_ratio: float = 4.0
    exposure_mode: str = "dual"  # dual | short | long

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise LayoutError(f"Quad-Bayer data must be 2-d, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 4 or w % 4:
            raise LayoutError(f"Quad-Bayer dims must be divisible by 4, got {h}x{w}")
        if self.exposure_mode not in ("dual", "short", "long"):
            raise LayoutError(f"bad exposure_mode {self.exposure_mode}")

    @property
    def shape(self):
        return self.data.shape

    def long_mask(self) -> np.ndarray:
        """Per-pixel mask of long-exposure sites given the exposure mode."""
        h, w = self.data.shape
        if self.exposure_mode == "long":
            return np.ones((h, w), dtype=bool)
        if self.exposure_mode == "short":
            return np.zeros((h, w), dtype=bool)
        return self.layout.long_mask(h, w)


def mosaic_from_rgb(rgb: np.ndarray, pattern: str = "RGGB") -> BayerImage:
    """Sample one channel per pixel according to the RGGB pattern."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise LayoutError(f"expected HxWx3 RGB, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    if h % 2 or w % 2:
        raise LayoutError(f"RGB dims must be even, got {h}x{w}")
    out = np.empty((h, w), dtype=rgb.dtype)
    out[0::2, 0::2] = rgb[0::2, 0::2, 0]
    out[0::2, 1::2] = rgb[0::2, 1::2, 1]
    out[1::2, 0::2] = rgb[1::2, 0::2, 1]
    out[1::2, 1::2] = rgb[1::2, 1::2, 2]
    return BayerImage(out, pattern)


def bayer_channel(r: int, c: int) -> str:
    """Color of the RGGB site at (r, c)."""
    return ("R", "G", "G", "B")[(r % 2) * 2 + (c % 2)]


def quad_pixel_source(r: int, c: int, layout: CfaLayout | None = None
                      ) -> tuple[int, int, str, str]:
    """Map a Quad-Bayer target cell to its full-resolution Bayer source.

    Returns (src_r, src_c, exposure, color).
    """
    if r < 0 or c < 0:
        raise IndexError(f"negative target coordinate ({r}, {c})")
    layout = layout or quad_layout_default()
    bi, u = divmod(r, 4)
    bj, v = divmod(c, 4)
    color, exposure = layout.colors[u][v], layout.exposures[u][v]
    pr, pc = _RGGB_OFFSET[(u // 2, v // 2)]
    src_r = 8 * bi + 4 * (u // 2) + 2 * (u % 2) + pr
    src_c = 8 * bj + 4 * (v // 2) + 2 * (v % 2) + pc
    return src_r, src_c, exposure, color


@lru_cache(maxsize=8)
def _source_maps(layout: CfaLayout, h: int, w: int):
    """Vectorized source coordinates and exposure mask for an h x w target."""
    u = np.arange(h) % 4
    v = np.arange(w) % 4
    bi = np.arange(h) // 4
    bj = np.arange(w) // 4
    pr_unit = np.array([[_RGGB_OFFSET[(uu // 2, vv // 2)][0] for vv in range(4)]
                        for uu in range(4)])
    pc_unit = np.array([[_RGGB_OFFSET[(uu // 2, vv // 2)][1] for vv in range(4)]
                        for uu in range(4)])
    rows = (8 * bi + 4 * (u // 2) + 2 * (u % 2))[:, None] + pr_unit[u][:, v]
    cols = (8 * bj + 4 * (v // 2) + 2 * (v % 2))[None, :] + pc_unit[u][:, v]
    long_mask = layout.long_mask(h, w)
    return rows, cols, long_mask


def b2qb_sample(mov: BayerImage, sta_prime: BayerImage,
                layout: CfaLayout | None = None,
                exposure_ratio: float = 4.0) -> QuadBayerImage:
    """Half-resolution dual-exposure Quad-Bayer from two aligned mosaics.

    Long cells copy from ``mov``, short cells from ``sta_prime``. Passing
    the same mosaic twice yields a single-source Quad-Bayer sampling.
    """
    if mov.data.shape != sta_prime.data.shape:
        raise LayoutError(f"source shapes differ: {mov.data.shape} vs {sta_prime.data.shape}")
    if mov.pattern != sta_prime.pattern:
        raise LayoutError("source patterns differ")
    sh, sw = mov.data.shape
    if sh % 8 or sw % 8:
        raise LayoutError(f"source dims must be divisible by 8, got {sh}x{sw}")
    layout = layout or quad_layout_default()
    h, w = sh // 2, sw // 2
    rows, cols, long_mask = _source_maps(layout, h, w)
    out = np.where(long_mask, mov.data[rows, cols], sta_prime.data[rows, cols])
    return QuadBayerImage(out, layout, exposure_ratio)


def align_target_rgb(full_rgb: np.ndarray, layout: CfaLayout | None = None) -> np.ndarray:
    """Sample a full-resolution RGB image at the Quad-Bayer source sites.

    Exposure is ignored; the result is the half-resolution RGB aligned with
    ``b2qb_sample`` output.
    """
    full_rgb = np.asarray(full_rgb)
    if full_rgb.ndim != 3 or full_rgb.shape[2] != 3:
        raise LayoutError(f"expected HxWx3 RGB, got shape {full_rgb.shape}")
    layout = layout or quad_layout_default()
    sh, sw, _ = full_rgb.shape
    if sh % 8 or sw % 8:
        raise LayoutError(f"source dims must be divisible by 8, got {sh}x{sw}")
    rows, cols, _ = _source_maps(layout, sh // 2, sw // 2)
    return full_rgb[rows, cols, :]


@lru_cache(maxsize=8)
def _partner_maps(layout: CfaLayout):
    """For each unit cell, the nearest same-color cell of the other exposure."""
    partners = {}
    for u in range(4):
        for v in range(4):
            bu, bv = u // 2, v // 2
            best = None
            for i in range(2):
                for j in range(2):
                    uu, vv = 2 * bu + i, 2 * bv + j
                    if layout.exposures[uu][vv] == layout.exposures[u][v]:
                        continue
                    d = abs(uu - u) + abs(vv - v)
                    # prefer same column, then same row, then distance
                    key = (d, vv != v, uu != u)
                    if best is None or key < best[0]:
                        best = (key, (uu, vv))
            partners[(u, v)] = best[1]
    pu = np.array([[partners[(u, v)][0] for v in range(4)] for u in range(4)])
    pv = np.array([[partners[(u, v)][1] for v in range(4)] for u in range(4)])
    return pu, pv


def split_exposures(x: QuadBayerImage) -> tuple[QuadBayerImage, QuadBayerImage]:
    """Single-exposure Quad-Bayer pair (x_s, x_l) with full coverage.

    Cells of the kept exposure pass through; the others are filled from the
    nearest same-color cell of the other exposure within the 2x2 block.
    """
    if x.exposure_mode != "dual":
        raise LayoutError("split_exposures expects a dual-exposure image")
    h, w = x.data.shape
    pu, pv = _partner_maps(x.layout)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    u, v = rr % 4, cc % 4
    pr = rr - u + pu[u, v]
    pc = cc - v + pv[u, v]
    partner = x.data[pr, pc]
    long_mask = x.layout.long_mask(h, w)
    x_s = np.where(long_mask, partner, x.data)
    x_l = np.where(long_mask, x.data, partner)
    return (QuadBayerImage(x_s, x.layout, x.exposure_ratio, "short"),
            QuadBayerImage(x_l, x.layout, x.exposure_ratio, "long"))


def quad_to_bayer(x: QuadBayerImage) -> BayerImage:
    """Rearrange a Quad-Bayer mosaic into a same-size RGGB mosaic.

    Each 4x4 unit's four same-color samples are distributed to the four
    2x2 RGGB sub-units, preserving every sample value.
    """
    h, w = x.data.shape
    d = x.data.reshape(h // 4, 2, 2, w // 4, 2, 2)  # (bi, di, p, bj, dj, q)
    out = d.transpose(0, 2, 1, 3, 5, 4).reshape(h, w)  # (bi, p, di, bj, q, dj)
    return BayerImage(out, "RGGB")
