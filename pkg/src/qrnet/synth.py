"""Procedural scene synthesis: trajectory blur, aligned tuple assembly, datasets.

A scene starts as a linear-light RGB base image with smooth gradients,
overlapping shapes, and glyph-like high-frequency texture. A 2-d camera
trajectory renders a blurry "moving" frame (mean of bilinear-warped
subframes) and a sharp "static" frame (the middle subframe). The static
frame dimmed by the exposure ratio plays the short exposure; both are
mosaiced with white-balance gains divided out first, so the sensor RAW is
gain-free, and combined into a dual-exposure Quad-Bayer mosaic. Targets run
through the reference ISP (demosaic, gains, gamma, unsharp) and the same
half-resolution sampling, keeping all six tuple members aligned.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from . import qrt
from .cfa import (BayerImage, QuadBayerImage, align_target_rgb, b2qb_sample,
                  mosaic_from_rgb, quad_layout_default)
from .isp import IspParams, raw2rgb, unsharp_mask
from .noise import Rng


@dataclass
class Trajectory:
    """Piecewise-linear 2-d displacement path sampled at T subframes."""

    control_points: np.ndarray  # (k, 2) displacements in pixels (dy, dx)
    subframes: int = 17
    max_disp: float = 12.0

    def __post_init__(self):
        self.control_points = np.atleast_2d(np.asarray(self.control_points, dtype=np.float64))
        if self.subframes < 3 or self.subframes % 2 == 0:
            raise ValueError(f"subframe count must be odd and >= 3, got {self.subframes}")

    def displacements(self) -> np.ndarray:
        """(T, 2) per-subframe displacement, linearly interpolated."""
        k = len(self.control_points)
        t = np.linspace(0.0, 1.0, self.subframes)
        knots = np.linspace(0.0, 1.0, k) if k > 1 else np.array([0.0])
        dy = np.interp(t, knots, self.control_points[:, 0])
        dx = np.interp(t, knots, self.control_points[:, 1])
        return np.stack([dy, dx], axis=1)

    @property
    def middle_index(self) -> int:
        return (self.subframes - 1) // 2

    @classmethod
    def zero(cls, subframes: int = 17) -> "Trajectory":
        return cls(np.zeros((2, 2)), subframes, 0.0)

    @classmethod
    def linear(cls, dy: float, dx: float, subframes: int = 17) -> "Trajectory":
        """Straight path of total extent (dy, dx), centered on the middle frame."""
        half = np.array([dy / 2.0, dx / 2.0])
        return cls(np.stack([-half, half]), subframes, float(np.hypot(dy, dx) / 2.0))

    @classmethod
    def random(cls, rng: Rng, subframes: int = 17, max_disp: float = 12.0,
               n_control: int = 5) -> "Trajectory":
        u = rng.uniforms(2 * n_control + 1)
        pts = (u[: 2 * n_control].reshape(n_control, 2) - 0.5) * 2.0
        # recenter so the middle subframe sits exactly at zero displacement
        t = np.linspace(0.0, 1.0, subframes)
        knots = np.linspace(0.0, 1.0, n_control)
        mid = np.array([np.interp(0.5, knots, pts[:, 0]), np.interp(0.5, knots, pts[:, 1])])
        pts = pts - mid
        extent = np.max(np.hypot(pts[:, 0], pts[:, 1]))
        amplitude = max_disp * (0.3 + 0.7 * u[-1])
        if extent > 0:
            pts = pts * (amplitude / extent)
        return cls(pts, subframes, float(amplitude))


def warp_translate(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Shift image content by (dy, dx) with bilinear sampling, reflect borders.

    out(p) = img(p - d); integer shifts are exact.
    """
    h, w = img.shape[:2]
    ky = int(np.floor(-dy))
    kx = int(np.floor(-dx))
    ty = -dy - ky
    tx = -dx - kx
    pad_y = abs(ky) + 1
    pad_x = abs(kx) + 1
    pad = [(pad_y, pad_y), (pad_x, pad_x)] + [(0, 0)] * (img.ndim - 2)
    p = np.pad(img, pad, mode="reflect")
    r0 = pad_y + ky
    c0 = pad_x + kx
    a = p[r0:r0 + h, c0:c0 + w]
    b = p[r0:r0 + h, c0 + 1:c0 + 1 + w]
    c = p[r0 + 1:r0 + 1 + h, c0:c0 + w]
    d = p[r0 + 1:r0 + 1 + h, c0 + 1:c0 + 1 + w]
    if ty == 0.0 and tx == 0.0:
        return a.copy()
    return ((1 - ty) * (1 - tx) * a + (1 - ty) * tx * b
            + ty * (1 - tx) * c + ty * tx * d)


def render_motion_pair(base: np.ndarray, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """(mov, sta): mean of warped subframes and the middle subframe."""
    disp = traj.displacements()
    acc = np.zeros_like(base, dtype=np.float64)
    sta = None
    for i, (dy, dx) in enumerate(disp):
        frame = warp_translate(base.astype(np.float64, copy=False), dy, dx)
        acc += frame
        if i == traj.middle_index:
            sta = frame
    mov = acc / len(disp)
    return mov, sta


def gen_base_image(width: int, height: int, rng: Rng) -> np.ndarray:
    """Linear RGB in [0, 1] mixing smooth gradients, shapes, and glyph texture."""
    if width % 8 or height % 8:
        raise ValueError(f"base image dims must be divisible by 8, got {width}x{height}")
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    img = np.empty((height, width, 3))
    for ch in range(3):
        a = rng.uniforms(6)
        img[:, :, ch] = (0.25 + 0.4 * a[0]
                         + 0.3 * (a[1] - 0.5) * xx + 0.3 * (a[2] - 0.5) * yy
                         + 0.15 * (a[3] - 0.5) * np.sin(2 * np.pi * (1 + 2 * a[4]) * (xx + a[5])))
    img = np.clip(img, 0.05, 0.95)

    # opaque shapes with hard edges
    n_shapes = 12
    for _ in range(n_shapes):
        u = rng.uniforms(8)
        color = 0.08 + 0.84 * u[:3]
        cy, cx = u[3] * height, u[4] * width
        if u[7] < 0.5:  # rectangle
            hh = (0.05 + 0.2 * u[5]) * height
            ww = (0.05 + 0.2 * u[6]) * width
            r0, r1 = int(max(0, cy - hh / 2)), int(min(height, cy + hh / 2))
            c0, c1 = int(max(0, cx - ww / 2)), int(min(width, cx + ww / 2))
            img[r0:r1, c0:c1] = color
        else:  # disk
            rad = (0.04 + 0.12 * u[5]) * min(height, width)
            ry, rx = np.ogrid[:height, :width]
            mask = (ry - cy) ** 2 + (rx - cx) ** 2 <= rad ** 2
            img[mask] = color

    # stripe patches: sharp periodic texture
    for _ in range(3):
        u = rng.uniforms(7)
        ph = int((0.1 + 0.15 * u[0]) * height)
        pw = int((0.1 + 0.15 * u[1]) * width)
        r0 = int(u[2] * max(1, height - ph))
        c0 = int(u[3] * max(1, width - pw))
        period = 2 + int(4 * u[4])
        axis = np.arange(pw) if u[5] < 0.5 else np.arange(ph)[:, None]
        stripes = ((axis // period) % 2).astype(np.float64)
        lo, hi = 0.15 + 0.2 * u[6], 0.95 - 0.2 * u[6]
        img[r0:r0 + ph, c0:c0 + pw] = (lo + (hi - lo) * stripes)[..., None] \
            if stripes.ndim == 2 else (lo + (hi - lo) * np.broadcast_to(stripes, (ph, pw)))[..., None]

    # glyph-like texture blocks: random binary cells upscaled 2x
    n_glyphs = 10
    for _ in range(n_glyphs):
        u = rng.uniforms(8)
        cells_h, cells_w = 6, 10
        bits = rng.uniforms(cells_h * cells_w).reshape(cells_h, cells_w) < 0.45
        block = np.kron(bits, np.ones((2, 2), dtype=bool))
        bh, bw = block.shape
        r0 = int(u[0] * max(1, height - bh))
        c0 = int(u[1] * max(1, width - bw))
        fg = 0.08 + 0.84 * u[2:5]
        bg = 0.08 + 0.84 * u[5:8]
        patch = np.where(block[:, :, None], fg, bg)
        img[r0:r0 + bh, c0:c0 + bw] = patch

    return np.clip(img, 0.0, 1.0)


@dataclass
class SceneTuple:
    """One aligned training record: three Quad-Bayer mosaics, three RGB images."""

    x_s: QuadBayerImage
    x_l: QuadBayerImage
    x: QuadBayerImage
    y_s: np.ndarray
    y_l: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)


def synthesize_tuple(base: np.ndarray, traj: Trajectory, isp_params: IspParams,
                     exposure_ratio: float, rng: Rng | None = None,
                     seed: int | None = None) -> SceneTuple:
    """Render, mosaic, and sample one aligned tuple from a base scene."""
    a = float(exposure_ratio)
    layout = quad_layout_default()
    mov, sta = render_motion_pair(base, traj)
    gains = isp_params.gains

    # sensor RAW is gain-free: divide the gains out before mosaicing
    mov_b = mosaic_from_rgb(mov / gains)
    sta_b = mosaic_from_rgb(sta / gains)
    stap_b = mosaic_from_rgb((sta / a) / gains)

    x = b2qb_sample(mov_b, stap_b, layout, a)
    x_l = b2qb_sample(mov_b, mov_b, layout, a)
    x_l.exposure_mode = "long"
    x_s = b2qb_sample(stap_b, stap_b, layout, a)
    x_s.exposure_mode = "short"

    def target(bayer: BayerImage) -> np.ndarray:
        rgb = unsharp_mask(raw2rgb(bayer, isp_params),
                           isp_params.sharpen_radius, isp_params.sharpen_amount)
        return align_target_rgb(rgb, layout)

    y = target(sta_b)
    y_l = target(mov_b)
    y_s = target(stap_b)

    meta = {
        "w_r": isp_params.w_r, "w_g": isp_params.w_g, "w_b": isp_params.w_b,
        "gamma": isp_params.gamma, "epsilon": isp_params.epsilon,
        "sharpen_radius": isp_params.sharpen_radius,
        "sharpen_amount": isp_params.sharpen_amount,
        "exposure_ratio": a,
        "layout": layout.name,
        "subframes": traj.subframes,
        "max_disp": traj.max_disp,
        "control_points": ";".join(f"{p[0]:.6f},{p[1]:.6f}" for p in traj.control_points),
    }
    if seed is not None:
        meta["seed"] = seed

    def f32(img):
        return img.astype(np.float32)

    return SceneTuple(
        x_s=QuadBayerImage(f32(x_s.data), layout, a, "short"),
        x_l=QuadBayerImage(f32(x_l.data), layout, a, "long"),
        x=QuadBayerImage(f32(x.data), layout, a, "dual"),
        y_s=f32(y_s), y_l=f32(y_l), y=f32(y), meta=meta)


_TUPLE_FILES = ("x_s", "x_l", "x", "y_s", "y_l", "y")


def save_tuple(t: SceneTuple, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    arrays = {"x_s": t.x_s.data, "x_l": t.x_l.data, "x": t.x.data,
              "y_s": t.y_s, "y_l": t.y_l, "y": t.y}
    for name in _TUPLE_FILES:
        qrt.save_qrt(os.path.join(directory, f"{name}.qrt"), arrays[name])
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["meta"] = {k: str(v) for k, v in t.meta.items()}
    with open(os.path.join(directory, "meta.ini"), "w") as fh:
        cp.write(fh)


def load_tuple(directory: str) -> SceneTuple:
    arrays = {name: qrt.load_qrt(os.path.join(directory, f"{name}.qrt"))
              for name in _TUPLE_FILES}
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read(os.path.join(directory, "meta.ini"))
    meta = dict(cp["meta"]) if cp.has_section("meta") else {}
    layout = quad_layout_default()
    a = float(meta.get("exposure_ratio", 4.0))
    return SceneTuple(
        x_s=QuadBayerImage(arrays["x_s"], layout, a, "short"),
        x_l=QuadBayerImage(arrays["x_l"], layout, a, "long"),
        x=QuadBayerImage(arrays["x"], layout, a, "dual"),
        y_s=arrays["y_s"], y_l=arrays["y_l"], y=arrays["y"], meta=meta)


def make_dataset(count: int, out_dir: str, size: tuple[int, int] = (128, 128),
                 seed: int = 0, exposure_ratio: float = 4.0,
                 subframes: int = 17, max_disp: float = 12.0,
                 val_count: int | None = None) -> list[str]:
    """Write ``count`` tuples plus a manifest; deterministic in ``seed``.

    ``size`` is the Quad-Bayer (half) resolution WxH; the base scene renders
    at twice that. The last ``val_count`` tuples are marked as validation.
    """
    w, h = size
    if w % 16 or h % 16:
        raise ValueError(f"tuple size must be divisible by 16, got {w}x{h}")
    if val_count is None:
        val_count = max(1, count // 8) if count > 1 else 0
    os.makedirs(out_dir, exist_ok=True)
    root = Rng(seed)
    dirs = []
    manifest = configparser.ConfigParser()
    manifest.optionxform = str
    manifest["dataset"] = {
        "count": str(count), "width": str(w), "height": str(h),
        "seed": str(seed), "exposure_ratio": str(exposure_ratio),
        "val_count": str(val_count),
    }
    for i in range(count):
        rng = root.derive(i)
        tuple_seed = seed ^ i
        u = rng.uniforms(2)
        params = IspParams(w_r=1.6 + 0.2 * u[0], w_b=1.4 + 0.2 * u[1])
        base = gen_base_image(2 * w, 2 * h, rng)
        traj = Trajectory.random(rng, subframes, max_disp)
        t = synthesize_tuple(base, traj, params, exposure_ratio, seed=tuple_seed)
        name = f"tuple_{i:04d}"
        save_tuple(t, os.path.join(out_dir, name))
        split = "val" if i >= count - val_count else "train"
        manifest[name] = {"seed": str(tuple_seed), "split": split}
        dirs.append(os.path.join(out_dir, name))
    with open(os.path.join(out_dir, "manifest.ini"), "w") as fh:
        manifest.write(fh)
    return dirs


def load_dataset(root_dir: str, split: str | None = None) -> list[SceneTuple]:
    """Load tuples listed in the manifest, optionally filtered by split."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    path = os.path.join(root_dir, "manifest.ini")
    if not cp.read(path):
        raise FileNotFoundError(f"missing dataset manifest: {path}")
    out = []
    for section in cp.sections():
        if section == "dataset":
            continue
        if split is not None and cp[section].get("split") != split:
            continue
        out.append(load_tuple(os.path.join(root_dir, section)))
    return out
