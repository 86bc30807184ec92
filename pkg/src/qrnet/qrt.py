"""Binary containers: QRT tensors, checkpoints, PGM/PPM images, SVG charts.

QRT layout: magic "QRTENSR1", u8 dtype tag (0=f32, 1=f64, 2=u16), u8 ndim,
ndim little-endian u32 dims, then the row-major little-endian payload.

A checkpoint is a single file: a text header, an INI config block, a text
index of key -> (offset, length) into the data section, then concatenated
QRT records. Round-trips are bit-exact.
"""

from __future__ import annotations

import configparser
import io
import struct

import numpy as np

MAGIC = b"QRTENSR1"
_DTYPE_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint16"): 2}
_TAG_DTYPES = {0: "<f4", 1: "<f8", 2: "<u2"}

CKPT_MAGIC = b"QRNETCKPT1"


class ContainerError(ValueError):
    """Malformed or unsupported container contents."""


def qrt_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_TAGS:
        raise ContainerError(f"unsupported dtype {arr.dtype}; use f32, f64 or u16")
    if arr.ndim > 255:
        raise ContainerError("too many dimensions")
    tag = _DTYPE_TAGS[arr.dtype]
    head = MAGIC + struct.pack("<BB", tag, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    payload = np.ascontiguousarray(arr).astype(_TAG_DTYPES[tag], copy=False).tobytes()
    return head + dims + payload


def parse_qrt(buf: bytes) -> np.ndarray:
    if len(buf) < 10 or buf[:8] != MAGIC:
        raise ContainerError("bad QRT magic")
    tag, ndim = struct.unpack_from("<BB", buf, 8)
    if tag not in _TAG_DTYPES:
        raise ContainerError(f"unknown QRT dtype tag {tag}")
    dims = struct.unpack_from(f"<{ndim}I", buf, 10) if ndim else ()
    offset = 10 + 4 * ndim
    arr = np.frombuffer(buf, dtype=_TAG_DTYPES[tag], offset=offset,
                        count=int(np.prod(dims)) if ndim else 1)
    arr = arr.reshape(dims)
    dt = {0: np.float32, 1: np.float64, 2: np.uint16}[tag]
    return arr.astype(dt, copy=True)


def save_qrt(path: str, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(qrt_bytes(arr))


def load_qrt(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_qrt(fh.read())


def save_pgm16(path: str, img01: np.ndarray, max_val: int = 65535) -> None:
    """16-bit binary PGM (big-endian payload, per the format)."""
    img01 = np.asarray(img01)
    if img01.ndim != 2:
        raise ContainerError(f"PGM wants a 2-d image, got shape {img01.shape}")
    q = np.clip(np.round(img01 * max_val), 0, max_val).astype(">u2")
    h, w = img01.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{max_val}\n".encode())
        fh.write(q.tobytes())


def load_pgm16(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ContainerError("not a binary PGM file")
    w, h = (int(v) for v in parts[1].split())
    max_val = int(parts[2])
    img = np.frombuffer(parts[3], dtype=">u2", count=h * w).reshape(h, w)
    return img.astype(np.float64) / max_val


def save_ppm(path: str, rgb01: np.ndarray) -> None:
    """8-bit binary PPM preview of an HxWx3 image in [0, 1]."""
    rgb01 = np.asarray(rgb01)
    if rgb01.ndim != 3 or rgb01.shape[2] != 3:
        raise ContainerError(f"PPM wants HxWx3, got shape {rgb01.shape}")
    q = np.clip(np.round(rgb01 * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = rgb01.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(q.tobytes())


def _config_bytes(sections: dict[str, dict]) -> bytes:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for name, kv in sections.items():
        cp[name] = {k: str(v) for k, v in kv.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue().encode()


def save_checkpoint(path: str, weights: dict, sections: dict[str, dict]) -> None:
    """Weights archive with embedded INI config; keys keep insertion order."""
    blobs = []
    index_lines = []
    offset = 0
    for key, value in weights.items():
        arr = value.data if isinstance(getattr(value, "data", None), np.ndarray) else np.asarray(value)
        blob = qrt_bytes(arr)
        index_lines.append(f"{key} {offset} {len(blob)}")
        blobs.append(blob)
        offset += len(blob)
    cfg = _config_bytes(sections)
    index = ("\n".join(index_lines) + "\n").encode() if index_lines else b""
    data = b"".join(blobs)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + b"\n")
        fh.write(f"config {len(cfg)}\n".encode())
        fh.write(cfg)
        fh.write(f"index {len(index)}\n".encode())
        fh.write(index)
        fh.write(f"data {len(data)}\n".encode())
        fh.write(data)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict[str, dict[str, str]]]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(CKPT_MAGIC + b"\n"):
        raise ContainerError("bad checkpoint magic")
    pos = len(CKPT_MAGIC) + 1

    def read_block(tag: str) -> bytes:
        nonlocal pos
        end = buf.index(b"\n", pos)
        name, size = buf[pos:end].decode().split()
        if name != tag:
            raise ContainerError(f"expected {tag} block, found {name}")
        start = end + 1
        pos = start + int(size)
        return buf[start:pos]

    cfg_bytes = read_block("config")
    index_bytes = read_block("index")
    data = read_block("data")

    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(cfg_bytes.decode())
    sections = {s: dict(cp[s]) for s in cp.sections()}

    weights: dict[str, np.ndarray] = {}
    for line in index_bytes.decode().splitlines():
        if not line.strip():
            continue
        key, off, length = line.rsplit(" ", 2)
        off, length = int(off), int(length)
        weights[key] = parse_qrt(data[off:off + length])
    return weights, sections


def save_loss_svg(path: str, xs, ys, title: str = "loss") -> None:
    """Single-polyline SVG chart."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size == 0 or xs.size != ys.size:
        raise ContainerError("chart needs matching non-empty x/y data")
    width, height, margin = 640, 360, 48
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    xr = (x1 - x0) or 1.0
    yr = (y1 - y0) or 1.0
    px = margin + (xs - x0) / xr * (width - 2 * margin)
    py = height - margin - (ys - y0) / yr * (height - 2 * margin)
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>\n'
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>\n'
        f'<text x="{width // 2}" y="{margin // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>\n'
        f'<text x="{margin}" y="{margin - 6}" font-family="sans-serif" '
        f'font-size="11">{y1:.4g}</text>\n'
        f'<text x="{margin}" y="{height - margin + 14}" font-family="sans-serif" '
        f'font-size="11">{y0:.4g}</text>\n'
        f'<polyline fill="none" stroke="#1f6fb2" stroke-width="1.5" points="{points}"/>\n'
        f'</svg>\n'
    )
    with open(path, "w") as fh:
        fh.write(svg)
