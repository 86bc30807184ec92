"""Dense tensors with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy arrays in f32 or f64. Every operation that
produces a tensor records an op node (inputs + backward rule) when grad
recording is enabled; creation order doubles as topological order, so
``Tensor.backward`` replays the recorded tape in reverse, visiting each
node exactly once. Tapes built on different threads are independent.

Conventions frozen here:
  * pixel_unshuffle channel ordering: out channel = c*r*r + dy*r + dx
  * conv2d uses zero padding, avg_pool2d uses reflect padding
  * upsample_bilinear2x samples at (i + 0.5)/2 - 0.5 (align_corners=False)
  * leaky_relu subgradient at 0 takes the positive branch
"""

from __future__ import annotations

import itertools
import threading
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPES = {"f32": np.float32, "f64": np.float64}


class ShapeError(ValueError):
    """Operand shapes (or dtypes) violate an operation's contract."""


_tls = threading.local()
_seq = itertools.count()


def _recording() -> bool:
    return getattr(_tls, "recording", True)


class no_grad:
    """Context manager disabling tape recording on the current thread."""

    def __enter__(self):
        self._prev = _recording()
        _tls.recording = False
        return self

    def __exit__(self, *exc):
        _tls.recording = self._prev
        return False


class _Node:
    """One recorded operation: inputs, backward rule, creation index."""

    __slots__ = ("inputs", "backward", "seq", "name")

    def __init__(self, inputs, backward, name):
        self.inputs = inputs
        self.backward = backward
        self.seq = next(_seq)
        self.name = name


class Tensor:
    """N-d value, optionally participating in gradient recording.

    ``data`` is always a contiguous numpy array of dtype float32/float64.
    ``grad`` is populated (overwritten, never accumulated across calls)
    for requires_grad leaves by ``backward``.
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, dtype: str | None = None, requires_grad: bool = False):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(DTYPES[dtype], copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = _contiguous(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> str:
        return "f32" if self.data.dtype == np.float32 else "f64"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def assert_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in {what}")
        return self

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self) -> None:
        """Populate d(self)/d(leaf) for every requires_grad leaf.

        ``self`` must be scalar. Grads are overwritten on each call; they
        accumulate only across the multiple paths of a single call.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar, got shape {self.shape}")
        # Collect reachable op nodes together with their output tensor.
        entries: list[tuple[Tensor, _Node]] = []
        seen: set[int] = set()
        stack: list[Tensor] = [self]
        while stack:
            t = stack.pop()
            node = t.node
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            entries.append((t, node))
            stack.extend(node.inputs)
        entries.sort(key=lambda e: e[1].seq)

        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        leaves: dict[int, Tensor] = {}
        for out_t, node in reversed(entries):
            g = pending.pop(id(out_t), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, ig in zip(node.inputs, in_grads):
                if ig is None or not t.requires_grad:
                    continue
                acc = pending.get(id(t))
                pending[id(t)] = ig if acc is None else acc + ig
                if t.node is None:
                    leaves[id(t)] = t
        for tid, t in leaves.items():
            t.grad = _contiguous(pending[tid])
        if self.node is None and self.requires_grad:
            self.grad = np.ones_like(self.data)

    # Small operator sugar used by tests and demos.
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.data.dtype)))

    def __sub__(self, other):
        return sub(self, other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.data.dtype)))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def _contiguous(arr: np.ndarray) -> np.ndarray:
    # ascontiguousarray would promote 0-d scalars to 1-d; keep their shape
    arr = np.asarray(arr)
    return arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable, name: str) -> Tensor:
    req = _recording() and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = _contiguous(data)
    out.requires_grad = req
    out.grad = None
    out.node = _Node(tuple(inputs), backward, name) if req else None
    return out


def _check_same_dtype(*tensors: Tensor) -> None:
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ShapeError(f"dtype mismatch: {tensors[0].data.dtype} vs {t.data.dtype}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (adjoint of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data + b.data

    def bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _result(out, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data - b.data

    def bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _result(out, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _result(out, (a, b), bw, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = a.data * s

    def bw(g):
        return (g * s,)

    return _result(out, (a,), bw, "scale")


def absolute(a: Tensor) -> Tensor:
    out = np.abs(a.data)

    def bw(g):
        return (g * np.sign(a.data),)

    return _result(out, (a,), bw, "abs")


def mean(a: Tensor) -> Tensor:
    out = a.data.mean()
    n = a.data.size

    def bw(g):
        return (np.full(a.shape, float(g) / n, dtype=a.data.dtype),)

    return _result(out, (a,), bw, "mean")


def tensor_sum(a: Tensor) -> Tensor:
    out = a.data.sum()

    def bw(g):
        return (np.full(a.shape, float(g), dtype=a.data.dtype),)

    return _result(out, (a,), bw, "sum")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(a.shape),)

    return _result(out, (a,), bw, "reshape")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    _check_same_dtype(*tensors)
    shapes = [t.shape for t in tensors]
    ref = list(shapes[0])
    for s in shapes[1:]:
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeError(f"concat shapes incompatible along axis {axis}: {shapes}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        grads = []
        for i, t in enumerate(tensors):
            if not t.requires_grad:
                grads.append(None)
                continue
            sel = [slice(None)] * g.ndim
            sel[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sel)])
        return tuple(grads)

    return _result(out, tuple(tensors), bw, "concat")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in [0, 1), got {slope}")
    pos = a.data >= 0
    out = np.where(pos, a.data, slope * a.data)

    def bw(g):
        return (g * np.where(pos, np.asarray(1.0, a.data.dtype), np.asarray(slope, a.data.dtype)),)

    return _result(out, (a,), bw, "leaky_relu")


def sigmoid(a: Tensor) -> Tensor:
    d = a.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), bw, "sigmoid")


# ---------------------------------------------------------------------------
# pixel shuffle / unshuffle
# ---------------------------------------------------------------------------

def pixel_unshuffle(a: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = _nchw(a)
    f = int(factor)
    if h % f or w % f:
        raise ShapeError(f"pixel_unshuffle needs H, W divisible by {f}, got {h}x{w}")
    out = _unshuffle_data(a.data, f)

    def bw(g):
        return (_shuffle_data(g, f),)

    return _result(out, (a,), bw, "pixel_unshuffle")


def pixel_shuffle(a: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = _nchw(a)
    f = int(factor)
    if c % (f * f):
        raise ShapeError(f"pixel_shuffle needs C divisible by {f * f}, got C={c}")
    out = _shuffle_data(a.data, f)

    def bw(g):
        return (_unshuffle_data(g, f),)

    return _result(out, (a,), bw, "pixel_shuffle")


def _nchw(a: Tensor) -> tuple[int, int, int, int]:
    if a.data.ndim != 4:
        raise ShapeError(f"expected NCHW tensor, got shape {a.shape}")
    return a.data.shape


def _unshuffle_data(d: np.ndarray, f: int) -> np.ndarray:
    n, c, h, w = d.shape
    # out channel index = c*f*f + dy*f + dx for source offset (dy, dx)
    return (d.reshape(n, c, h // f, f, w // f, f)
             .transpose(0, 1, 3, 5, 2, 4)
             .reshape(n, c * f * f, h // f, w // f))


def _shuffle_data(d: np.ndarray, f: int) -> np.ndarray:
    n, c, h, w = d.shape
    return (d.reshape(n, c // (f * f), f, f, h, w)
             .transpose(0, 1, 4, 2, 5, 3)
             .reshape(n, c // (f * f), h * f, w * f))


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded cross-correlation, NCHW x OIHW -> NOHW."""
    n, cin, h, w = _nchw(x)
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d weight must be OIHW, got shape {weight.shape}")
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input has {cin}, weight expects {cin_w}")
    if kh != kw or kh not in (1, 3, 5):
        raise ShapeError(f"conv2d supports square 1/3/5 kernels, got {kh}x{kw}")
    if stride not in (1, 2):
        raise ShapeError(f"conv2d stride must be 1 or 2, got {stride}")
    _check_same_dtype(x, weight, *( (bias,) if bias is not None else () ))
    p = int(padding)
    ho = (h + 2 * p - kh) // stride + 1
    wo = (w + 2 * p - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {h}x{w}, kernel {kh}, pad {p}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (n, cin, ho, wo, kh, kw) -> (n, ho*wo, cin*kh*kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, cin * kh * kw)
    wm = weight.data.reshape(cout, cin * kh * kw)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    out = out.transpose(0, 2, 1).reshape(n, cout, ho, wo)

    def bw(g):
        gm = g.reshape(n, cout, ho * wo).transpose(0, 2, 1)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = np.tensordot(gm, cols, axes=([0, 1], [0, 1])).reshape(weight.data.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gcols = (gm @ wm).reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[..., i, j]
            gx = gxp[:, :, p:p + h, p:p + w] if p else gxp
        if bias is not None:
            return gx, gw, gb
        return gx, gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, inputs, bw, "conv2d")


# ---------------------------------------------------------------------------
# pooling and resampling (separable linear maps, cached per axis)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _reflect_indices(n: int, pad: int) -> tuple[int, ...]:
    # mirror without repeating the edge sample; requires pad <= n - 1
    idx = []
    for i in range(-pad, n + pad):
        j = i
        if j < 0:
            j = -j
        elif j >= n:
            j = 2 * n - 2 - j
        idx.append(j)
    return tuple(idx)


@lru_cache(maxsize=None)
def _pool_matrix(n: int, window: int, stride: int, pad: int, dtype: str) -> np.ndarray:
    """(n_out, n) matrix applying reflect pad then windowed mean along one axis."""
    if window < 1:
        raise ShapeError(f"pool window must be >= 1, got {window}")
    if pad > 0 and pad > n - 1:
        raise ShapeError(f"reflect pad {pad} too large for axis of size {n}")
    padded = n + 2 * pad
    n_out = (padded - window) // stride + 1
    if window > padded or n_out < 1:
        raise ShapeError(f"pool window {window} larger than padded input {padded}")
    m = np.zeros((n_out, n), dtype=DTYPES[dtype])
    src = _reflect_indices(n, pad)
    inv = 1.0 / window
    for r in range(n_out):
        for k in range(window):
            m[r, src[r * stride + k]] += inv
    return m


def avg_pool2d(x: Tensor, window: int, stride: int, pad: int = 0) -> Tensor:
    """Windowed mean with reflect padding when pad > 0."""
    n, c, h, w = _nchw(x)
    mh = _pool_matrix(h, window, stride, pad, x.dtype)
    mw = _pool_matrix(w, window, stride, pad, x.dtype)
    out = np.matmul(mh, np.matmul(x.data, mw.T))

    def bw(g):
        return (np.matmul(mh.T, np.matmul(g, mw)),)

    return _result(out, (x,), bw, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, w = _nchw(x)
    out = x.data.mean(axis=(2, 3))

    def bw(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).copy(),)

    return _result(out, (x,), bw, "global_avg_pool")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (N, fin) @ weight (fout, fin).T + bias (fout,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"linear expects 2-d input and weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear feature mismatch: {x.shape[1]} vs {weight.shape[1]}")
    _check_same_dtype(x, weight, *( (bias,) if bias is not None else () ))
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def bw(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        if bias is not None:
            gb = g.sum(axis=0) if bias.requires_grad else None
            return gx, gw, gb
        return gx, gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, inputs, bw, "linear")


@lru_cache(maxsize=None)
def _upsample_matrix(n: int, dtype: str) -> np.ndarray:
    """(2n, n) bilinear 2x upsampling along one axis, align_corners=False."""
    u = np.zeros((2 * n, n), dtype=DTYPES[dtype])
    for i in range(2 * n):
        y = (i + 0.5) / 2.0 - 0.5
        y0 = int(np.floor(y))
        t = y - y0
        lo = min(max(y0, 0), n - 1)
        hi = min(max(y0 + 1, 0), n - 1)
        u[i, lo] += 1.0 - t
        u[i, hi] += t
    return u


def upsample_bilinear2x(x: Tensor) -> Tensor:
    n, c, h, w = _nchw(x)
    uh = _upsample_matrix(h, x.dtype)
    uw = _upsample_matrix(w, x.dtype)
    out = np.matmul(uh, np.matmul(x.data, uw.T))

    def bw(g):
        return (np.matmul(uh.T, np.matmul(g, uw)),)

    return _result(out, (x,), bw, "upsample_bilinear2x")


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
               h: float = 1e-5, tol: float | None = None) -> float:
    """Compare analytic grads of scalar ``fn(*inputs)`` to central differences.

    The step per element is h * max(1, |value|). Returns the max over all
    elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8);
    raises AssertionError if ``tol`` is given and exceeded.
    """
    out = fn(*inputs)
    for t in inputs:
        t.grad = None
    out.backward()
    analytic = {id(t): (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for t in inputs if t.requires_grad}
    max_rel = 0.0
    with no_grad():
        for t in inputs:
            if not t.requires_grad:
                continue
            ana = analytic[id(t)]
            flat = t.data.reshape(-1)
            aflat = ana.reshape(-1)
            for i in range(flat.size):
                theta = flat[i]
                step = h * max(1.0, abs(float(theta)))
                flat[i] = theta + step
                f_plus = float(fn(*inputs).data)
                flat[i] = theta - step
                f_minus = float(fn(*inputs).data)
                flat[i] = theta
                num = (f_plus - f_minus) / (2.0 * step)
                a = float(aflat[i])
                rel = abs(a - num) / max(abs(a), abs(num), 1e-8)
                if rel > max_rel:
                    max_rel = rel
    if tol is not None and max_rel > tol:
        raise AssertionError(f"grad_check failed: max rel err {max_rel:.3e} > tol {tol:.1e}")
    return max_rel
