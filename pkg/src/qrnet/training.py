"""Losses, optimizer, metrics, and the training/evaluation loops.

The objective is mean absolute error plus alpha times a frequency-domain
L1: the DFT of the prediction error is taken per channel and |dRe| + |dIm|
is averaged over all bins, so alpha is resolution independent. Optimization
is Adam with bias correction; the learning rate holds for the first
``lr_decay_start_epoch`` epochs, then decreases linearly to ``lr_final`` at
the last epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .autodiff import Tensor, ShapeError, _result, add, no_grad, scale
from .cfa import QuadBayerImage, split_exposures
from .isp import demosaic_quad_bilinear, preprocess_quad
from .model import QRNetConfig, QRNetWeights, qrnet_forward
from .noise import NoiseParams, Rng
from .synth import SceneTuple


@dataclass
class TrainConfig:
    epochs: int = 3
    iters_per_epoch: int = 100
    batch_size: int = 4
    crop: int = 64
    lr_init: float = 2e-3
    lr_final: float = 2e-4
    lr_decay_start_epoch: int | None = None  # defaults to epochs // 2
    alpha: float = 0.01
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    dtype: str = "f32"
    input_mode: str = "dual"  # dual | short | long
    exposure_ratio: float = 4.0
    gamma: float = 2.2

    def __post_init__(self):
        if not 0 < self.lr_final <= self.lr_init:
            raise ValueError("need 0 < lr_final <= lr_init")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.crop % 16:
            raise ValueError(f"crop must be divisible by 16, got {self.crop}")
        if self.input_mode not in ("dual", "short", "long"):
            raise ValueError(f"bad input_mode {self.input_mode}")
        if self.lr_decay_start_epoch is None:
            self.lr_decay_start_epoch = max(1, self.epochs // 2)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    out = np.abs(d).mean()

    def bw(g):
        s = np.sign(d) * (float(g) / d.size)
        return (s if pred.requires_grad else None,
                -s if target.requires_grad else None)

    return _result(np.asarray(out, d.dtype), (pred, target), bw, "l1_loss")


def frequency_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over frequency bins of |dRe| + |dIm| of the error spectrum."""
    if pred.shape != target.shape:
        raise ShapeError(f"frequency_loss shape mismatch: {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    spec = fourier.fft2d(d)
    nbins = d.size
    out = (np.abs(spec.real).sum() + np.abs(spec.imag).sum()) / nbins

    def bw(g):
        s = np.sign(spec.real) + 1j * np.sign(spec.imag)
        gd = (fourier.ifft2d(s).real * (float(g) / nbins)).astype(d.dtype)
        return (gd if pred.requires_grad else None,
                -gd if target.requires_grad else None)

    return _result(np.asarray(out, d.dtype), (pred, target), bw, "frequency_loss")


def overall_loss(pred: Tensor, target: Tensor, alpha: float = 0.01) -> Tensor:
    """l1 + alpha * frequency; alpha = 0 runs the same path and equals l1."""
    return add(l1_loss(pred, target), scale(frequency_loss(pred, target), alpha))


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(weights, grads: dict[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on the weight tensors."""
    state.t += 1
    t = state.t
    for key, p in weights.items():
        g = grads.get(key)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != weight shape {p.data.shape} for {key}")
        g = g.astype(np.float64, copy=False)
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(g)
        v = state.v.get(key)
        if v is None:
            v = state.v[key] = np.zeros_like(g)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Constant for the first decay_start epochs, then linear to lr_final."""
    s = cfg.lr_decay_start_epoch
    if epoch < s or cfg.epochs <= s:
        return cfg.lr_init
    frac = (epoch - (s - 1)) / ((cfg.epochs - 1) - (s - 1))
    return cfg.lr_init + frac * (cfg.lr_final - cfg.lr_init)


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def _tuple_input(t: SceneTuple, mode: str) -> QuadBayerImage:
    if mode == "dual":
        return t.x
    x_s, x_l = split_exposures(t.x)
    return x_s if mode == "short" else x_l


def crop_batch(tuples: list[SceneTuple], crop: int, batch: int, rng: Rng,
               noise: NoiseParams | None = None, exposure_ratio: float = 4.0,
               gamma: float = 2.2, input_mode: str = "dual",
               target_mode: str = "rgb", dtype: str = "f32") -> tuple[Tensor, Tensor]:
    """Random aligned crops -> (degraded network input, clean target).

    Crop offsets stay on the 4-pixel Quad-Bayer grid so layout phase is
    preserved. Degradation (noise, amplification, gamma) happens per crop.
    Targets are the aligned RGB crops, or the clean mosaic crops in raw mode.
    """
    qs, ys = [], []
    for _ in range(batch):
        t = tuples[rng.randint(len(tuples))]
        quad = _tuple_input(t, input_mode)
        h, w = quad.data.shape
        if crop > h or crop > w:
            raise ShapeError(f"crop {crop} exceeds image {h}x{w}")
        oy = 4 * rng.randint((h - crop) // 4 + 1)
        ox = 4 * rng.randint((w - crop) // 4 + 1)
        sub = QuadBayerImage(np.ascontiguousarray(quad.data[oy:oy + crop, ox:ox + crop]),
                             quad.layout, quad.exposure_ratio, quad.exposure_mode)
        q = preprocess_quad(sub, noise, exposure_ratio, gamma, rng=rng, dtype=dtype)
        if target_mode == "raw":
            y = t.x.data[None, oy:oy + crop, ox:ox + crop]
        else:
            y = t.y[oy:oy + crop, ox:ox + crop, :].transpose(2, 0, 1)
        qs.append(q.data)
        ys.append(y)
    q_batch = Tensor(np.stack(qs)[:, None, :, :], dtype=dtype)
    y_batch = Tensor(np.stack(ys), dtype=dtype)
    return q_batch, y_batch


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

PSNR_CAP_DB = 100.0


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    xs = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view
    n = k.size
    rows = sliding_window_view(img, n, axis=0) @ k
    return sliding_window_view(rows, n, axis=1) @ k


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         peak: float = 1.0) -> float:
    """Structural similarity, 11x11 Gaussian window, sigma 1.5, valid borders.

    Multichannel inputs average the per-channel scores.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], k1, k2, peak)
                              for c in range(a.shape[-1])]))
    if min(a.shape) < 11:
        raise ShapeError(f"ssim needs images at least 11x11, got {a.shape}")
    k = _gaussian_window()
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_a = _filter_valid(a, k)
    mu_b = _filter_valid(b, k)
    var_a = _filter_valid(a * a, k) - mu_a ** 2
    var_b = _filter_valid(b * b, k) - mu_b ** 2
    cov = _filter_valid(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# train / evaluate
# ---------------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    pass


_EVAL_SEED_SALT = 0x51AD_BA1E


def _find_first_nonfinite(q: Tensor, weights: QRNetWeights, cfg: QRNetConfig) -> str:
    bad: list[str] = []

    def probe(name, t):
        if not bad and not np.all(np.isfinite(t.data)):
            bad.append(name)

    with no_grad():
        qrnet_forward(q, weights, cfg, probe=probe)
    return bad[0] if bad else "loss"


@dataclass
class TrainResult:
    weights: QRNetWeights
    train_rows: list[tuple]  # (epoch, iter, lr, l_recon, l_freq, l_overall)
    val_rows: list[tuple]    # (epoch, psnr, ssim)


def degrade_input(t: SceneTuple, noise: NoiseParams | None, rng: Rng,
                  exposure_ratio: float, gamma: float = 2.2,
                  input_mode: str = "dual", dtype: str = "f32") -> Tensor:
    """Full-frame degraded network input for one tuple."""
    quad = _tuple_input(t, input_mode)
    return preprocess_quad(quad, noise, exposure_ratio, gamma, rng=rng, dtype=dtype)


def restore(q: Tensor, weights: QRNetWeights, cfg: QRNetConfig) -> np.ndarray:
    """Forward pass without recording, clamped to [0, 1], as HxWxC."""
    with no_grad():
        out = qrnet_forward(q, weights, cfg)
    img = np.clip(out.data[0], 0.0, 1.0)
    return img.transpose(1, 2, 0)


def naive_restore(t: SceneTuple, q: Tensor) -> np.ndarray:
    """No-network reference: tent-demosaic the degraded (gamma-matched)
    input and apply the tuple's white-balance gains."""
    rgb = demosaic_quad_bilinear(q.data.astype(np.float64), t.x.layout)
    gains = np.array([float(t.meta.get("w_r", 1.7)), 1.0, float(t.meta.get("w_b", 1.5))])
    return np.clip(rgb * gains, 0.0, 1.0)


def evaluate(tuples: list[SceneTuple], weights: QRNetWeights, model_cfg: QRNetConfig,
             noise: NoiseParams | None, exposure_ratio: float = 4.0,
             gamma: float = 2.2, input_mode: str = "dual", seed: int = 0,
             dtype: str = "f32", with_baseline: bool = False) -> dict:
    """Mean PSNR/SSIM of restored outputs against the clean targets.

    Degradation is seeded per tuple index, so repeated calls are identical.
    """
    rows = []
    for i, t in enumerate(tuples):
        rng = Rng(seed ^ _EVAL_SEED_SALT).derive(i)
        q = degrade_input(t, noise, rng, exposure_ratio, gamma, input_mode, dtype)
        target = t.x.data[..., None] if model_cfg.output_mode == "raw" else t.y
        out = restore(Tensor(q.data[None, None], dtype=dtype), weights, model_cfg)
        row = {"psnr": psnr(out, target), "ssim": ssim(out, target)}
        if with_baseline:
            base = naive_restore(t, q)
            row["baseline_psnr"] = psnr(base, t.y)
            row["baseline_ssim"] = ssim(base, t.y)
        rows.append(row)
    summary = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    summary["per_tuple"] = rows
    return summary


def train(train_tuples: list[SceneTuple], cfg: TrainConfig, model_cfg: QRNetConfig,
          noise: NoiseParams | None = None, val_tuples: list[SceneTuple] | None = None,
          weights: QRNetWeights | None = None, stop_after_iters: int | None = None,
          log_every: int = 0) -> TrainResult:
    """Crop -> forward -> loss -> backward -> Adam, with per-epoch validation."""
    from .model import init_weights

    if not train_tuples:
        raise ValueError("no training tuples")
    rng = Rng(cfg.seed)
    if weights is None:
        weights = init_weights(model_cfg, rng.derive(0xC0FFEE), dtype=cfg.dtype)
    state = AdamState()
    train_rows: list[tuple] = []
    val_rows: list[tuple] = []
    done = 0
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        for it in range(cfg.iters_per_epoch):
            q, y = crop_batch(train_tuples, cfg.crop, cfg.batch_size, rng,
                              noise=noise, exposure_ratio=cfg.exposure_ratio,
                              gamma=cfg.gamma, input_mode=cfg.input_mode,
                              target_mode=model_cfg.output_mode, dtype=cfg.dtype)
            pred = qrnet_forward(q, weights, model_cfg)
            recon = l1_loss(pred, y)
            freq = frequency_loss(pred, y)
            loss = add(recon, scale(freq, cfg.alpha))
            if not np.isfinite(float(loss.data)):
                layer = _find_first_nonfinite(q, weights, model_cfg)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} iter {it}; "
                    f"first non-finite layer: {layer}")
            weights.zero_grads()
            loss.backward()
            adam_step(weights, weights.grads(), state, lr, cfg.beta1, cfg.beta2)
            train_rows.append((epoch, it, lr, float(recon.data), float(freq.data),
                               float(loss.data)))
            if log_every and (done + 1) % log_every == 0:
                print(f"epoch {epoch} iter {it} lr {lr:.2e} loss {float(loss.data):.4f}")
            done += 1
            if stop_after_iters is not None and done >= stop_after_iters:
                return TrainResult(weights, train_rows, val_rows)
        if val_tuples:
            metrics = evaluate(val_tuples, weights, model_cfg, noise,
                               cfg.exposure_ratio, cfg.gamma, cfg.input_mode,
                               seed=cfg.seed, dtype=cfg.dtype)
            val_rows.append((epoch, metrics["psnr"], metrics["ssim"]))
    return TrainResult(weights, train_rows, val_rows)


def write_train_csv(path: str, rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,iter,lr,l_recon,l_freq,l_overall\n")
        for epoch, it, lr, lrcn, lfrq, lall in rows:
            fh.write(f"{epoch},{it},{lr:.8e},{lrcn:.8e},{lfrq:.8e},{lall:.8e}\n")


def write_val_csv(path: str, rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,psnr,ssim\n")
        for epoch, p, s in rows:
            fh.write(f"{epoch},{p:.6f},{s:.6f}\n")
