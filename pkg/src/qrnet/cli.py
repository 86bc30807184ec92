"""Command line interface: synth, train, eval, infer, macs, plot.

Exit codes: 0 success, 2 bad flags or malformed inputs, 3 I/O failure,
4 incompatible checkpoint. Diagnostics go to stderr, results to stdout.
QRNET_SEED serves as the seed when no --seed flag is given.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import qrt, synth, training
from .cfa import QuadBayerImage
from .config import ConfigError, RunConfig
from .model import QRNetConfig, QRNetWeights, count_macs, init_weights
from .noise import NoiseParams, Rng
from .training import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CKPT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"bad --size {text!r}; expected WxH", EXIT_USAGE)
    if w % 16 or h % 16:
        raise CliError(f"--size {text} rejected: dims must be divisible by 16", EXIT_USAGE)
    return w, h


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("QRNET_SEED")
    return int(env) if env else 0


def _load_run_config(args) -> RunConfig:
    try:
        return RunConfig.from_file(getattr(args, "config", None))
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE)
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO)


def _noise_from(cfg: RunConfig) -> NoiseParams | None:
    section = cfg.section("noise")
    if not section.pop("enabled", True):
        return None
    return NoiseParams(**{k: v for k, v in section.items()}) if section else NoiseParams()


def _model_from(cfg: RunConfig) -> QRNetConfig:
    return QRNetConfig(**cfg.section("model"))


def _train_from(cfg: RunConfig) -> TrainConfig:
    kv = cfg.section("train")
    synth_kv = cfg.section("synth")
    if "exposure_ratio" in synth_kv:
        kv.setdefault("exposure_ratio", synth_kv["exposure_ratio"])
    isp_kv = cfg.section("isp")
    if "gamma" in isp_kv:
        kv.setdefault("gamma", isp_kv["gamma"])
    return TrainConfig(**kv)


def cmd_synth(args) -> int:
    cfg = _load_run_config(args)
    w, h = _parse_size(args.size)
    try:
        synth.make_dataset(
            args.count, args.out, size=(w, h), seed=_seed(args),
            exposure_ratio=cfg.get("synth", "exposure_ratio", 4.0),
            subframes=cfg.get("synth", "subframes", 17),
            max_disp=cfg.get("synth", "max_disp", 12.0),
            val_count=cfg.get("synth", "val_count"))
    except OSError as exc:
        raise CliError(f"dataset write failed: {exc}", EXIT_IO)
    print(f"wrote {args.count} tuples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    model_cfg = _model_from(cfg)
    train_cfg = _train_from(cfg)
    if args.seed is not None:
        train_cfg.seed = args.seed
    noise = _noise_from(cfg)
    try:
        train_tuples = synth.load_dataset(args.data, "train")
        val_tuples = synth.load_dataset(args.data, "val")
    except (OSError, FileNotFoundError) as exc:
        raise CliError(f"cannot load dataset: {exc}", EXIT_IO)
    result = training.train(train_tuples, train_cfg, model_cfg, noise=noise,
                            val_tuples=val_tuples, log_every=args.log_every)
    sections = {
        "model": model_cfg.__dict__,
        "train": {k: v for k, v in train_cfg.__dict__.items()},
    }
    try:
        qrt.save_checkpoint(args.out, dict(result.weights.items()), sections)
        base, _ = os.path.splitext(args.out)
        training.write_train_csv(base + "_train.csv", result.train_rows)
        training.write_val_csv(base + "_val.csv", result.val_rows)
    except OSError as exc:
        raise CliError(f"checkpoint write failed: {exc}", EXIT_IO)
    last = result.train_rows[-1]
    print(f"trained {len(result.train_rows)} iterations, final loss {last[5]:.5f}")
    if result.val_rows:
        print(f"validation psnr {result.val_rows[-1][1]:.3f} dB "
              f"ssim {result.val_rows[-1][2]:.4f}")
    return EXIT_OK


def _load_checkpoint(path: str) -> tuple[QRNetWeights, QRNetConfig, dict]:
    try:
        raw, sections = qrt.load_checkpoint(path)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint: {exc}", EXIT_IO)
    except qrt.ContainerError as exc:
        raise CliError(f"bad checkpoint: {exc}", EXIT_CKPT)
    model_kv = sections.get("model", {})
    cfg = QRNetConfig(
        base_channels=int(model_kv.get("base_channels", 16)),
        res_blocks=int(model_kv.get("res_blocks", 2)),
        output_mode=model_kv.get("output_mode", "rgb"),
        activation_slope=float(model_kv.get("activation_slope", 0.2)),
        interaction=model_kv.get("interaction", "True") == "True",
        ieb=model_kv.get("ieb", "True") == "True",
        levels=int(model_kv.get("levels", 5)))
    from .autodiff import Tensor
    reference = init_weights(cfg, Rng(0))
    diffs = []
    for key, ref in reference.items():
        if key not in raw:
            diffs.append(f"missing {key} (expected shape {ref.shape})")
        elif tuple(raw[key].shape) != tuple(ref.shape):
            diffs.append(f"{key}: checkpoint {raw[key].shape} vs expected {ref.shape}")
    for key in raw:
        if key not in reference.params:
            diffs.append(f"unexpected key {key}")
    if diffs:
        raise CliError("incompatible checkpoint:\n  " + "\n  ".join(diffs), EXIT_CKPT)
    weights = QRNetWeights({k: Tensor(v, requires_grad=True) for k, v in raw.items()})
    return weights, cfg, sections


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    weights, model_cfg, sections = _load_checkpoint(args.ckpt)
    noise = _noise_from(cfg)
    train_kv = sections.get("train", {})
    exposure_ratio = float(train_kv.get("exposure_ratio", 4.0))
    try:
        tuples = synth.load_dataset(args.data, "val") or synth.load_dataset(args.data)
    except (OSError, FileNotFoundError) as exc:
        raise CliError(f"cannot load dataset: {exc}", EXIT_IO)
    metrics = training.evaluate(tuples, weights, model_cfg, noise,
                                exposure_ratio=exposure_ratio,
                                seed=int(train_kv.get("seed", 0)),
                                with_baseline=True)
    print(f"tuples {len(tuples)}  psnr {metrics['psnr']:.4f} dB  "
          f"ssim {metrics['ssim']:.6f}  baseline_psnr {metrics['baseline_psnr']:.4f} dB")
    out_csv = args.out or (os.path.splitext(args.ckpt)[0] + "_eval.csv")
    try:
        with open(out_csv, "w") as fh:
            fh.write("tuple,psnr,ssim,baseline_psnr,baseline_ssim\n")
            for i, row in enumerate(metrics["per_tuple"]):
                fh.write(f"{i},{row['psnr']:.6f},{row['ssim']:.6f},"
                         f"{row['baseline_psnr']:.6f},{row['baseline_ssim']:.6f}\n")
    except OSError as exc:
        raise CliError(f"metrics write failed: {exc}", EXIT_IO)
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _load_run_config(args)
    weights, model_cfg, sections = _load_checkpoint(args.ckpt)
    train_kv = sections.get("train", {})
    exposure_ratio = float(train_kv.get("exposure_ratio", 4.0))
    gamma = cfg.get("isp", "gamma", 2.2)
    white_level = cfg.get("noise", "white_level", 1023)
    try:
        data = qrt.load_qrt(args.input)
    except (OSError, qrt.ContainerError) as exc:
        raise CliError(f"cannot read input: {exc}", EXIT_IO if isinstance(exc, OSError) else EXIT_USAGE)
    if data.dtype == np.uint16:
        data = data.astype(np.float32) / white_level
    if data.ndim != 2:
        raise CliError(f"infer input must be a 2-d mosaic, got shape {data.shape}", EXIT_USAGE)
    h, w = data.shape
    if h % 16 or w % 16:
        raise CliError(f"input dims must be divisible by 16, got {h}x{w}", EXIT_USAGE)
    from .isp import preprocess_quad
    quad = QuadBayerImage(np.clip(data, 0.0, 1.0), exposure_ratio=exposure_ratio)
    q = preprocess_quad(quad, None, exposure_ratio, gamma)
    from .autodiff import Tensor
    out = training.restore(Tensor(q.data[None, None], dtype="f32"), weights, model_cfg)
    try:
        if model_cfg.output_mode == "rgb":
            qrt.save_ppm(args.out, out)
        else:
            qrt.save_pgm16(args.out, out[..., 0])
        qrt.save_qrt(os.path.splitext(args.out)[0] + ".qrt", out.astype(np.float32))
    except OSError as exc:
        raise CliError(f"output write failed: {exc}", EXIT_IO)
    print(f"restored {h}x{w} -> {args.out}")
    return EXIT_OK


def cmd_macs(args) -> int:
    cfg = _load_run_config(args)
    model_cfg = _model_from(cfg)
    w, h = _parse_size(args.size)
    macs = count_macs(model_cfg, h, w)
    print(f"{macs} MACs ({macs / 1e9:.3f}G) at {w}x{h}")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        with open(args.csv) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise CliError(f"cannot read csv: {exc}", EXIT_IO)
    if not lines or "l_overall" not in lines[0]:
        raise CliError(f"{args.csv} is not a training csv (expected l_overall column)", EXIT_USAGE)
    cols = lines[0].split(",")
    idx = cols.index("l_overall")
    ys = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise CliError(f"malformed csv row: {ln!r}", EXIT_USAGE)
        try:
            ys.append(float(parts[idx]))
        except ValueError:
            raise CliError(f"malformed csv value in row: {ln!r}", EXIT_USAGE)
    if not ys:
        raise CliError("csv has no data rows", EXIT_USAGE)
    try:
        qrt.save_loss_svg(args.out, np.arange(len(ys)), np.array(ys), title="loss vs iteration")
    except OSError as exc:
        raise CliError(f"plot write failed: {exc}", EXIT_IO)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrnet",
                                     description="dual-exposure Quad-Bayer restoration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize an aligned tuple dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", default="128x128", help="tuple resolution WxH")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train on a synthesized dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the validation split")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", default=None, help="metrics csv path")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="restore one Quad-Bayer mosaic")
    p.add_argument("--input", required=True, help="QRT mosaic (f32 in [0,1] or u16)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="PPM preview path (QRT written alongside)")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("macs", help="print the analytic MAC count")
    p.add_argument("--config", default=None)
    p.add_argument("--size", default="512x512")
    p.set_defaults(fn=cmd_macs)

    p = sub.add_parser("plot", help="emit an SVG loss chart from a training csv")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
