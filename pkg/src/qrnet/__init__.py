"""Dual-exposure Quad-Bayer sensor simulation and restoration, desk scale.

Subpackages: ``autodiff`` (tensor engine), ``fourier`` (mixed-radix FFT),
``cfa`` (layouts and Bayer to Quad-Bayer sampling), ``noise`` (physical
sensor noise), ``isp`` (RAW/RGB transforms), ``synth`` (scene and dataset
synthesis), ``model`` (QRNet), ``training`` (losses, Adam, metrics, loops),
``qrt`` (binary containers), ``cli`` (command line).
"""

from .autodiff import Tensor, grad_check, no_grad
from .cfa import (BayerImage, CfaLayout, QuadBayerImage, align_target_rgb,
                  b2qb_sample, mosaic_from_rgb, quad_layout_default,
                  quad_pixel_source, split_exposures)
from .isp import IspParams, demosaic_hqlinear, gamma_correct, preprocess_quad, raw2rgb, rgb2raw
from .model import QRNetConfig, QRNetWeights, count_macs, init_weights, qrnet_forward
from .noise import NoiseParams, Rng, add_physical_noise, sample_poisson
from .synth import SceneTuple, Trajectory, gen_base_image, make_dataset, render_motion_pair, synthesize_tuple
from .training import TrainConfig, l1_loss, frequency_loss, overall_loss, psnr, ssim, train

__version__ = "0.1.0"
