"""Two-stage image degradation synthesizer.

A single stage applies, in order: Gaussian blur (reflect padding), area
downsample by a real factor r, additive i.i.d. Gaussian noise, clamp to
[0, 1], block-DCT compression at quality q, clamp. The full pipeline runs
two stages and optionally bicubic-upsamples back to the input size.

Everything is deterministic given the caller's rng, and an identity
parameterization (sigma=0, r=1, delta=0, q=100) is a bit-exact no-op.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.fft
from scipy.signal import convolve2d

from .errors import InvalidArgumentError
from .images import area_downsample, check_image, resize_bicubic

# Baseline luminance quantization table (Annex K), applied to every channel.
QUANT_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class StageParams:
    """One degradation stage: blur std, downscale factor, noise std, quality."""

    sigma: float = 0.0
    r: float = 1.0
    delta: float = 0.0
    q: int = 100

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgumentError(f"blur sigma must be >= 0, got {self.sigma}")
        if self.r < 1:
            raise InvalidArgumentError(f"downscale factor must be >= 1, got {self.r}")
        if self.delta < 0:
            raise InvalidArgumentError(f"noise delta must be >= 0, got {self.delta}")
        if not 1 <= self.q <= 100:
            raise InvalidArgumentError(f"quality must be in [1, 100], got {self.q}")


@dataclass(frozen=True)
class DegradationConfig:
    """Two sequential stages plus the resolution-restoring upsample switch."""

    stage1: StageParams = field(default_factory=StageParams)
    stage2: StageParams = field(default_factory=StageParams)
    restore_resolution: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DegradationConfig":
        return DegradationConfig(
            stage1=StageParams(**d["stage1"]),
            stage2=StageParams(**d["stage2"]),
            restore_resolution=bool(d["restore_resolution"]),
        )


# Per-stage sampling ranges used for training data synthesis.
TRAIN_SIGMA_RANGE = (0.2, 3.0)
TRAIN_R_CHOICES = (1.0, 2.0, 4.0)
TRAIN_DELTA_RANGE = (0.0, 0.08)
TRAIN_Q_RANGE = (30, 100)


def sample_stage_params(rng: np.random.Generator) -> StageParams:
    """Draw one stage's parameters uniformly from the training ranges."""
    return StageParams(
        sigma=float(rng.uniform(*TRAIN_SIGMA_RANGE)),
        r=float(rng.choice(TRAIN_R_CHOICES)),
        delta=float(rng.uniform(*TRAIN_DELTA_RANGE)),
        q=int(rng.integers(TRAIN_Q_RANGE[0], TRAIN_Q_RANGE[1] + 1)),
    )


def sample_degradation_config(rng: np.random.Generator) -> DegradationConfig:
    """Draw a full two-stage config (resolution restored for model input)."""
    return DegradationConfig(
        stage1=sample_stage_params(rng),
        stage2=sample_stage_params(rng),
        restore_resolution=True,
    )


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Normalized 2-D Gaussian kernel on an odd size x size window.

    sigma=0 degenerates to a delta kernel.
    """
    if size < 1 or size % 2 == 0:
        raise InvalidArgumentError(f"kernel size must be odd and >= 1, got {size}")
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    half = size // 2
    if sigma == 0.0:
        k = np.zeros((size, size))
        k[half, half] = 1.0
        return k
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def kernel_size_for_sigma(sigma: float) -> int:
    """Odd window covering +/- 3 sigma."""
    return 2 * int(np.ceil(3.0 * max(sigma, 1e-12))) + 1


def _blur(x: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma, kernel_size_for_sigma(sigma))
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        out[:, :, c] = convolve2d(x[:, :, c], k, mode="same", boundary="symm")
    return out


def block_codec(x: np.ndarray, q: int) -> np.ndarray:
    """Lossy 8x8 block-DCT compression round trip at quality q.

    Per channel: scale to [0, 255], shift by -128, split into 8x8 blocks
    (borders edge-replicated to full blocks, cropped afterwards), orthonormal
    2-D DCT, divide by the quality-scaled table and round, dequantize,
    inverse DCT, unshift, rescale, clamp. The table scale follows the libjpeg
    rule: 5000/q for q < 50 else 200 - 2q, each entry floored at 1.
    q=100 is a lossless pass-through.
    """
    x = check_image(x)
    if not isinstance(q, (int, np.integer)) or not 1 <= q <= 100:
        raise InvalidArgumentError(f"quality must be an integer in [1, 100], got {q!r}")
    if q == 100:
        return x.copy()
    table = effective_quant_table(q)
    h, w, nc = x.shape
    ph, pw = (-h) % 8, (-w) % 8
    out = np.empty_like(x)
    for c in range(nc):
        plane = x[:, :, c] * 255.0 - 128.0
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
        hh, ww = plane.shape
        blocks = plane.reshape(hh // 8, 8, ww // 8, 8).transpose(0, 2, 1, 3)
        coefs = scipy.fft.dctn(blocks, axes=(-2, -1), norm="ortho")
        coefs = np.round(coefs / table) * table
        rec = scipy.fft.idctn(coefs, axes=(-2, -1), norm="ortho")
        rec = rec.transpose(0, 2, 1, 3).reshape(hh, ww)[:h, :w]
        out[:, :, c] = (rec + 128.0) / 255.0
    return np.clip(out, 0.0, 1.0)


def effective_quant_table(q: int) -> np.ndarray:
    """Quality-scaled quantization table (floored at 1)."""
    if not 1 <= q <= 100:
        raise InvalidArgumentError(f"quality must be in [1, 100], got {q}")
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    return np.maximum(1.0, np.floor((QUANT_TABLE * scale + 50.0) / 100.0))


def degrade_stage(x: np.ndarray, p: StageParams, rng: np.random.Generator) -> np.ndarray:
    """Apply one degradation stage; output size is floor(H/r) x floor(W/r)."""
    x = check_image(x)
    out = x.copy()
    if p.sigma > 0.0:
        out = _blur(out, p.sigma)
    if p.r > 1.0:
        h, w = out.shape[:2]
        out = area_downsample(out, max(1, int(h / p.r)), max(1, int(w / p.r)))
    if p.delta > 0.0:
        out = out + rng.standard_normal(out.shape) * p.delta
        out = np.clip(out, 0.0, 1.0)
    if p.q < 100:
        out = block_codec(out, p.q)
    return out


def degrade(x: np.ndarray, cfg: DegradationConfig, rng: np.random.Generator) -> np.ndarray:
    """Two-stage degradation, optionally upsampled back to the input size."""
    x = check_image(x)
    h, w = x.shape[:2]
    out = degrade_stage(x, cfg.stage1, rng)
    out = degrade_stage(out, cfg.stage2, rng)
    if cfg.restore_resolution and out.shape[:2] != (h, w):
        out = np.clip(resize_bicubic(out, (h, w)), 0.0, 1.0)
    return out
