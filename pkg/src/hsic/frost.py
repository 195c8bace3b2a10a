"""Frost filter despeckling.

Each pixel becomes the normalized exponentially-weighted average of its
n x n window; the decay rate beta follows the local coefficient of
variation, so homogeneous regions average strongly while edges stay
sharp.  Two beta modes are provided: the classical damped form
damping*(D/mu)^2 (default) and a literal 4/(n*mu^2) variant in which the
variance terms cancel.
"""

import concurrent.futures
import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .cube import HyperCube, SpectralBand
from .errors import SpecInvalid

BETA_MODES = ("damped", "literal")


@dataclass(frozen=True)
class FrostConfig:
    window: int = 5
    damping: float = 2.0
    beta_mode: str = "damped"

    def validate(self):
        if self.window < 3 or self.window % 2 == 0:
            raise SpecInvalid(f"window must be odd and >= 3, got {self.window}")
        if not self.damping > 0:
            raise SpecInvalid(f"damping must be > 0, got {self.damping}")
        if self.beta_mode not in BETA_MODES:
            raise SpecInvalid(f"beta_mode must be one of {BETA_MODES}")


@dataclass
class WindowStats:
    mean: float
    stddev: float
    beta: float


@dataclass
class WeightMask:
    weights: np.ndarray  # (n, n)
    alpha: float


def window_stats(band: SpectralBand, cx: int, cy: int, n: int,
                 damping: float = 2.0, beta_mode: str = "damped") -> WindowStats:
    """Mean, population stddev, and beta of the edge-clamped window at (cx, cy)."""
    h, w = band.pixels.shape
    r = n // 2
    ys = np.clip(np.arange(cy - r, cy + r + 1), 0, h - 1)
    xs = np.clip(np.arange(cx - r, cx + r + 1), 0, w - 1)
    win = band.pixels[ys][:, xs]
    mu = float(win.mean())
    var = float(((win - mu) ** 2).mean())
    if mu == 0.0:
        beta = 0.0
    elif beta_mode == "literal":
        beta = 4.0 / (n * (mu * mu))
    else:
        beta = damping * (var / (mu * mu))
    return WindowStats(mu, math.sqrt(var), beta)


def frost_weights(stats: WindowStats, n: int) -> WeightMask:
    """w(dx,dy) = exp(-beta*(|dx|+|dy|)), alpha = 1/sum(w)."""
    r = n // 2
    d = np.abs(np.arange(-r, r + 1))
    dist = d[:, None] + d[None, :]
    weights = np.exp(-stats.beta * dist)
    return WeightMask(weights, 1.0 / float(weights.sum()))


def filter_band(band: SpectralBand, cfg: FrostConfig) -> SpectralBand:
    """Apply the filter to one band; output carries full float precision."""
    cfg.validate()
    img = np.ascontiguousarray(band.pixels, dtype=np.float64)
    out = kernels.frost_filter(img, cfg.window, cfg.damping,
                               cfg.beta_mode == "literal")
    return SpectralBand(band.index, out)


def filter_cube(cube: HyperCube, cfg: FrostConfig, threads: int = 1) -> HyperCube:
    """Filter every band; header dtype becomes f32 (quantization happens on save)."""
    cfg.validate()
    if threads == 1 or len(cube.bands) == 1:
        bands = [filter_band(b, cfg) for b in cube.bands]
    else:
        workers = threads if threads > 0 else None
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            bands = list(pool.map(lambda b: filter_band(b, cfg), cube.bands))
    header = replace(cube.header, dtype="f32")
    return HyperCube(header, bands)
