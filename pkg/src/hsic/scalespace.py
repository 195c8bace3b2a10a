"""Gaussian scale-space feature extraction.

Per band: normalize intensities to [0, 1], build a difference-of-Gaussians
pyramid, detect 26-neighbor extrema above a contrast threshold, describe
each keypoint with a 4x4-cell 8-bin orientation histogram over a 16x16
patch, then aggregate everything into a fixed 139-entry feature vector:

    [0..127]   mean keypoint descriptor
    [128]      keypoint density (count / pixels)
    [129]      intensity mean / r
    [130]      intensity stddev / r
    [131..138] 8-bin normalized intensity histogram
"""

import concurrent.futures
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .cube import HyperCube, SpectralBand
from .errors import FormatError, InvalidSigma, IoFailure, OctaveTooSmall, SpecInvalid

FEATURE_DIM = 139
DESCRIPTOR_DIM = 128
_CLIP = 0.2


@dataclass(frozen=True)
class ScaleSpaceConfig:
    octaves: int = 3
    scales_per_octave: int = 3
    base_sigma: float = 1.6
    contrast_threshold: float = 0.03

    def validate(self):
        if self.octaves < 1:
            raise SpecInvalid("octaves must be >= 1")
        if self.scales_per_octave < 1:
            raise SpecInvalid("scales_per_octave must be >= 1")
        if not self.base_sigma > 0:
            raise SpecInvalid("base_sigma must be > 0")
        if self.contrast_threshold < 0:
            raise SpecInvalid("contrast_threshold must be >= 0")

    @property
    def scale_factor(self):
        return 2.0 ** (1.0 / self.scales_per_octave)


@dataclass
class ScaleSpace:
    config: ScaleSpaceConfig
    levels: list  # per octave: scales_per_octave + 2 blurred images
    dogs: list    # per octave: scales_per_octave + 1 difference images


@dataclass
class Keypoint:
    x: int          # band-frame coordinates
    y: int
    octave: int
    level: int      # DoG level index within the octave
    sigma: float
    dog_value: float


@dataclass
class GradientField:
    magnitude: np.ndarray
    orientation: np.ndarray  # atan2(dy, dx), in (-pi, pi]


@dataclass
class Descriptor:
    values: np.ndarray  # (128,), L2 norm 1 or all-zero


@dataclass
class BandFeatureVector:
    values: np.ndarray  # (139,)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian, radius ceil(3*sigma), renormalized to sum 1."""
    if not sigma > 0:
        raise InvalidSigma(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    vals = [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)]
    total = sum(vals)
    return np.array([v / total for v in vals], dtype=np.float64)


def convolve(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur (horizontal then vertical), clamp-to-edge."""
    k = gaussian_kernel(sigma)
    img = np.ascontiguousarray(image, dtype=np.float64)
    return kernels.convolve_axis(kernels.convolve_axis(img, k, 1), k, 0)


def _as_image(band) -> np.ndarray:
    pixels = band.pixels if isinstance(band, SpectralBand) else band
    return np.ascontiguousarray(pixels, dtype=np.float64)


def build_scale_space(band, cfg: ScaleSpaceConfig) -> ScaleSpace:
    """Pyramid of blurred levels and their adjacent differences.

    Octave 0 starts from the full-resolution image; each next octave keeps
    every second pixel of the previous octave's level-s image, which then
    serves as that octave's level 0.  Within an octave, level i+1 is the
    incremental blur of level i up to the nominal scale sigma0 * k^i.
    """
    cfg.validate()
    img = _as_image(band)
    s = cfg.scales_per_octave
    k = cfg.scale_factor
    deltas = [cfg.base_sigma * math.sqrt(k ** (2 * i) - k ** (2 * (i - 1)))
              for i in range(1, s + 2)]
    levels = []
    dogs = []
    for octave in range(cfg.octaves):
        if img.shape[0] < 16 or img.shape[1] < 16:
            raise OctaveTooSmall(
                f"octave {octave} is {img.shape[0]}x{img.shape[1]}, need >= 16x16")
        base = convolve(img, cfg.base_sigma) if octave == 0 else img
        oct_levels = [base]
        for delta in deltas:
            oct_levels.append(convolve(oct_levels[-1], delta))
        levels.append(oct_levels)
        dogs.append([oct_levels[i + 1] - oct_levels[i] for i in range(s + 1)])
        img = oct_levels[s][::2, ::2]
    return ScaleSpace(cfg, levels, dogs)


def detect_extrema(ss: ScaleSpace, cfg: ScaleSpaceConfig = None) -> list:
    """Strict 26-neighbor extrema of the DoG stack above the contrast cutoff.

    Coordinates are mapped back to the octave-0 frame (* 2^octave); the
    result is sorted by (octave, level, y, x).
    """
    cfg = cfg or ss.config
    keypoints = []
    k = cfg.scale_factor
    for octave, dog_stack in enumerate(ss.dogs):
        step = 2 ** octave
        for level in range(1, len(dog_stack) - 1):
            ys, xs = kernels.local_extrema(
                np.ascontiguousarray(dog_stack[level - 1]),
                np.ascontiguousarray(dog_stack[level]),
                np.ascontiguousarray(dog_stack[level + 1]),
                cfg.contrast_threshold)
            sigma = cfg.base_sigma * (k ** level) * step
            for y, x in zip(ys.tolist(), xs.tolist()):
                keypoints.append(Keypoint(x * step, y * step, octave, level,
                                          sigma, float(dog_stack[level][y, x])))
    keypoints.sort(key=lambda p: (p.octave, p.level, p.y, p.x))
    return keypoints


def gradients(level: np.ndarray) -> GradientField:
    """Central differences with clamp-to-edge borders."""
    padded = np.pad(level, 1, mode="edge")
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return GradientField(np.sqrt(dx * dx + dy * dy), np.arctan2(dy, dx))


def _patch_weights() -> np.ndarray:
    offs = range(-8, 8)
    wt = np.empty((16, 16), dtype=np.float64)
    for i, dy in enumerate(offs):
        for j, dx in enumerate(offs):
            wt[i, j] = math.exp(-(dy * dy + dx * dx) / (2.0 * 8.0 * 8.0))
    return wt


PATCH_WEIGHTS = _patch_weights()


def build_descriptor(kp: Keypoint, field: GradientField) -> Descriptor:
    """Gaussian-weighted orientation histogram around the keypoint.

    L2-normalized, clipped at 0.2, renormalized; all-zero when the patch
    carries no gradient energy.
    """
    cy = kp.y >> kp.octave
    cx = kp.x >> kp.octave
    raw = kernels.descriptor_histogram(
        np.ascontiguousarray(field.magnitude),
        np.ascontiguousarray(field.orientation),
        PATCH_WEIGHTS, cy, cx)
    norm = math.sqrt(float(np.sum(raw * raw)))
    if norm == 0.0:
        return Descriptor(np.zeros(DESCRIPTOR_DIM))
    clipped = np.minimum(raw / norm, _CLIP)
    return Descriptor(clipped / math.sqrt(float(np.sum(clipped * clipped))))


def extract_band_features(band: SpectralBand, cfg: ScaleSpaceConfig,
                          max_value: float) -> BandFeatureVector:
    """Full per-band pipeline: normalize, pyramid, extrema, descriptors, stats."""
    norm = band.pixels / max_value
    ss = build_scale_space(norm, cfg)
    kps = detect_extrema(ss, cfg)

    out = np.zeros(FEATURE_DIM, dtype=np.float64)
    if kps:
        fields = {}
        descs = []
        for kp in kps:
            key = (kp.octave, kp.level)
            if key not in fields:
                fields[key] = gradients(ss.levels[kp.octave][kp.level])
            descs.append(build_descriptor(kp, fields[key]).values)
        out[:DESCRIPTOR_DIM] = np.mean(descs, axis=0)
        out[128] = len(kps) / norm.size
    out[129] = norm.mean()
    out[130] = norm.std()
    idx = np.minimum(np.floor(8.0 * norm).astype(np.int64), 7)
    out[131:139] = np.bincount(idx.ravel(), minlength=8) / norm.size
    return BandFeatureVector(out)


def extract_cube_features(cube: HyperCube, cfg: ScaleSpaceConfig,
                          threads: int = 1) -> list:
    r = cube.header.max_value
    if threads == 1 or len(cube.bands) == 1:
        return [extract_band_features(b, cfg, r) for b in cube.bands]
    workers = threads if threads > 0 else None
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: extract_band_features(b, cfg, r), cube.bands))


def feature_matrix(features: list) -> np.ndarray:
    return np.stack([f.values for f in features])


def save_features(features: list, path):
    """.fvec text format, floats at 9 significant digits."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"FVEC1 dim={FEATURE_DIM} bands={len(features)}\n")
            for i, f in enumerate(features):
                row = " ".join(f"{v:.9g}" for v in f.values)
                fh.write(f"{i} {row}\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_features(path) -> list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines:
        raise FormatError(f"{path}: empty feature file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "FVEC1" or head[1] != f"dim={FEATURE_DIM}":
        raise FormatError(f"{path}: bad header {lines[0]!r}")
    try:
        n = int(head[2].removeprefix("bands="))
    except ValueError as exc:
        raise FormatError(f"{path}: bad header {lines[0]!r}") from exc
    if len(lines) - 1 != n:
        raise FormatError(f"{path}: header says {n} bands, found {len(lines) - 1} rows")
    features = []
    for expect, ln in enumerate(lines[1:]):
        parts = ln.split()
        try:
            if len(parts) != FEATURE_DIM + 1 or int(parts[0]) != expect:
                raise FormatError(f"{path}: bad row for band {expect}")
            features.append(BandFeatureVector(np.array([float(p) for p in parts[1:]])))
        except ValueError as exc:
            raise FormatError(f"{path}: bad row for band {expect}") from exc
    return features
