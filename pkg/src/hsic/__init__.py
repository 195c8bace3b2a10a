"""hsic: hyperspectral band classification.

Frost-filter despeckling, Gaussian scale-space feature extraction, and a
distance-matching perceptron, with a synthetic cube generator and an
evaluation suite.  See the CLI (`hsic --help`) for the end-to-end
pipeline.
"""

__version__ = "0.1.0"

from .cube import (
    CubeHeader,
    HyperCube,
    LabelEntry,
    LabelFile,
    SpectralBand,
    SynthSpec,
    add_speckle,
    generate_synthetic,
    load_cube,
    save_cube,
)
from .frost import FrostConfig, filter_band, filter_cube
from .kernels import BACKEND
from .metrics import MetricsReport, accuracy, false_positive_rate, mse, psnr
from .perceptron import (
    Gallery,
    MatchResult,
    PerceptronModel,
    TrainConfig,
    classify_band,
    classify_cube,
    train,
)
from .scalespace import (
    BandFeatureVector,
    Keypoint,
    ScaleSpaceConfig,
    build_scale_space,
    detect_extrema,
    extract_band_features,
)

__all__ = [
    "BACKEND",
    "BandFeatureVector",
    "CubeHeader",
    "FrostConfig",
    "Gallery",
    "HyperCube",
    "Keypoint",
    "LabelEntry",
    "LabelFile",
    "MatchResult",
    "MetricsReport",
    "PerceptronModel",
    "ScaleSpaceConfig",
    "SpectralBand",
    "SynthSpec",
    "TrainConfig",
    "accuracy",
    "add_speckle",
    "build_scale_space",
    "classify_band",
    "classify_cube",
    "detect_extrema",
    "extract_band_features",
    "false_positive_rate",
    "filter_band",
    "filter_cube",
    "generate_synthetic",
    "load_cube",
    "mse",
    "psnr",
    "save_cube",
    "train",
    "__version__",
]
