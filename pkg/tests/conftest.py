import numpy as np
import pytest

from hsic.cli import main as cli_main
from hsic.cube import SynthSpec, clean_counterpart, generate_synthetic
from hsic.frost import FrostConfig, filter_cube

DEFAULT_SPEC = SynthSpec(classes=4, bands_per_class=10, width=64, height=64,
                         noise_amplitude=0.3, seed=42)


@pytest.fixture(scope="session")
def synth42():
    """(noisy cube, labels, clean cube) for the standard seed-42 fixture."""
    noisy, labels = generate_synthetic(DEFAULT_SPEC)
    return noisy, labels, clean_counterpart(DEFAULT_SPEC)


@pytest.fixture(scope="session")
def filtered42(synth42):
    noisy, _, _ = synth42
    return filter_cube(noisy, FrostConfig(window=5, damping=2.0))


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    """One golden pipeline run (seeds 42/7, per-band gallery)."""
    d = tmp_path_factory.mktemp("pipe")
    rc = cli_main(["pipeline", "--out-dir", str(d), "--gallery-per-band"])
    assert rc == 0
    return d


def rand_band(shape, lo=0.0, hi=255.0, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, shape)
