import itertools
import math

import numpy as np
import pytest

from hsic.cube import SpectralBand
from hsic.errors import FormatError, InvalidSigma, OctaveTooSmall
from hsic.scalespace import (
    FEATURE_DIM,
    Keypoint,
    ScaleSpaceConfig,
    build_descriptor,
    build_scale_space,
    convolve,
    detect_extrema,
    extract_band_features,
    extract_cube_features,
    feature_matrix,
    gaussian_kernel,
    gradients,
    load_features,
    save_features,
)

from conftest import rand_band


def brute_extrema(dogs, threshold):
    """Independent 26-neighbor scan over one octave's DoG stack."""
    found = []
    for lvl in range(1, len(dogs) - 1):
        h, w = dogs[lvl].shape
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                v = dogs[lvl][y, x]
                if abs(v) < threshold:
                    continue
                neighbors = []
                for dl in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            if dl == 0 and dy == 0 and dx == 0:
                                continue
                            neighbors.append(dogs[lvl + dl][y + dy, x + dx])
                if all(v > nb for nb in neighbors) or all(v < nb for nb in neighbors):
                    found.append((lvl, y, x))
    return found


def direct_conv2d(img, kernel1d):
    """Full 2-D convolution with the outer-product kernel, clamp-to-edge."""
    h, w = img.shape
    r = len(kernel1d) // 2
    k2 = np.outer(kernel1d, kernel1d)
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += k2[dy + r, dx + r] * img[yy, xx]
            out[y, x] = acc
    return out


def test_kernel_normalized_and_symmetric():
    for sigma in (0.5, 1.0, 1.6, 3.7):
        k = gaussian_kernel(sigma)
        assert len(k) == 2 * math.ceil(3 * sigma) + 1
        assert abs(k.sum() - 1.0) < 1e-12
        assert np.array_equal(k, k[::-1])


def test_kernel_center_neighbor_ratio():
    k = gaussian_kernel(1.0)
    c = len(k) // 2
    assert k[c] / k[c + 1] == pytest.approx(math.exp(0.5), rel=1e-12)


def test_kernel_invalid_sigma():
    with pytest.raises(InvalidSigma):
        gaussian_kernel(0.0)
    with pytest.raises(InvalidSigma):
        gaussian_kernel(-1.0)


def test_convolve_constant_unchanged():
    img = np.full((20, 20), 0.42)
    out = convolve(img, 1.6)
    assert np.max(np.abs(out - 0.42)) < 1e-9


def test_convolve_delta_gives_outer_product():
    img = np.zeros((33, 33))
    img[16, 16] = 1.0
    k = gaussian_kernel(2.0)
    out = convolve(img, 2.0)
    r = len(k) // 2
    patch = out[16 - r:16 + r + 1, 16 - r:16 + r + 1]
    assert np.max(np.abs(patch - np.outer(k, k))) < 1e-12


def test_separable_matches_direct_2d():
    img = rand_band((16, 16), 0.0, 1.0, seed=5)
    out = convolve(img, 1.6)
    expected = direct_conv2d(img, gaussian_kernel(1.6))
    assert np.max(np.abs(out - expected)) < 1e-9


def test_scale_space_counts_and_dims():
    img = rand_band((64, 64), 0.0, 1.0, seed=1)
    ss = build_scale_space(img, ScaleSpaceConfig(octaves=3, scales_per_octave=3))
    assert len(ss.levels) == 3
    for oct_levels, dim in zip(ss.levels, (64, 32, 16)):
        assert len(oct_levels) == 5
        assert all(lv.shape == (dim, dim) for lv in oct_levels)
    assert all(len(d) == 4 for d in ss.dogs)

    tiny = build_scale_space(img, ScaleSpaceConfig(octaves=1, scales_per_octave=1))
    assert len(tiny.levels[0]) == 3
    assert len(tiny.dogs[0]) == 2


def test_octave_too_small():
    img = rand_band((32, 32), 0.0, 1.0, seed=1)
    with pytest.raises(OctaveTooSmall):
        build_scale_space(img, ScaleSpaceConfig(octaves=3))
    build_scale_space(img, ScaleSpaceConfig(octaves=2))  # 32 -> 16 is fine


def test_dog_equals_level_difference_exactly():
    img = rand_band((32, 32), 0.0, 1.0, seed=2)
    ss = build_scale_space(img, ScaleSpaceConfig(octaves=2))
    for levels, dogs in zip(ss.levels, ss.dogs):
        for i, d in enumerate(dogs):
            assert np.array_equal(d, levels[i + 1] - levels[i])


def test_constant_band_no_keypoints():
    img = np.full((32, 32), 0.5)
    ss = build_scale_space(img, ScaleSpaceConfig(octaves=1))
    for dog in ss.dogs[0]:
        assert np.max(np.abs(dog)) < 1e-12
    assert detect_extrema(ss) == []


def test_extrema_match_brute_force_scan():
    cfg = ScaleSpaceConfig(octaves=1, scales_per_octave=3, contrast_threshold=0.005)
    for seed in range(5):
        img = rand_band((32, 32), 0.0, 1.0, seed=seed)
        ss = build_scale_space(img, cfg)
        kps = detect_extrema(ss, cfg)
        expected = brute_extrema(ss.dogs[0], cfg.contrast_threshold)
        got = [(kp.level, kp.y, kp.x) for kp in kps]
        assert sorted(got) == sorted(expected)


def test_extrema_threshold_infinity_empty():
    cfg = ScaleSpaceConfig(octaves=1, contrast_threshold=math.inf)
    img = rand_band((32, 32), 0.0, 1.0, seed=3)
    ss = build_scale_space(img, ScaleSpaceConfig(octaves=1))
    assert detect_extrema(ss, cfg) == []


def test_single_blob_yields_one_centered_keypoint():
    y, x = np.mgrid[0:32, 0:32]
    img = np.exp(-((x - 16.0) ** 2 + (y - 16.0) ** 2) / (2.0 * 2.0 ** 2))
    # base sigma 1.2 puts the blob's scale response inside the candidate levels
    cfg = ScaleSpaceConfig(octaves=1, base_sigma=1.2)
    ss = build_scale_space(img, cfg)
    kps = detect_extrema(ss, cfg)
    assert len(kps) == 1
    assert abs(kps[0].x - 16) <= 2 and abs(kps[0].y - 16) <= 2


def test_keypoint_coordinates_scale_with_octave():
    # coarse structure so octave 1 still sees contrast
    img = convolve(rand_band((64, 64), 0.0, 1.0, seed=4), 3.0)
    cfg = ScaleSpaceConfig(octaves=2, contrast_threshold=0.0005)
    kps = detect_extrema(build_scale_space(img, cfg), cfg)
    assert any(kp.octave == 1 for kp in kps)
    for kp in kps:
        if kp.octave == 1:
            assert kp.x % 2 == 0 and kp.y % 2 == 0


def test_extrema_sorted():
    img = rand_band((48, 48), 0.0, 1.0, seed=6)
    cfg = ScaleSpaceConfig(octaves=2, contrast_threshold=0.002)
    kps = detect_extrema(build_scale_space(img, cfg), cfg)
    keys = [(kp.octave, kp.level, kp.y, kp.x) for kp in kps]
    assert keys == sorted(keys)


def test_gradients_on_ramps():
    w = h = 16
    x_ramp = np.tile(np.arange(w, dtype=np.float64) / w, (h, 1))
    field = gradients(x_ramp)
    assert field.magnitude[5, 5] == pytest.approx(2.0 / w)
    assert field.orientation[5, 5] == 0.0
    y_ramp = x_ramp.T.copy()
    field = gradients(y_ramp)
    assert field.orientation[5, 5] == pytest.approx(math.pi / 2)


def test_gradients_constant_zero_orientation():
    field = gradients(np.full((8, 8), 3.0))
    assert np.all(field.magnitude == 0.0)
    assert np.all(field.orientation == 0.0)


def test_descriptor_zero_patch():
    field = gradients(np.full((32, 32), 1.0))
    kp = Keypoint(16, 16, 0, 1, 1.6, 0.1)
    desc = build_descriptor(kp, field)
    assert np.all(desc.values == 0.0)


def test_descriptor_unit_norm():
    img = rand_band((32, 32), 0.0, 1.0, seed=7)
    field = gradients(img)
    desc = build_descriptor(Keypoint(16, 16, 0, 1, 1.6, 0.1), field)
    assert np.linalg.norm(desc.values) == pytest.approx(1.0, abs=1e-6)
    assert np.all(desc.values >= 0.0)


def test_descriptor_equals_clip_then_renorm_of_raw_histogram():
    from hsic import kernels
    from hsic.scalespace import PATCH_WEIGHTS

    # an edge gives one dominant orientation, which must hit the 0.2 clip
    img = np.zeros((32, 32))
    img[:, 16:] = 1.0
    field = gradients(img)
    kp = Keypoint(16, 16, 0, 1, 1.6, 0.5)
    desc = build_descriptor(kp, field)
    raw = kernels.descriptor_histogram(
        np.ascontiguousarray(field.magnitude),
        np.ascontiguousarray(field.orientation), PATCH_WEIGHTS, 16, 16)
    unit = raw / np.linalg.norm(raw)
    assert unit.max() > 0.2  # clipping actually engages
    clipped = np.minimum(unit, 0.2)
    assert clipped.max() <= 0.2
    expected = clipped / np.linalg.norm(clipped)
    assert np.array_equal(desc.values, expected)


def test_identical_patches_identical_descriptors():
    tile = rand_band((16, 16), 0.0, 1.0, seed=8)
    img = np.tile(tile, (3, 3))
    field = gradients(img)
    # periodic image: the 16x16 surroundings of (24,16) and (24,32) match
    a = build_descriptor(Keypoint(16, 24, 0, 1, 1.6, 0.1), field)
    b = build_descriptor(Keypoint(32, 24, 0, 1, 1.6, 0.1), field)
    assert np.array_equal(a.values, b.values)


def test_translation_equivariance_interior():
    img = rand_band((48, 48), 0.0, 1.0, seed=9)
    shifted = np.pad(img, ((2, 0), (2, 0)), mode="edge")[:48, :48]
    cfg = ScaleSpaceConfig(octaves=1, contrast_threshold=0.01)
    kps = {(kp.y, kp.x) for kp in detect_extrema(build_scale_space(img, cfg), cfg)}
    kps_shifted = {(kp.y, kp.x)
                   for kp in detect_extrema(build_scale_space(shifted, cfg), cfg)}
    margin = 16
    interior = {(y, x) for (y, x) in kps
                if margin <= y < 48 - margin - 2 and margin <= x < 48 - margin - 2}
    for (y, x) in interior:
        assert (y + 2, x + 2) in kps_shifted


def test_extract_constant_band():
    band = SpectralBand(0, np.full((64, 64), 128.0))
    vec = extract_band_features(band, ScaleSpaceConfig(), 255.0).values
    assert vec.shape == (FEATURE_DIM,)
    assert np.all(vec[:129] == 0.0)
    assert vec[129] == pytest.approx(128.0 / 255.0)
    assert vec[130] == 0.0
    hist = vec[131:139]
    assert hist.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.count_nonzero(hist) == 1


def test_extract_deterministic(synth42):
    noisy, _, _ = synth42
    band = noisy.bands[0]
    a = extract_band_features(band, ScaleSpaceConfig(), 255.0)
    b = extract_band_features(band, ScaleSpaceConfig(), 255.0)
    assert np.array_equal(a.values, b.values)


def test_histogram_sums_to_one(filtered42):
    feats = extract_cube_features(filtered42, ScaleSpaceConfig(), threads=1)
    for f in feats:
        assert f.values[131:139].sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.isfinite(f.values))


def test_class_separation_gate(filtered42):
    # classes 0 vs 1 of the seed-42 fixture: distance between class means
    # must exceed the mean within-class pairwise distance
    X = feature_matrix(extract_cube_features(filtered42, ScaleSpaceConfig()))
    m0, m1 = X[0:10].mean(axis=0), X[10:20].mean(axis=0)
    within = []
    for lo in (0, 10):
        idx = list(range(lo, lo + 10))
        within += [np.linalg.norm(X[i] - X[j])
                   for i, j in itertools.combinations(idx, 2)]
    assert np.linalg.norm(m0 - m1) > np.mean(within)


def test_extract_thread_invariance(filtered42):
    a = extract_cube_features(filtered42, ScaleSpaceConfig(), threads=1)
    b = extract_cube_features(filtered42, ScaleSpaceConfig(), threads=8)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.values, fb.values)


def test_fvec_round_trip(tmp_path, filtered42):
    feats = extract_cube_features(filtered42, ScaleSpaceConfig())
    p1 = tmp_path / "a.fvec"
    p2 = tmp_path / "b.fvec"
    save_features(feats, p1)
    loaded = load_features(p1)
    save_features(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().split("\n")[0]
    assert header == f"FVEC1 dim=139 bands={len(feats)}"


def test_fvec_bad_header(tmp_path):
    path = tmp_path / "bad.fvec"
    path.write_text("FVEC2 dim=139 bands=0\n")
    with pytest.raises(FormatError):
        load_features(path)
    path.write_text("FVEC1 dim=139 bands=3\n")
    with pytest.raises(FormatError):
        load_features(path)
