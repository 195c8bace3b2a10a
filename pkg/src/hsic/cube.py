"""Hyperspectral cube data model, file formats, and synthetic data.

On-disk layout is a text header (``.hsch``) plus raw band-sequential
little-endian samples (``.bsq``).  Labels are a small CSV.  The synthetic
generator produces per-class textured bands with multiplicative speckle
noise, driven entirely by the package PCG32 stream so equal seeds give
identical bytes.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadMagic,
    HeaderFieldMissing,
    IoFailure,
    SizeMismatch,
    SpecInvalid,
    ValueOutOfRange,
)
from .rng import PCG32

MAGIC = "HSC1"
_DTYPES = {"u8": np.dtype("<u1"), "u16": np.dtype("<u2"), "f32": np.dtype("<f4")}
_DTYPE_MAX = {"u8": 255.0, "u16": 65535.0}

# Stream split between texture parameters and speckle draws, so the clean
# and noisy variants of one seed share identical textures.
_SPECKLE_STREAM_XOR = 0x5DEECE66D


@dataclass
class CubeHeader:
    width: int
    height: int
    bands: int
    dtype: str
    max_value: float

    def validate(self):
        if self.width < 1 or self.height < 1 or self.bands < 1:
            raise HeaderFieldMissing(
                f"width/height/bands must be >= 1, got "
                f"{self.width}x{self.height}x{self.bands}")
        if self.dtype not in _DTYPES:
            raise HeaderFieldMissing(f"dtype: unknown value {self.dtype!r}")
        if not (self.max_value > 0):
            raise HeaderFieldMissing(f"max: must be > 0, got {self.max_value}")
        fixed = _DTYPE_MAX.get(self.dtype)
        if fixed is not None and self.max_value != fixed:
            raise HeaderFieldMissing(
                f"max: must be {fixed:.0f} for dtype {self.dtype}, got {self.max_value}")


@dataclass(eq=False)
class SpectralBand:
    index: int
    pixels: np.ndarray  # (height, width) float64

    def __eq__(self, other):
        if not isinstance(other, SpectralBand):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.pixels, other.pixels)


@dataclass(eq=False)
class HyperCube:
    header: CubeHeader
    bands: list

    def __eq__(self, other):
        if not isinstance(other, HyperCube):
            return NotImplemented
        return self.header == other.header and self.bands == other.bands

    def validate(self):
        self.header.validate()
        if len(self.bands) != self.header.bands:
            raise SizeMismatch(
                f"cube has {len(self.bands)} bands, header says {self.header.bands}")
        for i, band in enumerate(self.bands):
            if band.index != i:
                raise SizeMismatch(f"band {i} carries index {band.index}")
            if band.pixels.shape != (self.header.height, self.header.width):
                raise SizeMismatch(
                    f"band {i} is {band.pixels.shape}, header says "
                    f"({self.header.height}, {self.header.width})")


@dataclass(frozen=True)
class SynthSpec:
    classes: int
    bands_per_class: int
    width: int
    height: int
    noise_amplitude: float
    seed: int
    # (frequency, scale) per class; None selects the built-in table
    texture_params: tuple = None

    def validate(self):
        if not 2 <= self.classes <= 8:
            raise SpecInvalid(f"classes must be in 2..8, got {self.classes}")
        if self.bands_per_class < 1:
            raise SpecInvalid("bands_per_class must be >= 1")
        if self.width < 8 or self.height < 8:
            raise SpecInvalid("width and height must be >= 8")
        if not 0.0 <= self.noise_amplitude < 1.0:
            raise SpecInvalid(
                f"noise_amplitude must be in [0, 1), got {self.noise_amplitude}")
        if self.texture_params is not None and len(self.texture_params) != self.classes:
            raise SpecInvalid("texture_params must have one entry per class")


@dataclass
class LabelEntry:
    band: int
    label: int
    role: str  # train | test


@dataclass
class LabelFile:
    entries: list = field(default_factory=list)

    def validate(self, num_classes=None):
        seen = set()
        for e in self.entries:
            if e.band in seen:
                raise SpecInvalid(f"duplicate band index {e.band} in labels")
            seen.add(e.band)
            if e.label < 0 or (num_classes is not None and e.label >= num_classes):
                raise SpecInvalid(f"band {e.band}: label {e.label} out of range")
            if e.role not in ("train", "test"):
                raise SpecInvalid(f"band {e.band}: bad role {e.role!r}")

    def subset(self, role):
        return [e for e in self.entries if e.role == role]

    def by_band(self):
        return {e.band: e for e in self.entries}


def _fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def save_cube(cube: HyperCube, header_path, data_path):
    cube.validate()
    hdr = cube.header
    np_dtype = _DTYPES[hdr.dtype]
    flat = np.stack([b.pixels for b in cube.bands])
    bad = ~np.isfinite(flat) | (flat < 0) | (flat > hdr.max_value)
    if bad.any():
        off = int(np.argmax(bad.ravel()))
        raise ValueOutOfRange(
            f"value {flat.ravel()[off]} at flat offset {off} outside [0, {hdr.max_value}]")
    if hdr.dtype in ("u8", "u16"):
        nonint = flat != np.floor(flat)
        if nonint.any():
            off = int(np.argmax(nonint.ravel()))
            raise ValueOutOfRange(
                f"non-integral value {flat.ravel()[off]} at flat offset {off} "
                f"for dtype {hdr.dtype}")
    try:
        with open(header_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{MAGIC}\n")
            fh.write(f"width={hdr.width}\n")
            fh.write(f"height={hdr.height}\n")
            fh.write(f"bands={hdr.bands}\n")
            fh.write(f"dtype={hdr.dtype}\n")
            fh.write(f"max={_fmt_number(hdr.max_value)}\n")
        with open(data_path, "wb") as fh:
            fh.write(flat.astype(np_dtype).tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _parse_header(header_path) -> CubeHeader:
    try:
        with open(header_path, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines or lines[0] != MAGIC:
        raise BadMagic(f"{header_path}: expected first line {MAGIC!r}")
    fields = ["width", "height", "bands", "dtype", "max"]
    values = {}
    for i, name in enumerate(fields, start=1):
        if i >= len(lines) or not lines[i].startswith(name + "="):
            raise HeaderFieldMissing(f"{header_path}: line {i + 1} must be {name}=<value>")
        raw = lines[i][len(name) + 1:]
        if name == "dtype":
            values[name] = raw
        else:
            try:
                values[name] = int(raw) if name != "max" else float(raw)
            except ValueError as exc:
                raise HeaderFieldMissing(f"{header_path}: {name}: bad value {raw!r}") from exc
    hdr = CubeHeader(values["width"], values["height"], values["bands"],
                     values["dtype"], values["max"])
    hdr.validate()
    return hdr


def load_cube(header_path, data_path) -> HyperCube:
    hdr = _parse_header(header_path)
    np_dtype = _DTYPES[hdr.dtype]
    expected = hdr.width * hdr.height * hdr.bands * np_dtype.itemsize
    try:
        with open(data_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(raw) != expected:
        raise SizeMismatch(
            f"{data_path}: expected {expected} bytes "
            f"({hdr.width}x{hdr.height}x{hdr.bands}x{np_dtype.itemsize}), got {len(raw)}")
    data = np.frombuffer(raw, dtype=np_dtype).astype(np.float64)
    data = data.reshape(hdr.bands, hdr.height, hdr.width)
    bad = ~np.isfinite(data) | (data < 0) | (data > hdr.max_value)
    if bad.any():
        off = int(np.argmax(bad.ravel()))
        raise ValueOutOfRange(
            f"{data_path}: value {data.ravel()[off]} at flat offset {off} "
            f"outside [0, {hdr.max_value}]")
    bands = [SpectralBand(i, data[i].copy()) for i in range(hdr.bands)]
    return HyperCube(hdr, bands)


def add_speckle(band: SpectralBand, rho: float, seed: int = 0, *,
                max_value: float = 255.0, rng: PCG32 = None) -> SpectralBand:
    """Multiplicative uniform speckle: out = clamp(in*(1 + rho*(2u-1)), 0, r).

    Draws run row-major; pass a shared `rng` to speckle several bands from
    one band-major stream.
    """
    if not 0.0 <= rho < 1.0:
        raise SpecInvalid(f"rho must be in [0, 1), got {rho}")
    if rng is None:
        rng = PCG32(seed)
    h, w = band.pixels.shape
    u = rng.floats(h * w).reshape(h, w)
    factor = 1.0 + rho * (2.0 * u - 1.0)
    out = np.clip(band.pixels * factor, 0.0, max_value)
    return SpectralBand(band.index, out)


# Per-class (frequency, scale) defaults; families cycle 0..3 for K > 4.
# Scale is the wobble strength for gratings, the blob sigma for family 3.
_DEFAULT_TEXTURE = (
    (2.5, 1.0),    # horizontal sinusoid
    (2.5, 1.0),    # vertical sinusoid
    (2.2, 0.6),    # checkerboard
    (26.0, 1.9),   # gaussian blobs
    (5.0, 1.0),
    (5.0, 1.0),
    (4.0, 0.6),
    (24.0, 2.0),
)

# Per-band jitter budgets (amp_lo, amp_hi, dc, ramp_lo, ramp_hi), one per
# texture family.  Grating bands stay tight in brightness so those classes
# cluster cleanly; checkerboard/blob bands wander in brightness and slope.
_JIT_GRATING = (0.28, 0.34, 0.04, 0.02, 0.08)
_JIT_CHECKER = (0.36, 0.42, 0.14, 0.04, 0.10)
_JIT_BLOB = (0.26, 0.32, 0.18, 0.04, 0.10)
_WOBBLE_LO = 0.15
_WOBBLE_HI = 2.2
# Wobble grows as wob_pos**_WOBBLE_POW: most bands stay moderate, the top
# of each class smears toward _WOBBLE_HI.
_WOBBLE_POW = 1.5
# Per-band grating tilt, uniform in +-_ROT_JIT radians around the family
# axis: bands wander along the horizontal/vertical orientation axis while
# the class means stay put.
_ROT_JIT = 0.3840

# Anisotropy sweep: within a class, the checkerboard horizontal/vertical
# frequency balance and the blob elongation sweep this log range from the
# class's first band to its last, so the full range is always exercised
# no matter the seed.
_ANISO = 3.0
_BLOB_ELONG = 2.6


def _texture_pattern(fam: int, freq: float, scale: float, w: int, h: int,
                     sweep: float, wob_pos: float, rng: PCG32) -> np.ndarray:
    """Pattern in [-1, 1] for one band.

    `sweep` in [-1, 1] and `wob_pos` in [0, 1] are the band's
    deterministic positions within its class; they drive the tilt,
    anisotropy, and wobble strength so every class exercises its full
    texture range whatever the seed.  The PCG stream supplies phases and
    blob positions.
    """
    x = np.arange(w, dtype=np.float64)[None, :]
    y = np.arange(h, dtype=np.float64)[:, None]
    tau = 2.0 * math.pi
    if fam in (0, 1):
        phase = rng.next_float() * tau
        wobble = scale * (_WOBBLE_LO
                          + (wob_pos ** _WOBBLE_POW) * (_WOBBLE_HI - _WOBBLE_LO))
        tilt = sweep * _ROT_JIT
        if fam == 0:
            axis = (x * math.cos(tilt) + y * math.sin(tilt)) / w
            ortho = y / h
        else:
            axis = (y * math.cos(tilt) - x * math.sin(tilt)) / h
            ortho = x / w
        return np.sin(tau * freq * axis + phase + wobble * np.sin(tau * 2.0 * ortho))
    if fam == 2:
        p1 = rng.next_float() * tau
        p2 = rng.next_float() * tau
        ratio = _ANISO ** sweep
        return (np.sin(tau * freq * ratio * x / w + p1)
                * np.sin(tau * freq / ratio * y / h + p2))
    elong = _BLOB_ELONG ** sweep
    sx, sy = scale * elong, scale / elong
    pattern = np.zeros((h, w))
    for i in range(int(freq)):
        bx = rng.next_float() * w
        by = rng.next_float() * h
        sign = 2.0 if i % 2 == 0 else -2.0
        d2 = (x - bx) ** 2 / (2.0 * sx * sx) + (y - by) ** 2 / (2.0 * sy * sy)
        pattern = pattern + sign * np.exp(-d2)
    return np.clip(pattern, -1.0, 1.0)


def generate_synthetic(spec: SynthSpec):
    """Build a textured cube plus its label file.

    Class k bands carry texture family k%4 at that class's frequency with
    per-band phase, contrast, and brightness jitter.  With noise_amplitude
    > 0 the returned cube is speckled (dtype f32); at 0 it is the clean u8
    cube.  The texture stream does not depend on noise_amplitude, so the
    rho=0 run of the same seed is exactly the clean counterpart.
    """
    spec.validate()
    params = spec.texture_params
    if params is None:
        params = tuple(_DEFAULT_TEXTURE[k] for k in range(spec.classes))
    r = 255.0
    n_bands = spec.classes * spec.bands_per_class
    tex_rng = PCG32(spec.seed)
    noisy = spec.noise_amplitude > 0.0
    speckle_rng = PCG32(spec.seed ^ _SPECKLE_STREAM_XOR) if noisy else None

    xg = np.arange(spec.width, dtype=np.float64)[None, :] / max(spec.width - 1, 1) - 0.5
    yg = np.arange(spec.height, dtype=np.float64)[:, None] / max(spec.height - 1, 1) - 0.5

    bands = []
    entries = []
    for b in range(n_bands):
        k = b // spec.bands_per_class
        freq, scale = params[k]
        fam = k % 4
        i = b % spec.bands_per_class
        if spec.bands_per_class > 1:
            sweep = 2.0 * i / (spec.bands_per_class - 1) - 1.0
            # decorrelated second position so wobble extremes do not
            # coincide with tilt extremes
            wob_pos = (i * 3 % spec.bands_per_class) / (spec.bands_per_class - 1)
        else:
            sweep, wob_pos = 0.0, 0.5
        pattern = _texture_pattern(fam, freq, scale, spec.width, spec.height,
                                   sweep, wob_pos, tex_rng)
        if fam in (0, 1):
            jit = _JIT_GRATING
        elif fam == 2:
            jit = _JIT_CHECKER
        else:
            jit = _JIT_BLOB
        amp_lo, amp_hi, dc_jit, ramp_lo, ramp_hi = jit
        amp = amp_lo + tex_rng.next_float() * (amp_hi - amp_lo)
        # blob brightness sweeps with the band position, other families
        # draw it from the stream
        if fam == 3:
            dc = sweep * dc_jit
            tex_rng.next_float()
        else:
            dc = (tex_rng.next_float() * 2.0 - 1.0) * dc_jit
        psi = tex_rng.next_float() * 2.0 * math.pi
        grade = ramp_lo + tex_rng.next_float() * (ramp_hi - ramp_lo)
        ramp = grade * (xg * math.cos(psi) + yg * math.sin(psi))
        values = r * (0.5 + dc + ramp + amp * pattern)
        clean = np.clip(np.floor(values + 0.5), 0.0, r)
        band = SpectralBand(b, clean)
        if noisy:
            band = add_speckle(band, spec.noise_amplitude, max_value=r, rng=speckle_rng)
            band.pixels = band.pixels.astype(np.float32).astype(np.float64)
        bands.append(band)
        entries.append(LabelEntry(b, k, "train" if b % 2 == 0 else "test"))

    dtype = "f32" if noisy else "u8"
    cube = HyperCube(CubeHeader(spec.width, spec.height, n_bands, dtype, r), bands)
    return cube, LabelFile(entries)


def clean_counterpart(spec: SynthSpec):
    """The noise-free cube of the same seed (identical textures)."""
    cube, _ = generate_synthetic(replace(spec, noise_amplitude=0.0))
    return cube


def save_labels(labels: LabelFile, path):
    labels.validate()
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("band,label,role\n")
            for e in labels.entries:
                fh.write(f"{e.band},{e.label},{e.role}\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_labels(path) -> LabelFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines or lines[0] != "band,label,role":
        raise BadMagic(f"{path}: expected header 'band,label,role'")
    entries = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise HeaderFieldMissing(f"{path}: bad row {ln!r}")
        try:
            entries.append(LabelEntry(int(parts[0]), int(parts[1]), parts[2]))
        except ValueError as exc:
            raise HeaderFieldMissing(f"{path}: bad row {ln!r}") from exc
    labels = LabelFile(entries)
    labels.validate()
    return labels


def class_palette(num_classes: int):
    """Class k -> HSV(360k/K, 1, 1) mapped to RGB by the hexcone formula."""
    colors = []
    for k in range(num_classes):
        h6 = (360.0 * k / num_classes / 60.0) % 6.0
        i = int(math.floor(h6))
        f = h6 - i
        q, t = 1.0 - f, f
        rgb = [(1.0, t, 0.0), (q, 1.0, 0.0), (0.0, 1.0, t),
               (0.0, q, 1.0), (t, 0.0, 1.0), (1.0, 0.0, q)][i]
        colors.append(tuple(int(math.floor(255.0 * c + 0.5)) for c in rgb))
    return colors


def export_band(band: SpectralBand, path, max_value: float):
    """Binary PGM (P5), linearly rescaled to maxval 255, rounded half-up."""
    h, w = band.pixels.shape
    scaled = np.clip(np.floor(255.0 * band.pixels / max_value + 0.5), 0.0, 255.0)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(scaled.astype(np.uint8).tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


CLASSMAP_CELL = 8


def export_classmap(labels, num_classes: int, path):
    """Binary PPM (P6) strip: one colored CLASSMAP_CELL^2 cell per band."""
    labels = list(labels)
    for lab in labels:
        if not 0 <= lab < num_classes:
            raise ValueOutOfRange(f"label {lab} outside 0..{num_classes - 1}")
    palette = class_palette(num_classes)
    cell = CLASSMAP_CELL
    w, h = cell * len(labels), cell
    row = np.zeros((h, w, 3), dtype=np.uint8)
    for i, lab in enumerate(labels):
        row[:, i * cell:(i + 1) * cell] = palette[lab]
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(row.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
