"""Distance-matching perceptron.

A band's feature vector is projected through two linear stages (input to
hidden, hidden to embedding, with optional hidden recurrence across the
band sequence) and compared against gallery reference embeddings by
Euclidean distance.  The match score is sigmoid(theta - distance) with a
learnable bias theta, so a zero-distance pair scores above 0.5 and far
pairs approach 0.  Training runs full-batch gradient descent on the mean
squared match error over all (train band, reference) pairs.

All linear algebra goes through np.einsum with optimize=False: summation
order is then fixed and independent of BLAS threading, which keeps
training and classification byte-reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cube import LabelFile
from .errors import (
    DimMismatch,
    EmptyGallery,
    FormatError,
    IoFailure,
    LengthMismatch,
    NaNLoss,
    NoTrainingPairs,
    SpecInvalid,
)
from .rng import PCG32
from .scalespace import FEATURE_DIM, BandFeatureVector


def _mv(matrix, vec):
    return np.einsum("ij,j->i", matrix, vec, optimize=False)


@dataclass
class PerceptronModel:
    tau0: np.ndarray       # (H, F)
    tau: np.ndarray        # (H, H), zero unless recurrent training moved it
    tau1: np.ndarray       # (E, H)
    theta: float
    recurrent: bool = False

    @property
    def dims(self):
        h, f = self.tau0.shape
        e = self.tau1.shape[0]
        return f, h, e

    def copy(self):
        return PerceptronModel(self.tau0.copy(), self.tau.copy(),
                               self.tau1.copy(), self.theta, self.recurrent)


def init_model(feature_dim: int = FEATURE_DIM, hidden: int = 32, embed: int = 16,
               seed: int = 0, recurrent: bool = False) -> PerceptronModel:
    """Uniform weights in [-1/sqrt(F), +1/sqrt(F)] from the package PRNG;
    recurrence starts at zero; theta starts at 1."""
    rng = PCG32(seed)
    bound = 1.0 / math.sqrt(feature_dim)
    tau0 = (rng.floats(hidden * feature_dim) * 2.0 - 1.0).reshape(hidden, feature_dim) * bound
    tau1 = (rng.floats(embed * hidden) * 2.0 - 1.0).reshape(embed, hidden) * bound
    tau = np.zeros((hidden, hidden))
    return PerceptronModel(tau0, tau, tau1, 1.0, recurrent)


@dataclass
class ForwardTrace:
    x: np.ndarray
    h: np.ndarray
    e: np.ndarray
    h_prev: np.ndarray


@dataclass
class Gallery:
    entries: list = field(default_factory=list)  # (label, feature vector)

    def validate(self):
        if not self.entries:
            raise EmptyGallery("gallery has no entries")
        dim = self.entries[0][1].shape
        for label, vec in self.entries:
            if vec.shape != dim or vec.ndim != 1:
                raise DimMismatch(f"gallery entry for label {label} has shape {vec.shape}")


@dataclass
class MatchResult:
    distance: float
    score: float
    matched: bool
    label: int


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 200
    tolerance: float = 1e-6
    seed: int = 0
    recurrent: bool = False

    def validate(self):
        if not self.learning_rate > 0:
            raise SpecInvalid(f"learning rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise SpecInvalid(f"max_epochs must be >= 1, got {self.max_epochs}")


def euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return math.sqrt(float(np.sum(d * d)))


def sigmoid(v: float) -> float:
    """1/(1+exp(-v)), stable on both tails."""
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def forward(model: PerceptronModel, x, h_prev=None) -> ForwardTrace:
    """h = tau0*x + tau*h_prev (linear, no activation); e = tau1*h."""
    x = np.asarray(x, dtype=np.float64)
    f, h_dim, _ = model.dims
    if x.shape != (f,):
        raise DimMismatch(f"input has shape {x.shape}, model expects ({f},)")
    if h_prev is None:
        h_prev = np.zeros(h_dim)
    elif h_prev.shape != (h_dim,):
        raise DimMismatch(f"hidden state has shape {h_prev.shape}, expected ({h_dim},)")
    h = _mv(model.tau0, x)
    if model.recurrent:
        h = h + _mv(model.tau, h_prev)
    e = _mv(model.tau1, h)
    return ForwardTrace(x, h, e, h_prev)


def match(model: PerceptronModel, e_band, e_ref, label: int = -1) -> MatchResult:
    l = euclidean(e_band, e_ref)
    score = sigmoid(model.theta - l)
    return MatchResult(l, score, score >= 0.5, label)


def embed_gallery(model: PerceptronModel, gallery: Gallery):
    """Reference embeddings, always with zero recurrence state."""
    gallery.validate()
    return [(label, forward(model, vec).e) for label, vec in gallery.entries]


def classify_band(model: PerceptronModel, f_e: BandFeatureVector, gallery: Gallery,
                  h_prev=None, _embedded=None):
    """Nearest gallery reference by embedding distance.

    Ties resolve to the lowest class label, then the lowest gallery index.
    Returns (label, MatchResult, hidden state).
    """
    refs = embed_gallery(model, gallery) if _embedded is None else _embedded
    trace = forward(model, f_e.values, h_prev)
    best = None
    for idx, (label, e_ref) in enumerate(refs):
        l = euclidean(trace.e, e_ref)
        key = (l, label, idx)
        if best is None or key < best[0]:
            best = (key, label)
    l, label = best[0][0], best[1]
    score = sigmoid(model.theta - l)
    return label, MatchResult(l, score, score >= 0.5, label), trace.h


def classify_cube(model: PerceptronModel, features: list, gallery: Gallery):
    """Classify bands in ascending index order, threading the hidden state.

    Returns (labels, results) aligned with `features`.
    """
    if not features:
        raise NoTrainingPairs("no feature vectors to classify")
    refs = embed_gallery(model, gallery)
    labels = []
    results = []
    h_prev = None
    for f_e in features:
        label, res, h = classify_band(model, f_e, gallery, h_prev, _embedded=refs)
        labels.append(label)
        results.append(res)
        h_prev = h if model.recurrent else None
    return labels, results


def loss(score: float, target: float) -> float:
    return (target - score) ** 2


def build_gallery(features: list, labels: LabelFile, per_band: bool = False) -> Gallery:
    """References from the train split: per-class feature means, or every
    train band with --gallery-per-band."""
    train = sorted(labels.subset("train"), key=lambda e: e.band)
    if not train:
        raise NoTrainingPairs("label file has no train entries")
    if per_band:
        entries = [(e.label, features[e.band].values.copy()) for e in train]
    else:
        entries = []
        for label in sorted({e.label for e in train}):
            members = [features[e.band].values for e in train if e.label == label]
            entries.append((label, np.mean(members, axis=0)))
    return Gallery(entries)


def _sigmoid_vec(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _batch_forward(model, X, R):
    if model.recurrent:
        T = X.shape[0]
        h_dim = model.tau0.shape[0]
        H_x = np.zeros((T, h_dim))
        h = np.zeros(h_dim)
        for t in range(T):
            h = _mv(model.tau0, X[t]) + _mv(model.tau, h)
            H_x[t] = h
    else:
        H_x = np.einsum("hf,tf->th", model.tau0, X, optimize=False)
    E_x = np.einsum("eh,th->te", model.tau1, H_x, optimize=False)
    H_r = np.einsum("hf,gf->gh", model.tau0, R, optimize=False)
    E_r = np.einsum("eh,gh->ge", model.tau1, H_r, optimize=False)
    diff = E_x[:, None, :] - E_r[None, :, :]
    dist = np.sqrt(np.einsum("tge,tge->tg", diff, diff, optimize=False))
    score = _sigmoid_vec(model.theta - dist)
    return H_x, E_x, H_r, E_r, diff, dist, score


def batch_loss(model, X, R, Y) -> float:
    score = _batch_forward(model, X, R)[6]
    return float(np.mean((Y - score) ** 2))


def loss_and_gradients(model, X, R, Y):
    """Mean squared match error over all (band, reference) pairs and its
    gradients; recurrence gradients flow by backpropagation through time."""
    H_x, E_x, H_r, E_r, diff, dist, score = _batch_forward(model, X, R)
    pairs = Y.size
    err = Y - score
    total = float(np.mean(err * err))

    ds = -2.0 * err / pairs            # dL/dscore
    sg = score * (1.0 - score)         # dscore/d(theta - l)
    g_theta = float(np.sum(ds * sg))
    dl = -ds * sg                      # dL/ddist
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(dist[:, :, None] > 0.0, diff / dist[:, :, None], 0.0)
    d_diff = dl[:, :, None] * unit
    dE_x = d_diff.sum(axis=1)
    dE_r = -d_diff.sum(axis=0)

    g_tau1 = (np.einsum("te,th->eh", dE_x, H_x, optimize=False)
              + np.einsum("ge,gh->eh", dE_r, H_r, optimize=False))
    dH_x = np.einsum("eh,te->th", model.tau1, dE_x, optimize=False)
    dH_r = np.einsum("eh,ge->gh", model.tau1, dE_r, optimize=False)
    g_tau0 = np.einsum("gh,gf->hf", dH_r, R, optimize=False)
    g_tau = np.zeros_like(model.tau)
    if model.recurrent:
        T = X.shape[0]
        h_dim = model.tau0.shape[0]
        carry = np.zeros(h_dim)
        for t in range(T - 1, -1, -1):
            g = dH_x[t] + carry
            g_tau0 = g_tau0 + np.einsum("h,f->hf", g, X[t], optimize=False)
            h_prev = H_x[t - 1] if t > 0 else np.zeros(h_dim)
            g_tau = g_tau + np.einsum("h,f->hf", g, h_prev, optimize=False)
            carry = np.einsum("hk,h->k", model.tau, g, optimize=False)
    else:
        g_tau0 = g_tau0 + np.einsum("th,tf->hf", dH_x, X, optimize=False)
    return total, {"tau0": g_tau0, "tau": g_tau, "tau1": g_tau1, "theta": g_theta}


def training_pairs(features: list, labels: LabelFile, gallery: Gallery):
    """(X, R, Y): train-band features, reference vectors, and the 0/1
    agreement targets for every (band, reference) pair."""
    train = sorted(labels.subset("train"), key=lambda e: e.band)
    if not train:
        raise NoTrainingPairs("label file has no train entries")
    X = np.stack([features[e.band].values for e in train])
    R = np.stack([vec for _, vec in gallery.entries])
    ref_labels = np.array([label for label, _ in gallery.entries])
    band_labels = np.array([e.label for e in train])
    Y = (band_labels[:, None] == ref_labels[None, :]).astype(np.float64)
    if not Y.any() or Y.all():
        raise NoTrainingPairs("need at least one positive and one negative pair")
    return X, R, Y


def train(model: PerceptronModel, features: list, labels: LabelFile,
          gallery: Gallery, cfg: TrainConfig):
    """Full-batch descent; stops at max_epochs or when the epoch-to-epoch
    improvement drops below the tolerance.  Returns (model, loss history)."""
    gallery.validate()
    X, R, Y = training_pairs(features, labels, gallery)
    model = model.copy()
    history = []
    for epoch in range(cfg.max_epochs):
        total, grads = loss_and_gradients(model, X, R, Y)
        if math.isnan(total):
            raise NaNLoss(epoch)
        history.append(total)
        if epoch > 0 and history[-2] - history[-1] < cfg.tolerance:
            break
        model.tau0 = model.tau0 - cfg.learning_rate * grads["tau0"]
        model.tau1 = model.tau1 - cfg.learning_rate * grads["tau1"]
        model.theta = model.theta - cfg.learning_rate * grads["theta"]
        if model.recurrent:
            model.tau = model.tau - cfg.learning_rate * grads["tau"]
    return model, history


def save_model(model: PerceptronModel, path):
    f, h, e = model.dims
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"MLP1 F={f} H={h} E={e} recurrent={int(model.recurrent)} "
                     f"theta={model.theta:.17g}\n")
            for name, mat in (("tau0", model.tau0), ("tau", model.tau),
                              ("tau1", model.tau1)):
                fh.write(f"{name}:\n")
                for row in mat:
                    fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _parse_kv(token, key, cast):
    if not token.startswith(key + "="):
        raise FormatError(f"expected {key}=<value>, got {token!r}")
    try:
        return cast(token[len(key) + 1:])
    except ValueError as exc:
        raise FormatError(f"bad value in {token!r}") from exc


def load_model(path) -> PerceptronModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    head = lines[0].split() if lines else []
    if len(head) != 6 or head[0] != "MLP1":
        raise FormatError(f"{path}: bad magic line {lines[0]!r}")
    f = _parse_kv(head[1], "F", int)
    h = _parse_kv(head[2], "H", int)
    e = _parse_kv(head[3], "E", int)
    recurrent = bool(_parse_kv(head[4], "recurrent", int))
    theta = _parse_kv(head[5], "theta", float)
    shapes = {"tau0": (h, f), "tau": (h, h), "tau1": (e, h)}
    mats = {}
    pos = 1
    for name, (rows, cols) in shapes.items():
        if pos >= len(lines) or lines[pos] != f"{name}:":
            raise FormatError(f"{path}: expected block {name}: at line {pos + 1}")
        pos += 1
        block = []
        for i in range(rows):
            if pos >= len(lines):
                raise FormatError(f"{path}: {name} row {i}: missing")
            parts = lines[pos].split()
            if len(parts) != cols:
                raise FormatError(
                    f"{path}: {name} row {i}: expected {cols} values, got {len(parts)}")
            try:
                block.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}: {name} row {i}: bad float") from exc
            pos += 1
        mats[name] = np.array(block)
    return PerceptronModel(mats["tau0"], mats["tau"], mats["tau1"], theta, recurrent)


def save_gallery(gallery: Gallery, path):
    gallery.validate()
    if gallery.entries[0][1].shape != (FEATURE_DIM,):
        raise DimMismatch(
            f"gallery file format requires dim {FEATURE_DIM}, "
            f"got {gallery.entries[0][1].shape}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"GAL1 dim={FEATURE_DIM}\n")
            for label, vec in gallery.entries:
                fh.write(f"{label} " + " ".join(f"{v:.17g}" for v in vec) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_gallery(path) -> Gallery:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines or lines[0] != f"GAL1 dim={FEATURE_DIM}":
        raise FormatError(f"{path}: bad header")
    entries = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != FEATURE_DIM + 1:
            raise FormatError(f"{path}: bad gallery row")
        try:
            entries.append((int(parts[0]), np.array([float(p) for p in parts[1:]])))
        except ValueError as exc:
            raise FormatError(f"{path}: bad gallery row") from exc
    gallery = Gallery(entries)
    gallery.validate()
    return gallery
