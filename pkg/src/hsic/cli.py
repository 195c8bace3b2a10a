"""Command-line front end.

Subcommands: synth, filter, extract, train, classify, eval, pipeline.
`pipeline` chains the other six through files in an output directory and
writes a manifest with the sha256 of every artifact, so a pipeline run is
byte-identical to running the stages manually with the same flags.

Exit codes: 0 success, 2 usage, 3 file/format, 4 numeric failure.  Errors
go to stderr as a single line `error: <code>: <detail>`.
"""

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .cube import (
    SynthSpec,
    clean_counterpart,
    export_classmap,
    generate_synthetic,
    load_cube,
    load_labels,
    save_cube,
    save_labels,
)
from .errors import (
    FormatError,
    HsicError,
    IoFailure,
    NaNLoss,
    SpecInvalid,
    ValueOutOfRange,
)
from .frost import FrostConfig, filter_cube
from .metrics import (
    MetricsReport,
    cube_mse,
    false_positive_rate,
    psnr,
    time_classify,
    write_report,
)
from .metrics import accuracy as accuracy_pct
from .perceptron import (
    TrainConfig,
    build_gallery,
    classify_cube,
    init_model,
    load_gallery,
    load_model,
    save_gallery,
    save_model,
    train,
)
from .scalespace import (
    FEATURE_DIM,
    ScaleSpaceConfig,
    extract_cube_features,
    load_features,
    save_features,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: E_USAGE: {message} (see '{self.prog} --help')\n")


def _cube_paths(stem):
    return f"{stem}.hsch", f"{stem}.bsq"


# ---------------------------------------------------------------- stages

def stage_synth(out, classes, bands_per_class, width, height, noise, seed):
    spec = SynthSpec(classes, bands_per_class, width, height, noise, seed)
    cube, labels = generate_synthetic(spec)
    hsch, bsq = _cube_paths(out)
    save_cube(cube, hsch, bsq)
    save_labels(labels, f"{out}.labels")
    written = [hsch, bsq, f"{out}.labels"]
    if noise > 0:
        clean = clean_counterpart(spec)
        c_hsch, c_bsq = _cube_paths(f"{out}_clean")
        save_cube(clean, c_hsch, c_bsq)
        written += [c_hsch, c_bsq]
    return written


def stage_filter(in_stem, out_stem, window, damping, beta_mode, threads):
    cfg = FrostConfig(window, damping, beta_mode)
    cfg.validate()
    cube = load_cube(*_cube_paths(in_stem))
    filtered = filter_cube(cube, cfg, threads)
    hsch, bsq = _cube_paths(out_stem)
    save_cube(filtered, hsch, bsq)
    return [hsch, bsq]


def stage_extract(in_stem, out_path, octaves, scales, sigma0, contrast, threads):
    cfg = ScaleSpaceConfig(octaves, scales, sigma0, contrast)
    cfg.validate()
    cube = load_cube(*_cube_paths(in_stem))
    features = extract_cube_features(cube, cfg, threads)
    save_features(features, out_path)
    return [out_path]


def stage_train(features_path, labels_path, model_out, gallery_out, hidden, embed,
                lr, epochs, tol, seed, recurrent, per_band):
    cfg = TrainConfig(lr, epochs, tol, seed, recurrent)
    cfg.validate()
    features = load_features(features_path)
    labels = load_labels(labels_path)
    gallery = build_gallery(features, labels, per_band)
    model = init_model(FEATURE_DIM, hidden, embed, seed, recurrent)
    model, history = train(model, features, labels, gallery, cfg)
    save_model(model, model_out)
    save_gallery(gallery, gallery_out)
    return [model_out, gallery_out], history


def stage_classify(features_path, model_path, gallery_path, out_path, ppm_path,
                   labels_path, role):
    features = load_features(features_path)
    model = load_model(model_path)
    gallery = load_gallery(gallery_path)
    if labels_path:
        labels = load_labels(labels_path)
        indices = sorted(e.band for e in labels.entries
                         if role == "all" or e.role == role)
    else:
        indices = list(range(len(features)))
    subset = [features[i] for i in indices]
    if not subset:
        raise FormatError(f"{labels_path}: no bands selected for role {role!r}")
    (pred_labels, results), median_ms, _ = time_classify(
        lambda: classify_cube(model, subset, gallery))
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("band,label,score\n")
        for band, label, res in zip(indices, pred_labels, results):
            fh.write(f"{band},{label},{res.score:.9g}\n")
    per_band = median_ms / len(subset)
    with open(out_path + ".timing", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"classification_time_ms={median_ms:.6f}\n")
        fh.write(f"per_band_time_ms={per_band:.6f}\n")
        fh.write(f"n_bands={len(subset)}\n")
    written = [out_path, out_path + ".timing"]
    if ppm_path:
        num_classes = max(label for label, _ in gallery.entries) + 1
        export_classmap(pred_labels, num_classes, ppm_path)
        written.append(ppm_path)
    return written


def _read_predictions(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines or not lines[0].startswith("band,label"):
        raise FormatError(f"{path}: expected 'band,label[,score]' header")
    preds = []
    for ln in lines[1:]:
        parts = ln.split(",")
        try:
            preds.append((int(parts[0]), int(parts[1])))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: bad prediction row {ln!r}") from exc
    return preds


def _read_timing(path):
    if not os.path.exists(path):
        return 0.0, 0.0
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh.read().split("\n"):
            if "=" in ln:
                key, _, raw = ln.partition("=")
                try:
                    values[key] = float(raw)
                except ValueError as exc:
                    raise FormatError(f"{path}: bad timing row {ln!r}") from exc
    return (values.get("classification_time_ms", 0.0),
            values.get("per_band_time_ms", 0.0))


def stage_eval(pred_path, truth_path, clean_stem, cand_stem, report_path):
    preds = _read_predictions(pred_path)
    truth = load_labels(truth_path).by_band()
    missing = [band for band, _ in preds if band not in truth]
    if missing:
        raise FormatError(f"{truth_path}: no truth labels for bands {missing}")
    predicted = [label for _, label in preds]
    actual = [truth[band].label for band, _ in preds]
    clean = load_cube(*_cube_paths(clean_stem))
    cand = load_cube(*_cube_paths(cand_stem))
    err = cube_mse(clean, cand)
    total_ms, per_band_ms = _read_timing(pred_path + ".timing")
    report = MetricsReport(
        psnr_db=psnr(err, clean.header.max_value),
        mse=err,
        accuracy_pct=accuracy_pct(predicted, actual),
        fpr_pct=false_positive_rate(predicted, actual),
        classification_time_ms=total_ms,
        per_band_time_ms=per_band_ms,
        n_bands=len(preds),
    )
    write_report(report, report_path)
    return [report_path], report


# ---------------------------------------------------------------- commands

def _usage_check(*validators):
    """Run config validators before any file IO; bad values are usage errors."""
    try:
        for validate in validators:
            validate()
    except SpecInvalid as exc:
        print(f"error: E_USAGE: {exc}", file=sys.stderr)
        return 2
    return None


def _synth_spec(args, seed):
    return SynthSpec(args.classes, args.bands_per_class, args.width,
                     args.height, args.noise, seed)


def cmd_synth(args):
    bad = _usage_check(_synth_spec(args, args.seed).validate)
    if bad:
        return bad
    written = stage_synth(args.out, args.classes, args.bands_per_class,
                          args.width, args.height, args.noise, args.seed)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_filter(args):
    bad = _usage_check(FrostConfig(args.window, args.damping, args.beta_mode).validate)
    if bad:
        return bad
    written = stage_filter(args.in_stem, args.out, args.window, args.damping,
                           args.beta_mode, args.threads)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_extract(args):
    bad = _usage_check(
        ScaleSpaceConfig(args.octaves, args.scales, args.sigma0, args.contrast).validate)
    if bad:
        return bad
    written = stage_extract(args.in_stem, args.out, args.octaves, args.scales,
                            args.sigma0, args.contrast, args.threads)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_train(args):
    bad = _usage_check(
        TrainConfig(args.lr, args.epochs, args.tol, args.seed, args.recurrent).validate)
    if bad:
        return bad
    written, history = stage_train(
        args.features, args.labels, args.model_out, args.gallery_out,
        args.hidden, args.embed, args.lr, args.epochs, args.tol, args.seed,
        args.recurrent, args.gallery_per_band)
    print(f"trained {len(history)} epochs, loss {history[0]:.6f} -> {history[-1]:.6f}")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_classify(args):
    if args.role != "all" and not args.labels:
        print("error: E_USAGE: --role needs --labels", file=sys.stderr)
        return 2
    written = stage_classify(args.features, args.model, args.gallery, args.out,
                             args.ppm, args.labels, args.role)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_eval(args):
    written, report = stage_eval(args.pred, args.truth, args.clean,
                                 args.noisy_or_filtered, args.report)
    print(f"accuracy {report.accuracy_pct:.2f}%  fpr {report.fpr_pct:.2f}%  "
          f"psnr {report.psnr_db:.4f} dB")
    for path in written:
        print(f"wrote {path}")
    return 0


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_pipeline(args):
    bad = _usage_check(
        _synth_spec(args, args.synth_seed).validate,
        FrostConfig(args.window, args.damping, args.beta_mode).validate,
        ScaleSpaceConfig(args.octaves, args.scales, args.sigma0, args.contrast).validate,
        TrainConfig(args.lr, args.epochs, args.tol, args.seed, args.recurrent).validate)
    if bad:
        return bad
    outdir = args.out_dir
    os.makedirs(outdir, exist_ok=True)
    join = lambda name: os.path.join(outdir, name)
    written = []

    if args.in_stem:
        cube_stem = args.in_stem
        clean_stem = args.clean or args.in_stem
        labels_path = f"{cube_stem}.labels"
    else:
        cube_stem = join("cube")
        written += stage_synth(cube_stem, args.classes, args.bands_per_class,
                               args.width, args.height, args.noise, args.synth_seed)
        clean_stem = f"{cube_stem}_clean" if args.noise > 0 else cube_stem
        labels_path = f"{cube_stem}.labels"
        print(f"synth: {cube_stem}")

    filtered_stem = join("filtered")
    written += stage_filter(cube_stem, filtered_stem, args.window, args.damping,
                            args.beta_mode, args.threads)
    print(f"filter: {filtered_stem}")

    features_path = join("features.fvec")
    written += stage_extract(filtered_stem, features_path, args.octaves,
                             args.scales, args.sigma0, args.contrast, args.threads)
    print(f"extract: {features_path}")

    model_path, gallery_path = join("model.mlp"), join("gallery.gal")
    trained, history = stage_train(
        features_path, labels_path, model_path, gallery_path, args.hidden,
        args.embed, args.lr, args.epochs, args.tol, args.seed, args.recurrent,
        args.gallery_per_band)
    written += trained
    print(f"train: {len(history)} epochs, loss {history[0]:.6f} -> {history[-1]:.6f}")

    pred_path = join("predictions.csv")
    map_path = args.map or join("classmap.ppm")
    written += stage_classify(features_path, model_path, gallery_path, pred_path,
                              map_path, labels_path, "test")
    print(f"classify: {pred_path}")

    report_path = args.report or join("metrics.csv")
    paths, report = stage_eval(pred_path, labels_path, clean_stem, filtered_stem,
                               report_path)
    written += paths
    print(f"eval: accuracy {report.accuracy_pct:.2f}%  fpr {report.fpr_pct:.2f}%  "
          f"psnr {report.psnr_db:.4f} dB")

    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "version": __version__,
        "config": config,
        "files": [{"path": p, "sha256": _sha256(p), "bytes": os.path.getsize(p)}
                  for p in written],
    }
    manifest_path = join("manifest.json")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"manifest: {manifest_path}")
    return 0


# ---------------------------------------------------------------- parser

def _add_filter_flags(p):
    p.add_argument("--window", type=int, default=5,
                   help="filter window size in pixels, odd (default: %(default)s)")
    p.add_argument("--damping", type=float, default=2.0,
                   help="damping factor, unitless (default: %(default)s)")
    p.add_argument("--beta-mode", choices=("damped", "literal"), default="damped",
                   help="decay-rate formula (default: %(default)s)")


def _add_extract_flags(p):
    p.add_argument("--octaves", type=int, default=3,
                   help="pyramid octave count (default: %(default)s)")
    p.add_argument("--scales", type=int, default=3,
                   help="scales per octave (default: %(default)s)")
    p.add_argument("--sigma0", type=float, default=1.6,
                   help="base Gaussian sigma in pixels (default: %(default)s)")
    p.add_argument("--contrast", type=float, default=0.03,
                   help="keypoint contrast threshold on [0,1] intensities "
                        "(default: %(default)s)")


def _add_train_flags(p, seed_default):
    p.add_argument("--hidden", type=int, default=32,
                   help="hidden layer width (default: %(default)s)")
    p.add_argument("--embed", type=int, default=16,
                   help="embedding width (default: %(default)s)")
    p.add_argument("--lr", type=float, default=0.01,
                   help="learning rate (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=200,
                   help="maximum training epochs (default: %(default)s)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="stop when epoch loss improvement falls below this "
                        "(default: %(default)s)")
    p.add_argument("--seed", type=int, default=seed_default,
                   help="weight init seed (default: %(default)s)")
    p.add_argument("--recurrent", action="store_true",
                   help="enable hidden recurrence across band order (default: off)")
    p.add_argument("--gallery-per-band", action="store_true",
                   help="keep every train band as a reference instead of "
                        "class means (default: off)")


def _add_synth_flags(p, seed_flag, seed_default):
    p.add_argument("--classes", type=int, default=4,
                   help="number of classes, 2..8 (default: %(default)s)")
    p.add_argument("--bands-per-class", type=int, default=10,
                   help="bands per class (default: %(default)s)")
    p.add_argument("--width", type=int, default=64,
                   help="band width in pixels (default: %(default)s)")
    p.add_argument("--height", type=int, default=64,
                   help="band height in pixels (default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.3,
                   help="speckle amplitude in [0,1) (default: %(default)s)")
    p.add_argument(seed_flag, type=int, default=seed_default, dest=seed_flag.strip("-").replace("-", "_"),
                   help="generator seed (default: %(default)s)")


def _add_threads_flag(p):
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads for per-band stages, 0 = all cores "
                        "(default: %(default)s)")


def build_parser():
    parser = _Parser(prog="hsic",
                     description="Hyperspectral band classification pipeline")
    parser.add_argument("--version", action="version", version=f"hsic {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                parser_class=_Parser)

    p = sub.add_parser("synth",
                       help="generate a synthetic labeled cube")
    p.add_argument("--out", required=True, help="output path stem")
    _add_synth_flags(p, "--seed", 42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", help="Frost-filter a cube")
    p.add_argument("--in", dest="in_stem", required=True, help="input cube stem")
    p.add_argument("--out", required=True, help="output cube stem")
    _add_filter_flags(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("extract",
                       help="extract per-band feature vectors")
    p.add_argument("--in", dest="in_stem", required=True, help="input cube stem")
    p.add_argument("--out", required=True, help="output .fvec path")
    _add_extract_flags(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train",
                       help="train the matching perceptron")
    p.add_argument("--features", required=True, help="input .fvec path")
    p.add_argument("--labels", required=True, help="input .labels path")
    p.add_argument("--model-out", required=True, help="output .mlp path")
    p.add_argument("--gallery-out", required=True, help="output .gal path")
    _add_train_flags(p, 0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify",
                       help="classify bands against a gallery")
    p.add_argument("--features", required=True, help="input .fvec path")
    p.add_argument("--model", required=True, help="input .mlp path")
    p.add_argument("--gallery", required=True, help="input .gal path")
    p.add_argument("--out", required=True, help="output predictions .csv path")
    p.add_argument("--ppm", default=None, help="optional class map .ppm path")
    p.add_argument("--labels", default=None,
                   help="labels file for band selection (default: all bands)")
    p.add_argument("--role", choices=("all", "train", "test"), default="all",
                   help="which labeled bands to classify (default: %(default)s)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="compute the metrics report")
    p.add_argument("--pred", required=True, help="predictions .csv path")
    p.add_argument("--truth", required=True, help="truth .labels path")
    p.add_argument("--clean", required=True, help="clean reference cube stem")
    p.add_argument("--noisy-or-filtered", required=True,
                   help="candidate cube stem for PSNR/MSE")
    p.add_argument("--report", required=True, help="output metrics .csv path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline",
                       help="run synth/load, filter, extract, train, classify, eval")
    p.add_argument("--in", dest="in_stem", default=None,
                   help="existing cube stem (default: synthesize)")
    p.add_argument("--clean", default=None,
                   help="clean reference stem when --in is used (default: the input)")
    p.add_argument("--out-dir", default="hsic_out",
                   help="artifact directory (default: %(default)s)")
    _add_synth_flags(p, "--synth-seed", 42)
    _add_filter_flags(p)
    _add_extract_flags(p)
    _add_train_flags(p, 7)
    _add_threads_flag(p)
    p.add_argument("--report", default=None,
                   help="metrics csv path (default: <out-dir>/metrics.csv)")
    p.add_argument("--map", default=None,
                   help="class map ppm path (default: <out-dir>/classmap.ppm)")
    p.set_defaults(func=cmd_pipeline)

    return parser


_FORMAT_ERRORS = (FormatError, ValueOutOfRange, SpecInvalid)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except IoFailure as exc:
        print(f"error: E_IO: {exc}", file=sys.stderr)
        return 3
    except _FORMAT_ERRORS as exc:
        print(f"error: E_FORMAT: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: E_IO: {exc}", file=sys.stderr)
        return 3
    except NaNLoss as exc:
        print(f"error: E_NUMERIC: {exc}", file=sys.stderr)
        return 4
    except HsicError as exc:
        print(f"error: E_NUMERIC: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
