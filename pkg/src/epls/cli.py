"""Command line interface: ``epls <subcommand> [flags]``.

Exit status: 0 on success, 2 for usage or configuration errors, 3 for
unreadable or inconsistent data, 4 for numerical failure.  Every run
prints its resolved settings (seed included) to standard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np

from . import _backend
from .errors import ConfigError, EPLSError, ShapeError
from .fileio import (
    export_bases_image,
    read_labels,
    read_matrix,
    read_model,
    read_stl10,
    write_matrix,
    write_model,
)
from .optimizer import parse_optimizer
from .pipeline import (
    EncoderKind,
    ImageSet,
    PatchConfig,
    encode_images,
    extract_random_patches,
    make_oriented_textures,
    normalize_patch_rows,
    ridge_predict,
    ridge_train,
    run_pipeline,
)
from .target import InhibitorMode, generate_target, new_inhibitor
from .trainer import TrainConfig, train

DEFAULT_SEED = 42


def _shape(text):
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected H,W,C, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive sizes H,W,C, got {text!r}")
    return dims


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return value


def _optimizer(text):
    try:
        return parse_optimizer(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_image_source(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--images", help="STL-10 style binary image file")
    src.add_argument("--matrix", help="matrix file with one flattened H,W,C image per row")
    p.add_argument("--shape", type=_shape, help="H,W,C of the rows of --matrix")
    p.add_argument("--limit", type=_nonnegative_int, help="use only the first images")


def load_images(path_images=None, path_matrix=None, shape=None, limit=None, path_labels=None) -> ImageSet:
    """Images from an STL-10 binary file or from a matrix of flattened images."""
    if path_images is not None:
        return read_stl10(path_images, path_labels, limit)
    if shape is None:
        raise ConfigError("--matrix needs --shape H,W,C")
    m = read_matrix(path_matrix)
    if limit is not None:
        m = m[:limit]
    h, w, c = shape
    if m.shape[1] != h * w * c:
        raise ShapeError(f"matrix rows have {m.shape[1]} values, --shape gives {h * w * c}")
    if m.size and (m.min() < 0 or m.max() > 255):
        raise ShapeError("image values must lie in 0..255")
    labels = None
    if path_labels is not None:
        labels = read_labels(path_labels)[: m.shape[0]]
    return ImageSet(np.rint(m).astype(np.uint8).reshape(-1, h, w, c), labels)


def _report_config(command, args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    cfg = {k: (str(v) if not isinstance(v, (int, float, str, bool, type(None), list, tuple)) else v)
           for k, v in cfg.items()}
    print(f"epls {command}: " + json.dumps(cfg, sort_keys=True), file=sys.stderr)


def cmd_extract_patches(args):
    images = load_images(args.images, args.matrix, args.shape, args.limit)
    cfg = PatchConfig(receptive_field=args.rf, patch_count=args.count, normalize_floor=args.floor)
    patches = normalize_patch_rows(extract_random_patches(images, cfg, args.seed), cfg.normalize_floor)
    write_matrix(args.out, patches, args.dtype)
    print(f"wrote {patches.shape[0]} x {patches.shape[1]} patches to {args.out}")


def cmd_train(args):
    D = read_matrix(args.patches)
    config = TrainConfig(
        n_outputs=args.outputs,
        batch_size=args.batch,
        seed=args.seed,
        stop_rel_tol=args.tol,
        max_epochs=args.max_epochs,
        inhibitor_mode=InhibitorMode(args.mode),
        optimizer=args.optimizer,
        epsilon=args.epsilon,
        verbose=args.verbose,
    )
    params, report = train(D, config)
    write_model(args.out, params)
    if args.log:
        with open(args.log, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "loss", "rel_decrement", "hist_min", "hist_max"])
            for e, (loss, rel, hist) in enumerate(
                zip(report.losses, report.rel_decrements(), report.histograms), start=1
            ):
                w.writerow([e, repr(loss), "" if math.isnan(rel) else repr(rel), hist.min(), hist.max()])
    print(f"epochs: {report.epochs_run}")
    print(f"final loss: {report.losses[-1]!r}")
    print(f"stop reason: {report.stop_reason.value}")


def _rf_for(params, channels):
    rf = math.isqrt(params.n_inputs // channels)
    if rf * rf * channels != params.n_inputs:
        raise ShapeError(
            f"model input size {params.n_inputs} is not rf^2 x {channels} channels"
        )
    return rf


def cmd_encode(args):
    params = read_model(args.model)
    images = load_images(args.images, args.matrix, args.shape, args.limit)
    cfg = PatchConfig(receptive_field=_rf_for(params, images.channels), stride=args.stride,
                      normalize_floor=args.floor)
    encoder = EncoderKind(args.encoder, alpha=args.alpha, split_linear=args.split_linear)
    features = encode_images(images, params, encoder, cfg, args.workers)
    write_matrix(args.out, features)
    print(f"wrote {features.shape[0]} x {features.shape[1]} features to {args.out}")


def _print_accuracy(pred, labels, classes):
    print(f"accuracy: {float(np.mean(pred == labels)) if len(labels) else float('nan')!r}")
    for c in classes:
        mask = labels == c
        if mask.any():
            print(f"class {c}: {float(np.mean(pred[mask] == c))!r} ({int(mask.sum())})")


def cmd_eval(args):
    f_train, f_test = read_matrix(args.train_features), read_matrix(args.test_features)
    y_train, y_test = read_labels(args.train_labels), read_labels(args.test_labels)
    if f_train.shape[0] != y_train.shape[0] or f_test.shape[0] != y_test.shape[0]:
        raise ShapeError("feature rows and label counts differ")
    if f_train.shape[1] != f_test.shape[1]:
        raise ShapeError("train and test features have different widths")
    clf = ridge_train(f_train, y_train)
    unknown = np.setdiff1d(y_test, clf.classes)
    if unknown.size:
        raise ShapeError(f"test labels {unknown.tolist()} never occur in training")
    print(f"regularizer: {clf.lam!r}", file=sys.stderr)
    _print_accuracy(ridge_predict(clf, f_test), y_test, clf.classes)


def cmd_export_bases(args):
    params = read_model(args.model)
    export_bases_image(params, args.rf, args.channels, args.out)
    print(f"wrote {params.n_outputs} bases to {args.out}")


def time_generate_target(n, n_outputs, trials=3, mode="soft", kernels=None, seed=0, chunk=4096):
    """Best wall time of one epoch of target generation over ``n`` random rows.

    A fixed random block of outputs is reused chunk by chunk, so memory
    stays bounded and only the target generation is timed.
    """
    rng = np.random.default_rng(seed)
    block = rng.random((min(chunk, n), n_outputs))
    best = math.inf
    for _ in range(trials):
        state = new_inhibitor(n, n_outputs, mode=mode)
        start = time.perf_counter()
        done = 0
        while done < n:
            rows = min(block.shape[0], n - done)
            generate_target(block[:rows], state, kernels)
            done += rows
        best = min(best, time.perf_counter() - start)
    return best


def bench_target(n, n_outputs, trials=3, mode="soft", kernels=None, seed=0):
    """Times for ``(N, 2N) x (N_h, 2N_h)``; returns rows and the two doubling ratios."""
    rows = []
    for nn in (n, 2 * n):
        for hh in (n_outputs, 2 * n_outputs):
            t = time_generate_target(nn, hh, trials, mode, kernels, seed)
            rows.append((nn, hh, t, nn * hh / t))
    t = {(r[0], r[1]): r[2] for r in rows}
    ratio_n = t[(2 * n, n_outputs)] / t[(n, n_outputs)]
    ratio_h = t[(n, 2 * n_outputs)] / t[(n, n_outputs)]
    return rows, ratio_n, ratio_h


def cmd_bench_target(args):
    kernels = _backend.load(args.backend)
    print(f"backend: {_backend.name_of(kernels)}")
    rows, ratio_n, ratio_h = bench_target(args.N, args.Nh, args.trials, args.mode, kernels, args.seed)
    print(f"{'N':>10} {'N_h':>6} {'seconds':>10} {'elements/s':>12}")
    for nn, hh, t, rate in rows:
        print(f"{nn:>10} {hh:>6} {t:>10.4f} {rate:>12.4g}")
    print(f"ratio N->2N: {ratio_n:.3f}")
    print(f"ratio N_h->2N_h: {ratio_h:.3f}")


def cmd_pipeline(args):
    if args.synthetic:
        train_set = make_oriented_textures(args.synthetic // 2, seed=args.seed)
        test_set = make_oriented_textures(args.synthetic // 2, seed=args.seed + 1)
    else:
        if not (args.train_images and args.train_labels and args.test_images and args.test_labels):
            raise ConfigError("give --synthetic N or all of --train-images/--train-labels/"
                              "--test-images/--test-labels")
        train_set = read_stl10(args.train_images, args.train_labels, args.limit)
        test_set = read_stl10(args.test_images, args.test_labels, args.limit)
    cfg = PatchConfig(receptive_field=args.rf, patch_count=args.count, normalize_floor=args.floor)
    config = TrainConfig(
        n_outputs=args.outputs,
        seed=args.seed,
        max_epochs=args.max_epochs,
        inhibitor_mode=InhibitorMode(args.mode),
        optimizer=args.optimizer,
        verbose=args.verbose,
    )
    encoder = EncoderKind(args.encoder, alpha=args.alpha)
    result = run_pipeline(train_set, test_set, config, cfg, encoder, args.seed, args.workers)
    if args.out_dir:
        import os
        os.makedirs(args.out_dir, exist_ok=True)
        write_model(os.path.join(args.out_dir, "model.epls"), result.params)
        write_matrix(os.path.join(args.out_dir, "train_features.mat"), result.train_features)
        write_matrix(os.path.join(args.out_dir, "test_features.mat"), result.test_features)
    print(f"epochs: {result.report.epochs_run} ({result.report.stop_reason.value})")
    _print_accuracy(result.predictions, test_set.labels, result.classifier.classes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epls", description="Sparse dictionary learning with one-hot targets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-patches", help="sample and normalize random patches")
    _add_image_source(p)
    p.add_argument("--rf", type=_positive(int), default=10)
    p.add_argument("--count", type=_nonnegative_int, default=100_000)
    p.add_argument("--floor", type=float, default=10.0, help="variance floor of the normalization")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--dtype", choices=["f8", "f4"], default="f8")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_patches)

    p = sub.add_parser("train", help="learn a dictionary from a patch matrix")
    p.add_argument("--patches", required=True)
    p.add_argument("--outputs", type=_positive(int), required=True)
    p.add_argument("--batch", type=_positive(int), default=None, help="default: --outputs")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--mode", choices=[m.value for m in InhibitorMode], default="soft")
    p.add_argument("--optimizer", type=_optimizer, default="adaptive")
    p.add_argument("--max-epochs", type=_positive(int), default=500)
    p.add_argument("--tol", type=_positive(float), default=1e-6)
    p.add_argument("--epsilon", type=_positive(float), default=1e-6)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch CSV report")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="pooled features for every image")
    p.add_argument("--model", required=True)
    _add_image_source(p)
    p.add_argument("--encoder", choices=["natural", "signsplit", "softthresh"], default="natural")
    p.add_argument("--alpha", type=_positive(float), default=0.25)
    p.add_argument("--split-linear", action="store_true",
                   help="sign split on linear responses instead of logistic outputs")
    p.add_argument("--stride", type=_positive(int), default=1)
    p.add_argument("--floor", type=float, default=10.0)
    p.add_argument("--workers", type=_positive(int), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="ridge classifier accuracy")
    p.add_argument("--train-features", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test-features", required=True)
    p.add_argument("--test-labels", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-bases", help="write the bases as a PGM/PPM grid")
    p.add_argument("--model", required=True)
    p.add_argument("--rf", type=_positive(int), required=True)
    p.add_argument("--channels", type=int, choices=[1, 3], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_bases)

    p = sub.add_parser("bench-target", help="time target generation when N or N_h doubles")
    p.add_argument("--N", type=_positive(int), default=100_000)
    p.add_argument("--Nh", type=_positive(int), default=256)
    p.add_argument("--trials", type=_positive(int), default=3)
    p.add_argument("--mode", choices=[m.value for m in InhibitorMode], default="soft")
    p.add_argument("--backend", choices=["auto", "cython", "python"], default="auto")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_bench_target)

    p = sub.add_parser("pipeline", help="patches, training, encoding and evaluation in one run")
    p.add_argument("--synthetic", type=_positive(int), help="use N synthetic texture images per split")
    p.add_argument("--train-images")
    p.add_argument("--train-labels")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--limit", type=_nonnegative_int, default=1000)
    p.add_argument("--rf", type=_positive(int), default=10)
    p.add_argument("--count", type=_positive(int), default=20_000, help="training patches")
    p.add_argument("--floor", type=float, default=10.0)
    p.add_argument("--outputs", type=_positive(int), default=64)
    p.add_argument("--mode", choices=[m.value for m in InhibitorMode], default="soft")
    p.add_argument("--optimizer", type=_optimizer, default="adaptive")
    p.add_argument("--max-epochs", type=_positive(int), default=500)
    p.add_argument("--encoder", choices=["natural", "signsplit", "softthresh"], default="natural")
    p.add_argument("--alpha", type=_positive(float), default=0.25)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=_positive(int), default=None)
    p.add_argument("--out-dir", help="also write the model and feature matrices here")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _report_config(args.command, args)
    try:
        args.func(args)
    except EPLSError as exc:
        print(f"epls: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, EOFError) as exc:
        print(f"epls: error: {exc}", file=sys.stderr)
        return 3
    except MemoryError as exc:
        print(f"epls: error: out of memory ({exc})", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
