"""Command-line driver: generate, train, eval, compare, temporal.

Exit codes: 0 success, 1 usage error (also an empty ``generate``),
2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .baseline import KnnConfig, ThresholdBands, classify_map, knn_predict_batch
from .dataset import (
    ManifestError,
    featurize_manifest,
    read_manifest,
    synthetic_scenes,
    write_manifest,
)
from .hypercube import (
    DEFAULT_DROP_BACK,
    DEFAULT_DROP_FRONT,
    CubeFormatError,
    load_cube,
    trim_bands,
    write_cube,
)
from .indices import DEFAULT_FUSION, FEATURE_NAMES, DomainError, compute_index_maps, with_hvi
from .net import DEFAULT_DROPOUT, DEFAULT_HIDDEN, CheckpointError, init_model, load_model, predict_raw, save_model
from .render import label_image, ndvi_heatmap, write_ppm
from .report import format_blocks
from .stats import all_importances, bootstrap_ci, confusion, metrics, paired_t_test
from .temporal import SeriesFormatError, detect_onset, format_report, read_series_csv, series_from_cubes
from .train import LabeledSet, SplitSpec, TrainConfig, format_history, k_fold, split, train

log = logging.getLogger("cropfcnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def read_config(path) -> Dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use flag names
    with dashes or underscores (``batch-size`` or ``batch_size``)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# ---------------------------------------------------------------- arguments


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags take precedence")


def _add_features(p: argparse.ArgumentParser) -> None:
    p.add_argument("--drop-front", type=int, default=DEFAULT_DROP_FRONT, help="noisy bands dropped at the blue end")
    p.add_argument("--drop-back", type=int, default=DEFAULT_DROP_BACK, help="noisy bands dropped at the NIR end")


def _add_split(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", type=_float_list, default=[0.70, 0.15, 0.15], help="train,val,test fractions")


def _add_train(p: argparse.ArgumentParser) -> None:
    p.add_argument("--batch-size", type=int, default=128, help="mini-batch size")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--epochs", type=int, default=15, help="training epochs")
    p.add_argument("--dropout", type=float, default=DEFAULT_DROPOUT, help="dropout rate after each hidden layer")
    p.add_argument("--hidden", type=_int_list, default=list(DEFAULT_HIDDEN), help="hidden layer widths")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="cropfcnn", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress per-epoch log lines")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic labeled scene set", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory (manifest.csv and scenes/)")
    p.add_argument("--count", type=int, default=200, help="scenes per class")
    p.add_argument("--image-size", type=int, default=16, help="pixels per side")
    p.add_argument("--noise", type=float, default=0.02, help="per-pixel reflectance noise std-dev")
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("train", help="featurize, split and train the FCNN", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory (model.fcn, history.csv)")
    p.add_argument("--seed", type=int, default=0)
    _add_train(p)
    _add_split(p)
    _add_features(p)

    p = sub.add_parser("eval", help="score a checkpoint and render maps", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory (report.csv, *.ppm)")
    p.add_argument("--subset", choices=["all", "train", "val", "test"], default="test",
                   help="which split to score; reproduces the train command's split for the same --seed/--split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resamples", type=int, default=1000, help="bootstrap resamples")
    p.add_argument("--repeats", type=int, default=10, help="permutation-importance shuffles per feature")
    p.add_argument("--render", type=int, default=3, help="number of scenes to render as PPM")
    p.add_argument("--compare-knn", action="store_true", help="add a paired t-test against KNN over k folds")
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--healthy-low", type=float, default=0.6, help="NDVI lower bound of the healthy band")
    p.add_argument("--rust-low", type=float, default=0.2, help="NDVI lower bound of the rust band")
    _add_split(p)
    _add_features(p)

    p = sub.add_parser("compare", help="paired t-test of two models over shared folds", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--a", default="fcnn", help="'fcnn' (retrain per fold), 'knn', or a checkpoint path")
    p.add_argument("--b", default="knn", help="'fcnn', 'knn', or a checkpoint path")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--label-noise", type=float, default=0.0, help="fraction of KNN training labels flipped per fold")
    p.add_argument("--out", help="report CSV path (default: stdout)")
    _add_train(p)
    _add_features(p)

    p = sub.add_parser("temporal", help="detect rust onset in an NDVI time series", formatter_class=fmt)
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--series", help="CSV with header day,ndvi")
    src.add_argument("--cube", action="append", metavar="DAY:PATH", help="dated HSC cube; repeat in day order")
    p.add_argument("--healthy-low", type=float, default=0.6, help="NDVI lower bound of the healthy band")
    p.add_argument("--rust-low", type=float, default=0.2, help="NDVI lower bound of the rust band")
    p.add_argument("--drop-threshold", type=float, default=0.1, help="minimum fall below the running peak")
    p.add_argument("--out", help="report CSV path (default: stdout)")
    _add_features(p)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        values = read_config(args.config)
        unknown = sorted(set(values) - dests)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- commands


def _split_spec(fractions, seed) -> SplitSpec:
    if len(fractions) != 3:
        raise UsageError("--split needs three fractions")
    return SplitSpec(*fractions, rng_seed=seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.lr,
        epochs=args.epochs,
        dropout_p=args.dropout,
        rng_seed=args.seed,
    )


def cmd_generate(args) -> int:
    out = Path(args.out)
    try:
        (out / "scenes").mkdir(parents=True, exist_ok=True)
        rows = []
        counters = {1: 0, 2: 0, 3: 0}
        for cube, label in synthetic_scenes(args.count, args.seed, args.image_size, args.noise):
            name = f"scenes/{label}_{counters[label]:05d}.hsc"
            counters[label] += 1
            write_cube(cube, out / name)
            rows.append((name, label))
        write_manifest(out / "manifest.csv", rows)
    except OSError as exc:
        raise CubeFormatError(f"cannot write to {exc.filename or out}: {exc.strerror}") from exc
    if args.count == 0:
        log.warning("count is 0: wrote an empty manifest to %s", out / "manifest.csv")
        return EXIT_USAGE
    print(f"wrote {len(rows)} scenes and {out / 'manifest.csv'}")
    return EXIT_OK


def _load_data(args) -> LabeledSet:
    return featurize_manifest(read_manifest(args.manifest), args.drop_front, args.drop_back)


def cmd_train(args) -> int:
    data = _load_data(args)
    tr, va, _ = split(data.labels, _split_spec(args.split, args.seed))
    missing = sorted({1, 2, 3} - set(data.labels[tr].tolist()))
    if missing:
        raise ManifestError(f"classes absent from the training split: {missing}")
    model = init_model(args.hidden, args.dropout, seed=args.seed)
    model, history = train(model, data.subset(tr), data.subset(va), _train_config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.fcn")
    (out / "history.csv").write_text(format_history(history))
    print(f"final val_accuracy {history[-1].val_accuracy!r}")
    print(f"wrote {out / 'model.fcn'} and {out / 'history.csv'}")
    return EXIT_OK


def _knn_fold_scores(model_fusion, data: LabeledSet, folds, k, score_fn):
    a_scores, b_scores = [], []
    feats = with_hvi(data.raw, model_fusion)
    for tr, va in folds:
        a_scores.append(score_fn(tr, va))
        pred = knn_predict_batch(feats[tr], data.labels[tr], feats[va], KnnConfig(k))
        b_scores.append(float(np.mean(pred == data.labels[va])))
    return a_scores, b_scores


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    rows = read_manifest(args.manifest)
    data = featurize_manifest(rows, args.drop_front, args.drop_back)
    if args.subset == "all":
        idx = np.arange(len(data))
    else:
        parts = dict(zip(("train", "val", "test"), split(data.labels, _split_spec(args.split, args.seed))))
        idx = parts[args.subset]
    held = data.subset(idx)
    pred = predict_raw(model, held.raw)
    cm = confusion(held.labels, pred)
    m = metrics(cm)
    blocks = {
        "confusion_matrix": [[c + 1, *cm.counts[c].tolist()] for c in range(3)],
        "class_metrics": [[c + 1, float(m.precision[c]), float(m.recall[c]), float(m.f1[c])] for c in range(3)],
        "accuracy": [[m.accuracy]],
    }
    ci_rows = []
    for name in ["accuracy"] + [f"{kind}_{c}" for kind in ("precision", "recall", "f1") for c in (1, 2, 3)]:
        ci = bootstrap_ci(held.labels, pred, name, args.resamples, args.seed)
        ci_rows.append([name, ci.point_estimate, ci.lower, ci.upper, ci.confidence, ci.resamples])
    blocks["bootstrap_ci"] = ci_rows
    imps = all_importances(model, model.features(held.raw), held.labels, args.repeats, args.seed)
    blocks["importance"] = [[n, v] for n, v in zip(FEATURE_NAMES, imps)]
    if args.compare_knn:
        folds = k_fold(data.labels, args.folds, args.seed)

        def fixed(tr, va):
            return float(np.mean(predict_raw(model, data.raw[va]) == data.labels[va]))

        a, b = _knn_fold_scores(model.fusion, data, folds, args.knn_k, fixed)
        res = paired_t_test(a, b)
        blocks["fold_scores"] = [[i + 1, x, y] for i, (x, y) in enumerate(zip(a, b))]
        blocks["ttest"] = [[args.checkpoint, "knn", "accuracy", res.t_statistic, res.degrees_of_freedom,
                            res.p_value, res.mean_difference, res.degenerate]]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(format_blocks(blocks))

    bands = ThresholdBands(args.healthy_low, args.rust_low)
    for j, i in enumerate(idx[: args.render]):
        cube = load_cube(rows[i][0])
        if args.drop_front or args.drop_back:
            cube = trim_bands(cube, args.drop_front, args.drop_back)
        ndvi_map = compute_index_maps(cube).ndvi
        write_ppm(out / f"ndvi_{j:03d}.ppm", ndvi_heatmap(ndvi_map))
        write_ppm(out / f"class_{j:03d}.ppm", label_image(classify_map(ndvi_map, bands)))
    print(f"accuracy {m.accuracy!r} on {len(held)} scenes ({args.subset})")
    print(f"wrote {out / 'report.csv'}")
    return EXIT_OK


def _flip_labels(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    labels = labels.copy()
    n_flip = int(round(fraction * labels.size))
    if n_flip:
        idx = rng.choice(labels.size, size=n_flip, replace=False)
        labels[idx] = (labels[idx] - 1 + rng.integers(1, 3, size=n_flip)) % 3 + 1
    return labels


def _fold_scorer(spec: str, data: LabeledSet, args, fold_no: int):
    """Return ``score(train_idx, val_idx) -> accuracy`` for a model spec."""
    if spec == "fcnn":
        base = init_model(args.hidden, args.dropout, seed=args.seed)

        def score(tr, va):
            model, _ = train(base, data.subset(tr), None, _train_config(args))
            return float(np.mean(predict_raw(model, data.raw[va]) == data.labels[va]))

    elif spec == "knn":
        feats = with_hvi(data.raw, DEFAULT_FUSION)

        def score(tr, va):
            rng = np.random.default_rng([args.seed, fold_no])
            noisy = _flip_labels(data.labels[tr], args.label_noise, rng)
            pred = knn_predict_batch(feats[tr], noisy, feats[va], KnnConfig(args.knn_k))
            return float(np.mean(pred == data.labels[va]))

    else:
        model = load_model(spec)

        def score(tr, va):
            return float(np.mean(predict_raw(model, data.raw[va]) == data.labels[va]))

    return score


def cmd_compare(args) -> int:
    if not 0.0 <= args.label_noise <= 1.0:
        raise UsageError("--label-noise must lie in [0, 1]")
    data = _load_data(args)
    folds = k_fold(data.labels, args.folds, args.seed)
    a_scores, b_scores = [], []
    for f, (tr, va) in enumerate(folds):
        a_scores.append(_fold_scorer(args.a, data, args, f)(tr, va))
        b_scores.append(_fold_scorer(args.b, data, args, f)(tr, va))
        log.info("fold %d: a %.4f b %.4f", f + 1, a_scores[-1], b_scores[-1])
    res = paired_t_test(a_scores, b_scores)
    text = format_blocks({
        "fold_scores": [[i + 1, x, y] for i, (x, y) in enumerate(zip(a_scores, b_scores))],
        "ttest": [[args.a, args.b, "accuracy", res.t_statistic, res.degrees_of_freedom,
                   res.p_value, res.mean_difference, res.degenerate]],
    })
    if args.out:
        Path(args.out).write_text(text)
        print(f"t {res.t_statistic!r} df {res.degrees_of_freedom} p {res.p_value!r} degenerate {res.degenerate}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_temporal(args) -> int:
    if args.series:
        series = read_series_csv(Path(args.series).read_text())
    else:
        dated = []
        for item in args.cube:
            day, sep, path = item.partition(":")
            if not sep:
                raise UsageError(f"--cube expects DAY:PATH, got {item!r}")
            try:
                day_value = float(day)
            except ValueError:
                raise UsageError(f"--cube day {day!r} is not a number") from None
            cube = load_cube(path)
            if args.drop_front or args.drop_back:
                cube = trim_bands(cube, args.drop_front, args.drop_back)
            dated.append((day_value, cube))
        series = series_from_cubes(dated)
    report = detect_onset(series, ThresholdBands(args.healthy_low, args.rust_low), args.drop_threshold)
    text = format_report(report)
    if args.out:
        Path(args.out).write_text(text)
        print("onset day", "none" if report.onset_day is None else f"{report.onset_day:g}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "temporal": cmd_temporal,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"cropfcnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cropfcnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"cropfcnn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CubeFormatError, CheckpointError, ManifestError, SeriesFormatError, DomainError, OSError, ValueError) as exc:
        print(f"cropfcnn: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
