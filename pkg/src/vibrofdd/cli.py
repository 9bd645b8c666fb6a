"""``vibro-fdd`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bundle as bundle_mod
from .bench import DEFAULT_COUNTS, SHAFT_JITTER, SynthSpec, make_dataset
from .dsp import WaveletConfig, WaveletFamily, envelope_psd_db, to_db, welch_psd
from .errors import DatasetError, IoError, NumericError, UsageError, VibroError
from .evaluation import (
    ReportRow,
    accuracy,
    benchmark,
    confusion,
    rates_csv,
    report_csv,
    report_table,
)
from .hpo import SvmParams
from .ingest import (
    CLASS_NAMES,
    DEFAULT_WINDOW_LEN,
    MANIFEST_NAME,
    FaultClass,
    RecordBatch,
    load_dataset,
    read_csv,
    read_manifest,
    to_csv,
    validate_rate,
)
from .pipeline import (
    PipelineConfig,
    feature_matrix,
    fit_pipeline,
    retrain_classifier,
    stratified_split,
)

log = logging.getLogger("vibrofdd")

SPLIT_STREAM = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        bundle_mod.write_text_atomic(path, text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _counts(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected exactly three counts")
    return parts


def _config(args) -> PipelineConfig:
    return PipelineConfig(
        window_len=args.window_len,
        wavelet=WaveletConfig(WaveletFamily(args.wavelet), args.levels),
        denoise_raw=getattr(args, "denoise_raw", False),
        n_components=getattr(args, "pca", 18),
        standardize_features=getattr(args, "standardize_features", False),
    )


def _labeled(args, directory):
    items = load_dataset(directory, args.window_len)
    x = feature_matrix([i.window for i in items], _config(args))
    y = np.array([int(i.window.label) for i in items], dtype=int)
    return items, x, y


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc.strerror or exc}") from exc
    base = SynthSpec(FaultClass.MISALIGNMENT, noise_sigma=args.noise, window_len=args.window_len)
    windows = make_dataset(args.counts, base, args.seed, jitter=args.jitter)
    labels = {}
    seen = {c: 0 for c in FaultClass}
    for w in windows:
        name = f"{w.label.label}_{seen[w.label]:04d}.csv"
        seen[w.label] += 1
        t = np.arange(len(w)) / w.rate_hz
        batch = RecordBatch(t, w.x, w.y, w.z, nominal_rate_hz=w.rate_hz)
        _write(out / name, to_csv(batch))
        labels[name] = w.label
    manifest = "file,label\n" + "".join(f"{n},{c.label}\n" for n, c in labels.items())
    _write(out / MANIFEST_NAME, manifest)
    print(f"wrote {len(windows)} files and {MANIFEST_NAME} to {out}")
    return 0


def cmd_ingest_check(args) -> int:
    for path in args.inputs:
        batch = read_csv(path)
        rep = validate_rate(batch, args.tolerance)
        n_win = len(batch) // args.window_len
        flag = "RATE-MISMATCH" if rep.flagged else "ok"
        print(f"{path}: {len(batch)} records, {rep.implied_rate_hz:.1f} Hz implied "
              f"(nominal {rep.nominal_rate_hz:.0f}), {n_win} windows, {flag}")
    return 0


def cmd_features(args) -> int:
    items, x, y = _labeled(args, args.data)
    cols = [f"f{i}" for i in range(x.shape[1])] + ["label"]
    lines = [",".join(cols)]
    for row, label in zip(x, y):
        lines.append(",".join(repr(float(v)) for v in row) + f",{label}")
    _write(Path(args.out), "\n".join(lines) + "\n")
    print(f"wrote {len(y)} feature rows of dimension {x.shape[1]} to {args.out}")
    return 0


def cmd_train(args) -> int:
    data = Path(args.data)
    items, x, y = _labeled(args, data)
    if len(items) == 0:
        raise DatasetError(f"{data}: no windows found")
    split_seed = int(np.random.SeedSequence([args.seed, SPLIT_STREAM]).generate_state(1)[0])
    train, test = stratified_split(y, args.test_fraction, split_seed)
    svm_params = SvmParams(args.box, args.scale, args.standardize, "one-vs-all")
    pipe, trace = fit_pipeline(
        x[train], y[train], _config(args), model=args.model, tune=args.tune, seed=args.seed,
        svm_params=svm_params, mlp_max_iter=args.max_iter,
    )
    if np.any(test):
        pred, _ = pipe.predict_features(x[test])
        pipe.metadata["accuracy_test_split"] = float(np.mean(pred == y[test]))
    else:
        pipe.metadata["accuracy_test_split"] = None
    files = sorted({data / i.source for i in items})
    pipe.metadata.update({
        "model": args.model if args.model == "svm" else "nn",
        "seed": args.seed,
        "timestamp": _timestamp(),
        "dataset_fingerprint": bundle_mod.dataset_fingerprint(files),
        "n_train": int(train.sum()),
        "n_test": int(test.sum()),
        "test_fraction": args.test_fraction,
    })
    out = Path(args.out)
    _write(out, bundle_mod.dumps(pipe))
    if trace is not None:
        names = ["box_constraint", "kernel_scale", "standardize", "coding"]
        _write(_trace_path(out), trace.to_csv(names))
    cv = pipe.metadata.get("cv_error")
    print(f"trained {pipe.kind} on {int(train.sum())} windows; "
          f"CV error {'n/a' if cv is None else f'{cv:.4f}'}; wrote {out}")
    return 0


def _trace_path(bundle_path: Path) -> Path:
    return bundle_path.with_name(bundle_path.stem + ".trace.csv")


def _timestamp():
    # None unless SOURCE_DATE_EPOCH pins it, so bundles stay reproducible
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(epoch)))


def _load_bundle(path):
    try:
        return bundle_mod.load(path)
    except OSError as exc:
        raise IoError(f"cannot read bundle {path}: {exc.strerror or exc}") from exc


def cmd_predict(args) -> int:
    pipe = _load_bundle(args.bundle)
    items = load_dataset(args.data, pipe.config.window_len, require_labels=False)
    head = ["file", "window", "predicted"] + [f"score_{n}" for n in CLASS_NAMES]
    lines = [",".join(head)]
    if items:
        pred, scores = pipe.predict_windows([i.window for i in items])
        for item, p, s in zip(items, pred, scores):
            lines.append(",".join([item.source, str(item.index), CLASS_NAMES[int(p)]]
                                  + [repr(float(v)) for v in s]))
    _write(Path(args.out), "\n".join(lines) + "\n")
    print(f"wrote {len(items)} predictions to {args.out}")
    return 0


def _evaluate_one(pipe, x, y):
    pred, _ = pipe.predict_features(x)
    return confusion(y, pred)


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    bundles = args.compare if args.compare else [args.bundle]
    if not bundles or bundles[0] is None:
        raise UsageError("give a bundle or --compare A B")
    pipes = [_load_bundle(b) for b in bundles]
    cfg0 = pipes[0].config
    items = load_dataset(args.data, cfg0.window_len)
    if not items:
        raise DatasetError(f"{args.data}: no windows found")
    rows = []
    for path, pipe in zip(bundles, pipes):
        x = feature_matrix([i.window for i in items], pipe.config)
        y = np.array([int(i.window.label) for i in items])
        cm = _evaluate_one(pipe, x, y)
        name = pipe.metadata.get("model", pipe.kind)
        tag = f"{name}_" if args.compare else ""
        _write(out / f"{tag}confusion.csv", cm.to_csv())
        _write(out / f"{tag}rates.csv", rates_csv(cm))
        print(f"{name}: accuracy {accuracy(cm):.3f} on {cm.total} windows")
        if args.compare or args.timing:
            rows.append(_report_row(args, pipe, name, x, y, accuracy(cm)))
    if rows:
        _write(out / "comparison.csv", report_csv(rows))
        table = report_table(rows)
        _write(out / "comparison.txt", table)
        print(table, end="")
    return 0


def _report_row(args, pipe, name, x_eval, y_eval, acc_random) -> ReportRow:
    if args.train_data:
        _, x_tr, y_tr = _labeled(args, args.train_data)
    else:
        x_tr, y_tr = x_eval, y_eval
    z_tr = pipe.reduce(x_tr)
    z_eval = pipe.reduce(x_eval)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return benchmark(
            name,
            lambda: retrain_classifier(pipe, z_tr, y_tr),
            lambda model, row: model.predict(row),
            z_eval,
            repeats=args.repeats,
            accuracy_validation=pipe.metadata.get("accuracy_validation"),
            accuracy_test_split=pipe.metadata.get("accuracy_test_split"),
            accuracy_test_random=acc_random,
            iterations=pipe.metadata.get("iterations", 0),
            n_components=pipe.pca.n_components,
        )


def cmd_psd(args) -> int:
    columns: list[tuple[str, np.ndarray]] = []
    freqs = None

    def psd_of(batch):
        axes = (batch.ax, batch.ay, batch.az)
        if args.envelope:
            seg = args.segment_len
            dbs = [envelope_psd_db(a, seg) for a in axes]
            # average in linear power
            return dbs[0].freqs, to_db(np.mean([10 ** (d.values / 10) for d in dbs], axis=0))
        specs = [welch_psd(a, args.segment_len, args.overlap) for a in axes]
        return specs[0].freqs, to_db(np.mean([s.values for s in specs], axis=0))

    if args.data:
        directory = Path(args.data)
        labels = read_manifest(directory / MANIFEST_NAME)
        by_class: dict[FaultClass, list[np.ndarray]] = {}
        for name in sorted(labels):
            f, db = psd_of(read_csv(directory / name))
            freqs = f
            by_class.setdefault(labels[name], []).append(10 ** (db / 10))
        for cls in FaultClass:
            if cls in by_class:
                columns.append((cls.label, to_db(np.mean(by_class[cls], axis=0))))
    for path in args.inputs:
        f, db = psd_of(read_csv(path))
        freqs = f
        columns.append((Path(path).stem, db))
    if not columns:
        raise UsageError("give input CSV files or --data DIR")
    head = ["normalized_frequency"] + [f"db_{n}" for n, _ in columns] if len(columns) > 1 else \
        ["normalized_frequency", "db"]
    lines = [",".join(head)]
    for i, fq in enumerate(freqs):
        lines.append(",".join([repr(float(fq))] + [repr(float(c[i])) for _, c in columns]))
    _write(Path(args.out), "\n".join(lines) + "\n")
    print(f"wrote {len(freqs)} PSD rows x {len(columns)} series to {args.out}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--window-len", type=int, default=DEFAULT_WINDOW_LEN)
    common.add_argument("--wavelet", choices=[f.value for f in WaveletFamily], default="db4")
    common.add_argument("--levels", type=int, default=3)
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="vibro-fdd", description="Vibration fault detection toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--counts", type=_counts, default=DEFAULT_COUNTS)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--jitter", type=float, default=SHAFT_JITTER, help="relative shaft-speed jitter")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest-check", parents=[common], help="validate CSV files and sampling rate")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--tolerance", type=float, default=0.05)
    s.set_defaults(func=cmd_ingest_check)

    s = sub.add_parser("features", parents=[common], help="write the feature matrix of a dataset")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--denoise-raw", action="store_true")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", parents=[common], help="fit PCA and a classifier")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--model", choices=["svm", "nn"], default="svm")
    s.add_argument("--tune", type=int, default=0, metavar="N", help="Bayesian-optimization iterations")
    s.add_argument("--pca", type=int, default=18)
    s.add_argument("--box", type=float, default=300.0)
    s.add_argument("--scale", type=float, default=23.12)
    s.add_argument("--standardize", action="store_true", help="z-score PCA scores inside the SVM")
    s.add_argument("--standardize-features", action="store_true", help="z-score features before PCA")
    s.add_argument("--denoise-raw", action="store_true")
    s.add_argument("--max-iter", type=int, default=200, help="L-BFGS iterations for --model nn")
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="classify every window of a directory")
    s.add_argument("bundle")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common], help="confusion matrix, rates and comparison")
    s.add_argument("bundle", nargs="?")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--compare", nargs=2, metavar=("A", "B"))
    s.add_argument("--train-data", help="dataset used to time a classifier refit")
    s.add_argument("--timing", action="store_true", help="emit the comparison report for one bundle")
    s.add_argument("--repeats", type=int, default=5)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("psd", parents=[common], help="Welch PSD in dB as plot-ready CSV")
    s.add_argument("inputs", nargs="*")
    s.add_argument("--data", help="dataset directory; one class-averaged column per class")
    s.add_argument("--out", required=True)
    s.add_argument("--segment-len", type=int, default=256)
    s.add_argument("--overlap", type=float, default=0.5)
    s.add_argument("--envelope", action="store_true", help="PSD of the rectified signal")
    s.set_defaults(func=cmd_psd)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VibroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NumericError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IoError.exit_code


if __name__ == "__main__":
    sys.exit(main())
