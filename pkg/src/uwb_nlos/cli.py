"""Command line interface: ``uwb-nlos <subcommand> ...``.

Failures exit with status 1 and a single stderr line
``error <code>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence


from .cir import CLASSES
from .dataset import atomic_write, read_dataset, write_dataset
from .errors import NlosError
from .evaluation import (
    MODES,
    SweepSpec,
    evaluate,
    format_table,
    histogram_table,
    results_to_json,
    sweep,
)
from .features import FEATURE_NAMES, N_FEATURES, FeatureConfig, RULES, TRAPEZOID, feature_matrix
from .pipeline import (
    DEFAULT_STEP1_FEATURES,
    DEFAULT_STEP2_FEATURES,
    LabelingThresholds,
    load_bundle,
    record_label,
    save_bundle,
    train_two_step,
)
from .svm import KernelSpec, TrainConfig
from .synth import PRESETS, sample_records


def _subset(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated feature indices, got {text!r}")


def _add_feature_flags(p):
    p.add_argument("--tau-s", type=float, default=20e-9, help="pre-first-path span in seconds")
    p.add_argument("--window-start", type=float, default=-20e-9,
                   help="analysis window start relative to the first path, seconds")
    p.add_argument("--window-end", type=float, default=100e-9,
                   help="analysis window end relative to the first path, seconds")
    p.add_argument("--rule", choices=RULES, default=TRAPEZOID, help="integration rule")


def _add_threshold_flags(p):
    p.add_argument("--los-max", type=float, default=0.05, help="LOS bias bound in meters (exclusive)")
    p.add_argument("--dp-max", type=float, default=0.70, help="DP-NLOS bias bound in meters (inclusive)")


def _feature_cfg(args) -> FeatureConfig:
    return FeatureConfig(args.tau_s, (args.window_start, args.window_end), args.rule)


def _thresholds(args) -> LabelingThresholds:
    return LabelingThresholds(args.los_max, args.dp_max)


def _write_text(path: Optional[str], text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_synth(args):
    names = list(PRESETS) if args.preset == "all" else [args.preset]
    records = []
    for name in names:
        seed = [args.seed, list(PRESETS).index(name)]
        records += sample_records(PRESETS[name], args.count, seed, args.pairs)
    write_dataset(records, args.out)


def cmd_featurize(args):
    records = read_dataset(args.input)
    X = feature_matrix(records, _feature_cfg(args))
    header = list(FEATURE_NAMES)
    rows = [[repr(float(v)) for v in row] for row in X]
    if args.with_meta:
        header += ["pair_id", "label"]
        rows = [
            row + [rec.pair_id, rec.label.value if rec.label else ""]
            for row, rec in zip(rows, records)
        ]
    _write_text(args.out, _csv_text(header, rows))


def cmd_train(args):
    records = read_dataset(args.input)
    th = _thresholds(args)
    fcfg = _feature_cfg(args)
    labels = [record_label(r, th) for r in records]
    X = feature_matrix(records, fcfg)
    clf = train_two_step(
        X, labels, args.step1_features, args.step2_features,
        KernelSpec(args.kernel, args.gamma),
        TrainConfig(args.C, args.tol, args.max_passes, args.seed),
        th, fcfg,
    )
    atomic_write(args.model_out, save_bundle(clf))


def _load(args):
    clf = load_bundle(Path(args.model).read_bytes())
    records = read_dataset(args.input)
    return clf, records, feature_matrix(records, clf.feature_config)


def cmd_classify(args):
    clf, records, X = _load(args)
    pred = clf.classify_many(X)
    rows = [[k, rec.pair_id, p.value] for k, (rec, p) in enumerate(zip(records, pred))]
    _write_text(args.out, _csv_text(["index", "pair_id", "predicted"], rows))


def cmd_evaluate(args):
    clf, records, X = _load(args)
    labels = [record_label(r, clf.thresholds) for r in records]
    rates = evaluate(clf, X, labels, args.mode)
    _write_text(args.out, json.dumps(rates.as_dict(), sort_keys=True, indent=1) + "\n")


def cmd_sweep(args):
    spec = SweepSpec.load(args.spec)
    if args.seed is not None:
        spec = SweepSpec(spec.rows, spec.kernel, spec.train, args.seed, spec.train_pairs,
                         spec.train_fraction, spec.step2_mode, spec.step1_features)
    records = read_dataset(args.input)
    results = sweep(spec, records, _feature_cfg(args), _thresholds(args))
    out = Path(args.report_out)
    atomic_write(out, format_table(results))
    atomic_write(out.with_name(out.name + ".json"), results_to_json(results))


def cmd_histogram(args):
    if not 1 <= args.feature <= N_FEATURES:
        raise NlosError(f"feature index must lie in 1..{N_FEATURES}")
    records = read_dataset(args.input)
    X = feature_matrix(records, _feature_cfg(args))
    values = X[:, args.feature - 1]
    th = _thresholds(args)
    if args.by_class and all(r.label is not None or r.bias_m is not None for r in records):
        labels = [record_label(r, th) for r in records]
        groups = {c.value: values[[k for k, lab in enumerate(labels) if lab is c]] for c in CLASSES}
    else:
        groups = {"count": values}
    value_range = tuple(args.range) if args.range else None
    _write_text(args.out, histogram_table(groups, args.bins, value_range))


class _Parser(argparse.ArgumentParser):
    """Usage errors as one ``error usage: ...`` line, exit status 2."""

    def error(self, message):
        self.exit(2, f"error usage: {self.prog}: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="uwb-nlos", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset", formatter_class=fmt)
    p.add_argument("--preset", choices=list(PRESETS) + ["all"], default="all", help="scenario preset")
    p.add_argument("--count", type=int, default=100, help="records per preset")
    p.add_argument("--pairs", type=int, default=1, help="synthetic point pairs per preset")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output dataset (JSON lines)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="extract the ten features as CSV", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="input dataset")
    p.add_argument("--out", default="-", help="output CSV, - for stdout")
    p.add_argument("--with-meta", action="store_true", help="append pair_id and label columns")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a two-step classifier bundle", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="labeled training dataset")
    p.add_argument("--step1-features", type=_subset, default=DEFAULT_STEP1_FEATURES,
                   help="LOS vs NLOS feature indices, e.g. 2,4,5")
    p.add_argument("--step2-features", type=_subset, default=DEFAULT_STEP2_FEATURES,
                   help="DP vs NDP feature indices")
    p.add_argument("--kernel", choices=["rbf", "linear"], default="rbf", help="SVM kernel")
    p.add_argument("--C", type=float, default=1.0, help="box constraint")
    p.add_argument("--gamma", type=float, default=None, help="rbf gamma; 1/n_features if omitted")
    p.add_argument("--tol", type=float, default=1e-3, help="KKT tolerance")
    p.add_argument("--max-passes", type=int, default=100, help="solver budget in passes over the samples")
    p.add_argument("--seed", type=int, default=0, help="solver seed")
    p.add_argument("--model-out", required=True, help="classifier bundle to write")
    _add_feature_flags(p)
    _add_threshold_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label records with a trained bundle", formatter_class=fmt)
    p.add_argument("--model", required=True, help="classifier bundle")
    p.add_argument("--in", dest="input", required=True, help="input dataset")
    p.add_argument("--out", default="-", help="output CSV, - for stdout")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="success rates on a labeled dataset", formatter_class=fmt)
    p.add_argument("--model", required=True, help="classifier bundle")
    p.add_argument("--in", dest="input", required=True, help="labeled dataset")
    p.add_argument("--mode", choices=MODES, default="full_3class", help="evaluation mode")
    p.add_argument("--out", default="-", help="output JSON, - for stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train/evaluate feature subsets", formatter_class=fmt)
    p.add_argument("--spec", required=True, help="JSON sweep spec")
    p.add_argument("--in", dest="input", required=True, help="labeled dataset")
    p.add_argument("--report-out", required=True, help="text report; JSON sidecar gets .json appended")
    p.add_argument("--seed", type=int, default=None, help="override the seed given in the sweep file")
    _add_feature_flags(p)
    _add_threshold_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("histogram", help="histogram of one feature", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="input dataset")
    p.add_argument("--feature", type=int, default=10, help="1-based feature index")
    p.add_argument("--bins", type=int, default=50, help="number of equal-width bins")
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                   help="histogram range; data min/max if omitted")
    p.add_argument("--by-class", action=argparse.BooleanOptionalAction, default=True,
                   help="one count column per class when labels are available")
    p.add_argument("--out", default="-", help="output table, - for stdout")
    _add_feature_flags(p)
    _add_threshold_flags(p)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NlosError as exc:
        print(f"error {exc.code}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error io: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
