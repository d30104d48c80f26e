"""Command-line surface.

Subcommands: perturb (build a synthetic-PI benchmark from a CSV), train,
score, eval, and bench. Exit codes: 0 success, 1 usage error, 2 data
error, 3 numeric failure. Every command is deterministic given --seed;
SPI_THREADS caps internal parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    BenchInput,
    BenchmarkOptions,
    PerturbSpec,
    designate_and_perturb,
    noise_augment,
    run_benchmark,
    split_feature_spaces,
)
from .data import DatasetManifest, load_csv, load_manifest, load_numeric_csv, read_csv_table, save_manifest
from .evaluation import LabeledScores, average_precision, ndcg_at_k, precision_at_k, roc_auc
from .exceptions import BenchRunError, DataError, NumericError
from .model_io import load_model, save_model
from .pipeline import DetectorKind, DetectorOptions, score_detector, train_detector
from .rank import RankerOptions
from .report import write_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spidet", description="Privileged-information anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", parents=[], help="build a synthetic-PI benchmark from a CSV")
    p.add_argument("csv", help="input CSV (normal observations for subset protocol)")
    p.add_argument("--p", type=int, required=True, dest="pi_features",
                   help="number of perturbed / privileged-candidate features")
    p.add_argument("--gamma", type=float, required=True,
                   help="fraction of those features kept in the privileged space")
    p.add_argument("--fraction", type=float, default=0.1, help="fraction of rows to designate anomalous")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--protocol", choices=("subset", "noise"), default="subset")
    p.add_argument("--label-column", default=None,
                   help="ground-truth label column (required for the noise protocol)")
    p.add_argument("-o", "--out", required=True, help="output directory for data.csv + manifest.json")

    t = sub.add_parser("train", help="train a detector from a manifest")
    t.add_argument("--kind", required=True, choices=[k.value for k in DetectorKind])
    t.add_argument("--manifest", required=True)
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--privileged-trees", type=int, default=None)
    t.add_argument("--subsample", type=int, default=256)
    t.add_argument("--max-depth", type=int, default=None)
    t.add_argument("--lambda", type=float, default=1.0, dest="ridge_lambda")
    t.add_argument("--ranker", choices=("linear", "kernel"), default="linear")
    t.add_argument("--max-pairs", type=int, default=100_000)
    t.add_argument("--bandwidth", type=float, default=None, help="RBF bandwidth (default: median heuristic)")
    t.add_argument("--ft-true-privileged", action="store_true",
                   help="train the feature-transfer forest on true privileged features")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("-o", "--out", required=True, help="output model JSON path")

    s = sub.add_parser("score", help="score a test manifest with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("-o", "--out", required=True, help="output scores.csv path")

    e = sub.add_parser("eval", help="compute ranking metrics from scores and labels")
    e.add_argument("--scores", required=True, help="scores.csv from the score command")
    e.add_argument("--labels", required=True, help="CSV with a 'label' column (or a single column)")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("-o", "--out", required=True, help="output metrics JSON path")

    b = sub.add_parser("bench", help="run the benchmark grid described by a config file")
    b.add_argument("--config", required=True)
    b.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    b.add_argument("-o", "--out", required=True, help="output report directory")

    return parser


def _write_benchmark_csv(path: Path, header: list[str], matrix: np.ndarray, labels: np.ndarray | None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(header) + (["label"] if labels is not None else [])
        w.writerow(cols)
        for r in range(matrix.shape[0]):
            row = [_fmt(v) for v in matrix[r]]
            if labels is not None:
                row.append(str(int(labels[r])))
            w.writerow(row)


def cmd_perturb(args) -> int:
    outdir = Path(args.out)
    if args.protocol == "subset":
        names, data = load_numeric_csv(args.csv, exclude=[args.label_column] if args.label_column else None)
        if "label" in names:
            raise DataError("input already has a 'label' column; rename it first")
        spec = PerturbSpec(
            pi_feature_count=args.pi_features,
            gamma=args.gamma,
            anomaly_fraction=args.fraction,
            seed=args.seed,
        )
        bd = designate_and_perturb(data, spec)
        # reassemble the perturbed matrix in original column order
        full = data.copy()
        full[:, bd.primary_columns] = bd.x
        full[:, bd.privileged_columns] = bd.x_star
        labels = bd.labels
        privileged_names = [names[c] for c in bd.privileged_columns]
        primary_names = [names[c] for c in bd.primary_columns]
        matrix, header = full, names
    else:
        if not args.label_column:
            raise DataError("the noise protocol needs --label-column with ground-truth labels")
        header_all, rows = read_csv_table(args.csv)
        if args.label_column not in header_all:
            raise DataError(f"column not found: {args.label_column}")
        names, data = load_numeric_csv(args.csv, exclude=[args.label_column])
        label_manifest = DatasetManifest(
            csv_path=args.csv, primary_columns=names, label_column=args.label_column,
            base_dir=Path.cwd(),
        )
        _, _, labels = load_csv(label_manifest)
        augmented, orig_cols, noise_cols = noise_augment(data, args.seed)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(args.seed), spawn_key=(1,)))
        pi_cols, primary_cols = split_feature_spaces(orig_cols, noise_cols, args.gamma, rng)
        width = max(len(str(len(noise_cols))), 4)
        header = names + [f"noise_{i:0{width}d}" for i in range(len(noise_cols))]
        privileged_names = [header[c] for c in pi_cols]
        primary_names = [header[c] for c in primary_cols]
        matrix = augmented

    outdir.mkdir(parents=True, exist_ok=True)
    _write_benchmark_csv(outdir / "data.csv", header, matrix, labels)
    manifest = DatasetManifest(
        csv_path="data.csv",
        primary_columns=primary_names,
        privileged_columns=privileged_names,
        label_column="label",
    )
    save_manifest(manifest, outdir / "manifest.json")
    print(f"wrote {outdir / 'data.csv'} and {outdir / 'manifest.json'}")
    return EXIT_OK


def _detector_options_from_args(args) -> DetectorOptions:
    return DetectorOptions(
        tree_count=args.trees,
        privileged_tree_count=args.privileged_trees,
        subsample_size=args.subsample,
        max_depth=args.max_depth,
        ridge_lambda=args.ridge_lambda,
        ft_on_true_privileged=args.ft_true_privileged,
        seed=args.seed,
        ranker=RankerOptions(
            use_kernel=args.ranker == "kernel",
            max_pairs=args.max_pairs,
            bandwidth=args.bandwidth,
        ),
    )


def cmd_train(args) -> int:
    kind = DetectorKind.from_string(args.kind)
    manifest = load_manifest(args.manifest)
    x, x_star, _ = load_csv(manifest)
    if kind is not DetectorKind.IF and x_star is None:
        raise DataError(f"kind '{kind.value}' needs privileged_columns in the manifest")
    opts = _detector_options_from_args(args)
    model = train_detector(kind, x, x_star, opts)
    model.metadata = {
        "tool": "spidet",
        "tool_version": "0.1.0",
        "primary_columns": manifest.primary_columns,
        "privileged_columns": manifest.privileged_columns,
    }
    save_model(model, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    model = load_model(args.model)
    manifest = load_manifest(args.manifest)
    if model.kind is DetectorKind.IF_STAR:
        if not manifest.privileged_columns:
            raise DataError("the privileged-space reference detector needs privileged_columns at score time")
        _, x_input, _ = load_csv(manifest)
    else:
        if manifest.privileged_columns:
            raise DataError("privileged features forbidden at test time")
        x_input, _, _ = load_csv(manifest)
    scores = score_detector(model, x_input)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "score"])
        for i, v in enumerate(scores):
            w.writerow([i, _fmt(v)])
    print(f"wrote {args.out} ({scores.size} rows, lower = more anomalous)")
    return EXIT_OK


def _load_scores_csv(path: str) -> np.ndarray:
    header, rows = read_csv_table(path)
    if header[:2] != ["row_index", "score"]:
        raise DataError(f"{path} is not a scores.csv (expected columns row_index,score)")
    return np.array([float(r[1]) for r in rows], dtype=np.float64)


def _load_labels_file(path: str) -> np.ndarray:
    header, rows = read_csv_table(path)
    if "label" in header:
        col = header.index("label")
    elif len(header) == 1:
        col = 0
    else:
        raise DataError(f"{path} needs a 'label' column or exactly one column")
    values = []
    for r, row in enumerate(rows, start=1):
        v = row[col].strip()
        if v not in ("0", "1", "0.0", "1.0"):
            raise DataError(f"{path}: label at row {r} must be 0 or 1, got {v!r}")
        values.append(int(float(v)))
    return np.asarray(values, dtype=np.int64)


def cmd_eval(args) -> int:
    scores = _load_scores_csv(args.scores)
    labels = _load_labels_file(args.labels)
    if scores.size != labels.size:
        raise DataError(f"{scores.size} scores but {labels.size} labels")
    s = LabeledScores.from_detector(scores, labels)
    doc = {
        "count": int(scores.size),
        "positives": int(labels.sum()),
        "k": args.k,
        "map": average_precision(s),
        "roc_auc": roc_auc(s),
        f"ndcg_at_{args.k}": ndcg_at_k(s, args.k),
        f"precision_at_{args.k}": precision_at_k(s, args.k),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def _bench_options_from_config(cfg: dict) -> BenchmarkOptions:
    det = cfg.get("detector", {})
    ranker = RankerOptions(
        use_kernel=det.get("ranker", "linear") == "kernel",
        max_pairs=int(det.get("max_pairs", 100_000)),
        bandwidth=det.get("bandwidth"),
    )
    detector = DetectorOptions(
        tree_count=int(det.get("trees", 100)),
        privileged_tree_count=det.get("privileged_trees"),
        subsample_size=int(det.get("subsample", 256)),
        max_depth=det.get("max_depth"),
        ridge_lambda=float(det.get("lambda", 1.0)),
        ranker=ranker,
    )
    return BenchmarkOptions(
        protocol=cfg.get("protocol", "subset"),
        pi_feature_count=int(cfg.get("pi_features", 10)),
        anomaly_fraction=float(cfg.get("anomaly_fraction", 0.1)),
        train_fraction=float(cfg.get("train_fraction", 0.5)),
        detector=detector,
        seed=int(cfg.get("seed", 0)),
    )


def cmd_bench(args) -> int:
    cfg_path = Path(args.config)
    try:
        cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"config not found: {cfg_path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config {cfg_path}: {exc}") from None

    ds_specs = cfg.get("datasets") or []
    if not ds_specs:
        raise DataError("config lists no datasets")
    datasets = []
    for spec in ds_specs:
        csv_path = Path(spec["csv"])
        if not csv_path.is_absolute():
            csv_path = cfg_path.parent / csv_path
        label_column = spec.get("label_column")
        _, data = load_numeric_csv(csv_path, exclude=[label_column] if label_column else None)
        labels = None
        if label_column:
            header, rows = read_csv_table(csv_path)
            if label_column not in header:
                raise DataError(f"column not found: {label_column}")
            col = header.index(label_column)
            labels = np.array([int(float(r[col])) for r in rows], dtype=np.int64)
        datasets.append(BenchInput(name=spec.get("name", csv_path.stem), data=data, labels=labels))

    kinds = [DetectorKind.from_string(k) for k in cfg.get("kinds", ["if", "spi"])]
    gammas = [float(g) for g in cfg.get("gammas", [0.7])]
    runs = int(cfg.get("runs", 5))
    options = _bench_options_from_config(cfg)
    report = run_benchmark(datasets, kinds, gammas, runs, options)
    figures = bool(cfg.get("figures", True)) and not args.no_figures
    created = write_report(report, args.out, figures=figures)
    for pth in created:
        print(f"wrote {pth}")
    return EXIT_OK


_HANDLERS = {
    "perturb": cmd_perturb,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except DataError as exc:
        print(f"spidet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BenchRunError as exc:
        print(f"spidet: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"spidet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"spidet: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
