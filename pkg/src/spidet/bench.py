"""Synthetic-PI benchmark construction and the multi-seed experiment runner.

Protocol "subset" takes a matrix of normal observations, designates a
fraction of rows as anomalies by adding per-column variance-matched
Gaussian noise on a random column subset, then splits the perturbed
columns between the privileged and primary spaces by gamma. Protocol
"noise" keeps the original features as privileged material (gamma-split)
and pads the primary space with low-amplitude Gaussian noise columns;
ground-truth labels must come with the data.

Every (dataset, gamma, run) cell derives its own RNG streams from the
master seed keyed by dataset name, gamma, and run index, so adding
datasets, gammas, runs, or detector kinds never shifts existing results.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .evaluation import (
    LabeledScores,
    RankTable,
    average_precision,
    friedman_test,
    ndcg_at_k,
    nemenyi_cd,
    precision_at_k,
    rank_rows,
    roc_auc,
)
from .exceptions import BenchRunError, DataError
from .pipeline import DetectorKind, DetectorOptions, clone_options, score_detector, train_detector

METRIC_NAMES = ("map", "auc", "ndcg_at_10", "precision_at_10")
_KIND_SEED_BASE = 10
_KIND_SEED_OFFSET = {
    DetectorKind.IF: 0,
    DetectorKind.IF_STAR: 1,
    DetectorKind.FT: 2,
    DetectorKind.SPI_LITE: 3,
    DetectorKind.SPI: 4,
}


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PerturbSpec:
    pi_feature_count: int
    gamma: float
    anomaly_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.anomaly_fraction < 1.0:
            raise DataError("anomaly_fraction must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise DataError("gamma must be in (0, 1]")
        if self.pi_feature_count < 1:
            raise DataError("pi_feature_count must be >= 1")


@dataclass
class BenchDataset:
    """Perturbed data split into primary (x) and privileged (x_star) spaces.

    The column index lists refer to the source matrix and are kept in
    ascending order; together they partition its columns.
    """

    x: np.ndarray
    x_star: np.ndarray
    labels: np.ndarray
    primary_columns: list[int]
    privileged_columns: list[int]


def split_feature_spaces(
    perturbed_cols: list[int],
    other_cols: list[int],
    gamma: float,
    rng: np.random.Generator,
) -> tuple[list[int], list[int]]:
    """Move round(gamma * p) of the perturbed columns into the privileged space.

    The rest of the perturbed columns join the others as primary features.
    """
    if not 0.0 < gamma <= 1.0:
        raise DataError("gamma must be in (0, 1]")
    p = len(perturbed_cols)
    n_pi = min(p, round_half_up(gamma * p))
    take = rng.choice(p, size=n_pi, replace=False)
    perturbed = np.asarray(perturbed_cols)
    pi_cols = sorted(int(c) for c in perturbed[take])
    rest = sorted(set(map(int, perturbed_cols)) - set(pi_cols))
    primary_cols = sorted(rest + [int(c) for c in other_cols])
    return pi_cols, primary_cols


def designate_and_perturb(normals: np.ndarray, spec: PerturbSpec) -> BenchDataset:
    """Plant anomalies into normal rows and split feature spaces by gamma.

    A round(fraction * n) row subset gets zero-mean Gaussian noise with
    per-column variance matching the column's empirical variance, on a
    uniformly chosen subset of ``pi_feature_count`` columns. Rows and
    columns outside those subsets are untouched.
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    n, total_cols = normals.shape
    if n < 10:
        raise DataError("need at least 10 rows")
    if spec.pi_feature_count > total_cols:
        raise DataError(
            f"pi_feature_count {spec.pi_feature_count} exceeds column count {total_cols}"
        )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(spec.seed)))
    n_anom = max(1, round_half_up(spec.anomaly_fraction * n))
    rows = np.sort(rng.choice(n, size=n_anom, replace=False))
    cols = np.sort(rng.choice(total_cols, size=spec.pi_feature_count, replace=False))
    stds = normals[:, cols].std(axis=0)
    data = normals.copy()
    data[np.ix_(rows, cols)] += rng.normal(0.0, 1.0, size=(n_anom, cols.size)) * stds[None, :]
    labels = np.zeros(n, dtype=np.int64)
    labels[rows] = 1
    other = [c for c in range(total_cols) if c not in set(cols.tolist())]
    pi_cols, primary_cols = split_feature_spaces([int(c) for c in cols], other, spec.gamma, rng)
    return BenchDataset(
        x=data[:, primary_cols],
        x_star=data[:, pi_cols],
        labels=labels,
        primary_columns=primary_cols,
        privileged_columns=pi_cols,
    )


def noise_augment(original: np.ndarray, seed: int) -> tuple[np.ndarray, list[int], list[int]]:
    """Append 10x as many Gaussian noise columns as the original has features.

    Noise is drawn from N(0.01*mu, 0.01*sigma) with mu and sigma the mean
    and standard deviation over all original entries. Returns the augmented
    matrix plus the original and noise column index lists; the original
    columns are the privileged material for the later gamma split.
    """
    original = np.atleast_2d(np.asarray(original, dtype=np.float64))
    n, p = original.shape
    if p < 1:
        raise DataError("no features")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    mu = float(original.mean())
    sigma = float(original.std())
    noise = rng.normal(0.01 * mu, 0.01 * sigma, size=(n, 10 * p)) if sigma > 0 else np.full(
        (n, 10 * p), 0.01 * mu
    )
    augmented = np.hstack([original, noise])
    return augmented, list(range(p)), list(range(p, 11 * p))


@dataclass
class SplitData:
    x: np.ndarray
    x_star: np.ndarray
    labels: np.ndarray


def stratified_split(
    dataset: BenchDataset, train_fraction: float, seed: int
) -> tuple[SplitData, SplitData]:
    """Split rows preserving class proportions within one row; deterministic by seed.

    Per-class train counts round half-up and are clamped so both sides
    keep at least one member of each class.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must be in (0, 1)")
    labels = dataset.labels
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in (0, 1):
        members = np.nonzero(labels == cls)[0]
        if members.size < 2:
            raise DataError(f"class {cls} has fewer than 2 members")
        order = rng.permutation(members.size)
        take = min(max(round_half_up(train_fraction * members.size), 1), members.size - 1)
        train_idx.append(members[order[:take]])
        test_idx.append(members[order[take:]])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    mk = lambda idx: SplitData(x=dataset.x[idx], x_star=dataset.x_star[idx], labels=labels[idx])
    return mk(tr), mk(te)


@dataclass
class BenchInput:
    """One benchmark dataset: normal rows (subset protocol) or labeled rows (noise)."""

    name: str
    data: np.ndarray
    labels: np.ndarray | None = None


@dataclass
class BenchmarkOptions:
    protocol: str = "subset"
    pi_feature_count: int = 10
    anomaly_fraction: float = 0.1
    train_fraction: float = 0.5
    detector: DetectorOptions = field(default_factory=DetectorOptions)
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in ("subset", "noise"):
            raise DataError(f"unknown protocol: {self.protocol}")


@dataclass
class EvalReport:
    kinds: list[str]
    row_keys: list[tuple[str, float]]
    means: dict[str, np.ndarray]  # metric name -> (rows, kinds) matrix
    rank_table: RankTable
    chi2: float | None
    p_value: float | None
    cd: float | None
    config: dict


def _cell_seed(master: int, name: str, gamma: float, run: int, slot: int) -> int:
    key = (
        zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF,
        int(round(gamma * 1_000_000)),
        int(run),
        int(slot),
    )
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _build_cell_dataset(ds: BenchInput, gamma: float, run: int, opts: BenchmarkOptions) -> BenchDataset:
    seed0 = _cell_seed(opts.seed, ds.name, gamma, run, 0)
    if opts.protocol == "subset":
        spec = PerturbSpec(
            pi_feature_count=opts.pi_feature_count,
            gamma=gamma,
            anomaly_fraction=opts.anomaly_fraction,
            seed=seed0,
        )
        return designate_and_perturb(ds.data, spec)
    if ds.labels is None:
        raise DataError(f"dataset '{ds.name}' needs ground-truth labels for the noise protocol")
    augmented, orig_cols, noise_cols = noise_augment(ds.data, seed0)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=int(_cell_seed(opts.seed, ds.name, gamma, run, 1)))
    )
    pi_cols, primary_cols = split_feature_spaces(orig_cols, noise_cols, gamma, rng)
    return BenchDataset(
        x=augmented[:, primary_cols],
        x_star=augmented[:, pi_cols],
        labels=np.asarray(ds.labels).ravel().astype(np.int64),
        primary_columns=primary_cols,
        privileged_columns=pi_cols,
    )


def _score_cell(kind: DetectorKind, train: SplitData, test: SplitData, opts: DetectorOptions) -> np.ndarray:
    model = train_detector(kind, train.x, train.x_star, opts)
    test_input = test.x_star if kind is DetectorKind.IF_STAR else test.x
    return score_detector(model, test_input)


def _cell_metrics(scores: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    s = LabeledScores.from_detector(scores, labels)
    return {
        "map": average_precision(s),
        "auc": roc_auc(s),
        "ndcg_at_10": ndcg_at_k(s, 10),
        "precision_at_10": precision_at_k(s, 10),
    }


def run_benchmark(
    datasets: list[BenchInput],
    detector_kinds: list[DetectorKind],
    gammas: list[float],
    runs: int,
    options: BenchmarkOptions | None = None,
) -> EvalReport:
    """Run the full perturb/split/train/score/evaluate grid and aggregate.

    Metric cells average over runs; the rank table (by mean average
    precision) has one row per (dataset, gamma) and feeds the Friedman
    test and the Nemenyi critical difference.
    """
    opts = options or BenchmarkOptions()
    if not datasets:
        raise DataError("need at least 1 dataset")
    if not detector_kinds:
        raise DataError("need at least 1 detector kind")
    if runs < 1:
        raise DataError("need at least 1 run")
    kinds = list(detector_kinds)

    row_keys = [(ds.name, float(g)) for ds in datasets for g in gammas]
    sums = {m: np.zeros((len(row_keys), len(kinds))) for m in METRIC_NAMES}

    row = 0
    for ds in datasets:
        for gamma in gammas:
            for run in range(runs):
                try:
                    bd = _build_cell_dataset(ds, gamma, run, opts)
                    split_seed = _cell_seed(opts.seed, ds.name, gamma, run, 2)
                    train, test = stratified_split(bd, opts.train_fraction, split_seed)
                    for col, kind in enumerate(kinds):
                        kseed = _cell_seed(
                            opts.seed, ds.name, gamma, run, _KIND_SEED_BASE + _KIND_SEED_OFFSET[kind]
                        )
                        dopts = clone_options(opts.detector, seed=kseed)
                        scores = _score_cell(kind, train, test, dopts)
                        for m, v in _cell_metrics(scores, test.labels).items():
                            sums[m][row, col] += v
                except Exception as exc:
                    raise BenchRunError(
                        f"benchmark cell failed (dataset={ds.name}, gamma={gamma}, run={run}): {exc}"
                    ) from exc
            row += 1

    means = {m: sums[m] / runs for m in METRIC_NAMES}

    map_table = means["map"]
    if len(row_keys) >= 2 and len(kinds) >= 2:
        rank_table, chi2, p_value = friedman_test(map_table)
    else:
        ranks = rank_rows(map_table)
        rank_table = RankTable(ranks=ranks, average=ranks.mean(axis=0))
        chi2, p_value = None, None
    try:
        cd = nemenyi_cd(len(kinds), len(row_keys)) if len(kinds) >= 2 else None
    except DataError:
        cd = None

    config = {
        "protocol": opts.protocol,
        "pi_feature_count": opts.pi_feature_count,
        "anomaly_fraction": opts.anomaly_fraction,
        "train_fraction": opts.train_fraction,
        "rounding": "half-up",
        "seed": opts.seed,
        "runs": runs,
        "gammas": [float(g) for g in gammas],
        "kinds": [k.value for k in kinds],
        "detector": {
            "tree_count": opts.detector.tree_count,
            "privileged_tree_count": opts.detector.privileged_tree_count,
            "subsample_size": opts.detector.subsample_size,
            "max_depth": opts.detector.max_depth,
            "ridge_lambda": opts.detector.ridge_lambda,
            "ranker": "kernel" if opts.detector.ranker.use_kernel else "linear",
            "max_pairs": opts.detector.ranker.max_pairs,
        },
    }
    return EvalReport(
        kinds=[k.value for k in kinds],
        row_keys=row_keys,
        means=means,
        rank_table=rank_table,
        chi2=chi2,
        p_value=p_value,
        cd=cd,
        config=config,
    )
