"""End-to-end detectors.

Five kinds share one train/score interface. The full transfer pipeline
fits a privileged-space forest, a decision-space forest, per-privileged-
tree fragment regressors over leaf-score vectors, and a pairwise ranker
that mimics the privileged ranking; the "lite" variant replaces fragments
and ranker with a single regressor onto the privileged ensemble score.
The feature-transfer baseline regresses primary onto privileged features
and runs a forest in the predicted space. Plain forests on either space
round out the set; the privileged-space forest is reference-only since it
needs privileged columns at test time.

All detectors emit scores where lower = more anomalous. The ranker's raw
output runs the other way (it tracks the negated privileged score), so
the full pipeline negates it here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DataError
from .forest import ForestConfig, IsolationForest, default_max_depth, fit_forest, forest_scores, tree_score_matrix
from .rank import (
    KernelRanker,
    KernelSpec,
    LinearRanker,
    RankerOptions,
    fit_kernel_ranker,
    fit_linear_ranker,
    pairwise_targets,
    predict_rank_scores,
)
from .transfer import (
    FeatureTransferModel,
    FragmentSet,
    RidgeRegressor,
    apply_feature_transfer,
    fit_feature_transfer,
    fit_fragment_regressors,
    fit_ridge,
    leaf_vector_matrix,
    predict_fragment_matrix,
)


class DetectorKind(str, enum.Enum):
    IF = "if"
    IF_STAR = "if-star"
    FT = "ft"
    SPI_LITE = "spi-lite"
    SPI = "spi"

    @classmethod
    def from_string(cls, name: str) -> "DetectorKind":
        try:
            return cls(name.strip().lower().replace("_", "-"))
        except ValueError:
            raise DataError(f"unknown detector kind: {name}") from None


@dataclass
class DetectorOptions:
    tree_count: int = 100
    privileged_tree_count: int | None = None  # default: same as tree_count
    subsample_size: int = 256
    max_depth: int | None = None
    ridge_lambda: float = 1.0
    ranker: RankerOptions = field(default_factory=RankerOptions)
    ft_on_true_privileged: bool = False
    seed: int = 0


@dataclass
class TrainedDetector:
    kind: DetectorKind
    feature_dim: int
    options: DetectorOptions
    decision_forest: IsolationForest | None = None
    privileged_forest: IsolationForest | None = None
    fragments: FragmentSet | None = None
    ranker: LinearRanker | KernelRanker | None = None
    lite_regressor: RidgeRegressor | None = None
    ft_model: FeatureTransferModel | None = None
    ft_forest: IsolationForest | None = None
    metadata: dict | None = None


def _subseed(seed: int, key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(key),))
    return int(ss.generate_state(1, np.uint64)[0])


def _forest_config(opts: DetectorOptions, tree_count: int, n_rows: int, seed: int) -> ForestConfig:
    eff = min(opts.subsample_size, n_rows)
    depth = opts.max_depth if opts.max_depth is not None else default_max_depth(eff)
    return ForestConfig(
        tree_count=tree_count,
        subsample_size=opts.subsample_size,
        max_depth=depth,
        seed=seed,
    )


def _validate_training_inputs(kind, x, x_star):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] < 4:
        raise DataError("need at least 4 training rows")
    if kind is not DetectorKind.IF:
        if x_star is None:
            raise DataError(f"privileged training data required for kind '{kind.value}'")
        x_star = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
        if x_star.shape[0] != x.shape[0]:
            raise DataError("row count mismatch between primary and privileged data")
    return x, x_star


def _fit_ranker(phi: np.ndarray, pairs, ropts: RankerOptions):
    if ropts.use_kernel:
        kernel = None
        if ropts.bandwidth is not None:
            kernel = KernelSpec(kind="rbf", bandwidth=ropts.bandwidth)
        return fit_kernel_ranker(phi, pairs, kernel=kernel, opts=ropts)
    return fit_linear_ranker(phi, pairs, opts=ropts)


def train_detector(
    kind: DetectorKind,
    x: np.ndarray,
    x_star: np.ndarray | None = None,
    options: DetectorOptions | None = None,
) -> TrainedDetector:
    """Train one detector; privileged data is required for every kind except the plain forest."""
    opts = options or DetectorOptions()
    x, x_star = _validate_training_inputs(kind, x, x_star)
    n = x.shape[0]
    t = opts.tree_count
    t_star = opts.privileged_tree_count if opts.privileged_tree_count is not None else t
    seed = opts.seed

    if kind is DetectorKind.IF:
        forest = fit_forest(x, _forest_config(opts, t, n, _subseed(seed, 1)))
        return TrainedDetector(kind=kind, feature_dim=x.shape[1], options=opts, decision_forest=forest)

    if kind is DetectorKind.IF_STAR:
        # reference mode: the privileged space is this detector's scoring space
        forest = fit_forest(x_star, _forest_config(opts, t_star, n, _subseed(seed, 0)))
        return TrainedDetector(kind=kind, feature_dim=x_star.shape[1], options=opts, decision_forest=forest)

    if kind is DetectorKind.FT:
        ft_model = fit_feature_transfer(x, x_star, opts.ridge_lambda)
        train_space = x_star if opts.ft_on_true_privileged else apply_feature_transfer(ft_model, x)
        ft_forest = fit_forest(train_space, _forest_config(opts, t, n, _subseed(seed, 3)))
        return TrainedDetector(
            kind=kind, feature_dim=x.shape[1], options=opts, ft_model=ft_model, ft_forest=ft_forest
        )

    privileged = fit_forest(x_star, _forest_config(opts, t_star, n, _subseed(seed, 0)))
    decision = fit_forest(x, _forest_config(opts, t, n, _subseed(seed, 1)))
    Z = leaf_vector_matrix(decision, x)
    fragment_targets = tree_score_matrix(privileged, x_star)
    s_star = fragment_targets.sum(axis=1)

    if kind is DetectorKind.SPI_LITE:
        lite = fit_ridge(Z, s_star, opts.ridge_lambda)
        return TrainedDetector(
            kind=kind,
            feature_dim=x.shape[1],
            options=opts,
            decision_forest=decision,
            privileged_forest=privileged,
            lite_regressor=lite,
        )

    if kind is DetectorKind.SPI:
        fragments = fit_fragment_regressors(Z, privileged, x_star, opts.ridge_lambda)
        phi = predict_fragment_matrix(fragments, Z)
        pairs = pairwise_targets(s_star, opts.ranker.max_pairs, _subseed(seed, 2))
        ranker = _fit_ranker(phi, pairs, opts.ranker)
        return TrainedDetector(
            kind=kind,
            feature_dim=x.shape[1],
            options=opts,
            decision_forest=decision,
            privileged_forest=privileged,
            fragments=fragments,
            ranker=ranker,
        )

    raise DataError(f"unknown detector kind: {kind}")


def _check_test_matrix(model: TrainedDetector, x_test: np.ndarray) -> np.ndarray:
    x_test = np.atleast_2d(np.asarray(x_test, dtype=np.float64))
    got = x_test.shape[1]
    expected = model.feature_dim
    if got == expected:
        return x_test
    if model.kind is not DetectorKind.IF_STAR and got > expected:
        raise DataError("privileged features forbidden at test time")
    raise DataError(f"feature dimension mismatch: got {got}, expected {expected}")


def score_detector(model: TrainedDetector, x_test: np.ndarray) -> np.ndarray:
    """Anomaly scores for test rows; lower = more anomalous. Reads primary features only."""
    x_test = _check_test_matrix(model, x_test)

    if model.kind in (DetectorKind.IF, DetectorKind.IF_STAR):
        return forest_scores(model.decision_forest, x_test)

    if model.kind is DetectorKind.FT:
        predicted = apply_feature_transfer(model.ft_model, x_test)
        return forest_scores(model.ft_forest, predicted)

    Z = leaf_vector_matrix(model.decision_forest, x_test)

    if model.kind is DetectorKind.SPI_LITE:
        w = model.lite_regressor.weights
        return np.asarray(Z @ w).ravel() + model.lite_regressor.intercept

    phi = predict_fragment_matrix(model.fragments, Z)
    # ranker output is anti-monotone in the privileged score; flip it back
    return -predict_rank_scores(model.ranker, phi)


def clone_options(options: DetectorOptions, **changes) -> DetectorOptions:
    """Copy options with replacements, deep-copying the nested ranker options."""
    ranker = replace(options.ranker)
    return replace(options, ranker=ranker, **changes)
