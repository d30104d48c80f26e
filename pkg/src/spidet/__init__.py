"""Anomaly detection that trains with privileged features and scores without them."""

from .bench import (
    BenchDataset,
    BenchInput,
    BenchmarkOptions,
    EvalReport,
    PerturbSpec,
    designate_and_perturb,
    noise_augment,
    run_benchmark,
    split_feature_spaces,
    stratified_split,
)
from .data import DatasetManifest, load_csv, load_manifest, save_manifest
from .evaluation import (
    LabeledScores,
    RankTable,
    average_precision,
    friedman_test,
    ndcg_at_k,
    nemenyi_cd,
    precision_at_k,
    roc_auc,
)
from .exceptions import BenchRunError, DataError, NumericError, SpidetError
from .forest import (
    ForestConfig,
    IsolationForest,
    IsoTree,
    fit_forest,
    forest_score,
    forest_scores,
    leaf_of,
    path_correction,
    tree_score,
    tree_score_matrix,
)
from .model_io import load_model, save_model
from .pipeline import DetectorKind, DetectorOptions, TrainedDetector, score_detector, train_detector
from .rank import (
    KernelRanker,
    KernelSpec,
    LinearRanker,
    PairTarget,
    RankerOptions,
    fit_kernel_ranker,
    fit_linear_ranker,
    kernel_rank_objective,
    linear_rank_objective,
    median_heuristic_bandwidth,
    pairwise_targets,
    predict_rank_score,
    predict_rank_scores,
    rbf_kernel,
    target_probability,
)
from .report import write_report
from .transfer import (
    FeatureTransferModel,
    FragmentSet,
    LeafScoreVector,
    RidgeRegressor,
    apply_feature_transfer,
    build_leaf_vector,
    fit_feature_transfer,
    fit_fragment_regressors,
    fit_ridge,
    leaf_vector_matrix,
    predict_fragment_matrix,
    predict_fragment_vector,
)

__version__ = "0.1.0"
