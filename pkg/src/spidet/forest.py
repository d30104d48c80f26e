"""Randomized isolation-tree ensembles.

Each tree recursively splits a uniform subsample on a random feature at a
random threshold until points are isolated, the node sample is constant,
or a depth limit is hit. A point's per-tree score is its leaf depth plus
the usual average-path-length completion for the leaf's training count,
normalized so that an "average" point scores near 1. Lower scores mean
more anomalous. The ensemble score is the sum of per-tree scores.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError

EULER_MASCHERONI = 0.5772156649


def path_correction(n: int) -> float:
    """Expected extra path length c(n) below a leaf that held n training points.

    Defined as 0 for n < 2, 1 for n = 2, and 2*H(n-1) - 2(n-1)/n otherwise,
    with the harmonic number approximated by H(i) = ln(i) + Euler-Mascheroni.
    """
    if n < 2:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_MASCHERONI) - 2.0 * (n - 1) / n


def _path_correction_array(counts: np.ndarray) -> np.ndarray:
    n = np.asarray(counts, dtype=float)
    out = np.zeros(n.shape, dtype=float)
    out[n == 2] = 1.0
    big = n > 2
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + EULER_MASCHERONI) - 2.0 * (nb - 1.0) / nb
    return out


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters for one forest: tree count, subsample size, depth cap, seed.

    ``max_depth=None`` resolves at fit time to ceil(log2(effective subsample)).
    """

    tree_count: int = 100
    subsample_size: int = 256
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise DataError("tree_count must be >= 1")
        if self.subsample_size < 2:
            raise DataError("subsample_size must be >= 2")
        if self.max_depth is not None and self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DataError("seed must fit in 64 bits")


@dataclass
class LeafAssignment:
    leaf_index: int
    depth: int
    training_count: int


@dataclass
class IsoTree:
    """One isolation tree stored as parallel node arrays.

    ``split_feature`` is -1 at leaves; ``leaf_index`` is -1 at internal nodes
    and contiguous 0..leaf_count-1 at leaves. ``training_count`` holds the
    number of subsample rows that reached each node. ``subsample_size`` is
    the effective subsample the tree was grown on and fixes the score
    normalization constant.
    """

    split_feature: np.ndarray
    split_value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    training_count: np.ndarray
    leaf_index: np.ndarray
    leaf_count: int
    feature_dim: int
    subsample_size: int
    _node_scores: np.ndarray | None = field(default=None, repr=False, compare=False)

    def node_scores(self) -> np.ndarray:
        """Per-node anomaly score (depth + c(count)) / c(subsample); valid at leaves."""
        if self._node_scores is None:
            norm = path_correction(self.subsample_size)
            raw = self.depth.astype(float) + _path_correction_array(self.training_count)
            self._node_scores = raw / norm
        return self._node_scores


@dataclass
class IsolationForest:
    trees: list[IsoTree]
    config: ForestConfig
    feature_dim: int
    subsample_size: int

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    @property
    def leaf_counts(self) -> np.ndarray:
        return np.array([t.leaf_count for t in self.trees], dtype=np.int64)

    @property
    def block_offsets(self) -> np.ndarray:
        """Start offset of each tree's leaf block in the stacked leaf space."""
        return np.concatenate([[0], np.cumsum(self.leaf_counts)])[:-1]

    @property
    def leaf_dim(self) -> int:
        return int(self.leaf_counts.sum())


def _worker_count() -> int:
    raw = os.environ.get("SPI_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def default_max_depth(effective_subsample: int) -> int:
    return max(1, math.ceil(math.log2(effective_subsample)))


def _grow_tree(points: np.ndarray, rng: np.random.Generator, max_depth: int) -> IsoTree:
    split_feature: list[int] = []
    split_value: list[float] = []
    left: list[int] = []
    right: list[int] = []
    depth: list[int] = []
    count: list[int] = []
    leaf_index: list[int] = []
    n_leaves = 0

    def add_node(d: int, m: int) -> int:
        split_feature.append(-1)
        split_value.append(0.0)
        left.append(-1)
        right.append(-1)
        depth.append(d)
        count.append(m)
        leaf_index.append(-1)
        return len(depth) - 1

    def grow(idx: np.ndarray, d: int) -> int:
        nonlocal n_leaves
        node = add_node(d, idx.size)
        if d < max_depth and idx.size > 1:
            rows = points[idx]
            lo = rows.min(axis=0)
            hi = rows.max(axis=0)
            splittable = np.nonzero(hi > lo)[0]
            if splittable.size:
                f = int(splittable[rng.integers(splittable.size)])
                v = float(rng.uniform(lo[f], hi[f]))
                if v <= lo[f]:
                    # uniform() may return its lower bound; nudge so the left
                    # child keeps at least the minimum point
                    v = float(np.nextafter(lo[f], hi[f]))
                mask = rows[:, f] < v
                split_feature[node] = f
                split_value[node] = v
                left[node] = grow(idx[mask], d + 1)
                right[node] = grow(idx[~mask], d + 1)
                return node
        leaf_index[node] = n_leaves
        n_leaves += 1
        return node

    grow(np.arange(points.shape[0]), 0)
    return IsoTree(
        split_feature=np.asarray(split_feature, dtype=np.int32),
        split_value=np.asarray(split_value, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        depth=np.asarray(depth, dtype=np.int32),
        training_count=np.asarray(count, dtype=np.int32),
        leaf_index=np.asarray(leaf_index, dtype=np.int32),
        leaf_count=n_leaves,
        feature_dim=points.shape[1],
        subsample_size=points.shape[0],
    )


def fit_forest(data: np.ndarray, config: ForestConfig) -> IsolationForest:
    """Fit ``config.tree_count`` trees on independent uniform subsamples of ``data``.

    Each tree draws its own RNG stream from the config seed keyed by tree
    index, so results are reproducible and independent of build order.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DataError("training data must be a 2-D matrix")
    n, dim = data.shape
    if n == 0:
        raise DataError("empty dataset")
    if dim == 0:
        raise DataError("no features")
    if n == 1:
        raise DataError("need at least 2 rows to fit a forest")

    eff = min(config.subsample_size, n)
    max_depth = config.max_depth if config.max_depth is not None else default_max_depth(eff)

    def build(k: int) -> IsoTree:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(config.seed), spawn_key=(k,)))
        idx = rng.choice(n, size=eff, replace=False) if eff < n else np.arange(n)
        return _grow_tree(data[idx], rng, max_depth)

    workers = _worker_count()
    if workers > 1 and config.tree_count > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(build, range(config.tree_count)))
    else:
        trees = [build(k) for k in range(config.tree_count)]
    return IsolationForest(trees=trees, config=config, feature_dim=dim, subsample_size=eff)


def _route_nodes(tree: IsoTree, X: np.ndarray) -> np.ndarray:
    """Vectorized routing: final node position for every row of X."""
    nodes = np.zeros(X.shape[0], dtype=np.int64)
    pending = np.nonzero(tree.split_feature[nodes] >= 0)[0]
    while pending.size:
        cur = nodes[pending]
        f = tree.split_feature[cur]
        v = tree.split_value[cur]
        go_left = X[pending, f] < v
        nodes[pending] = np.where(go_left, tree.left[cur], tree.right[cur])
        pending = pending[tree.split_feature[nodes[pending]] >= 0]
    return nodes


def _check_dim(dim: int, expected: int):
    if dim != expected:
        raise DataError(f"feature dimension mismatch: got {dim}, expected {expected}")


def leaf_of(tree: IsoTree, x: np.ndarray) -> LeafAssignment:
    """Route one point to its leaf; returns leaf index, depth, and training count."""
    x = np.asarray(x, dtype=np.float64).ravel()
    _check_dim(x.size, tree.feature_dim)
    node = int(_route_nodes(tree, x[None, :])[0])
    return LeafAssignment(
        leaf_index=int(tree.leaf_index[node]),
        depth=int(tree.depth[node]),
        training_count=int(tree.training_count[node]),
    )


def tree_score(tree: IsoTree, x: np.ndarray) -> float:
    """Anomaly score of one point under one tree; lower is more anomalous."""
    x = np.asarray(x, dtype=np.float64).ravel()
    _check_dim(x.size, tree.feature_dim)
    node = int(_route_nodes(tree, x[None, :])[0])
    return float(tree.node_scores()[node])


def forest_assignments(forest: IsolationForest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Occupied leaf index and per-tree score for every (row, tree) pair.

    Returns two (n, tree_count) arrays; the score array row-sums equal
    :func:`forest_scores`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim(X.shape[1], forest.feature_dim)
    n = X.shape[0]
    leaves = np.empty((n, forest.tree_count), dtype=np.int64)
    scores = np.empty((n, forest.tree_count), dtype=np.float64)
    for k, tree in enumerate(forest.trees):
        nodes = _route_nodes(tree, X)
        leaves[:, k] = tree.leaf_index[nodes]
        scores[:, k] = tree.node_scores()[nodes]
    return leaves, scores


def tree_score_matrix(forest: IsolationForest, X: np.ndarray) -> np.ndarray:
    return forest_assignments(forest, X)[1]


def forest_scores(forest: IsolationForest, X: np.ndarray) -> np.ndarray:
    """Ensemble score (sum over trees) for every row of X; lower = more anomalous."""
    return forest_assignments(forest, X)[1].sum(axis=1)


def forest_score(forest: IsolationForest, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    return float(forest_scores(forest, x[None, :])[0])
