import json
import math

import numpy as np
import pytest

from spidet.exceptions import DataError
from spidet.forest import (
    EULER_MASCHERONI,
    ForestConfig,
    fit_forest,
    forest_score,
    forest_scores,
    leaf_of,
    path_correction,
    tree_score,
)
from spidet.model_io import _forest_to_dict


def test_path_correction_small_values():
    assert path_correction(0) == 0.0
    assert path_correction(1) == 0.0
    assert path_correction(2) == 1.0
    # hand evaluation of 2*(ln 2 + gamma) - 4/3
    expected = 2 * (math.log(2) + EULER_MASCHERONI) - 4.0 / 3.0
    assert path_correction(3) == pytest.approx(expected, abs=1e-12)
    assert path_correction(3) == pytest.approx(1.207392, abs=1e-6)


def test_path_correction_monotone():
    values = [path_correction(n) for n in range(2, 200)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_two_point_tree_has_forced_split():
    data = np.array([[0.0], [1.0]])
    forest = fit_forest(data, ForestConfig(tree_count=1, subsample_size=2, max_depth=8, seed=5))
    tree = forest.trees[0]
    assert tree.leaf_count == 2
    leaves = tree.leaf_index >= 0
    assert np.all(tree.depth[leaves] == 1)


def test_identical_rows_give_single_leaf_trees():
    data = np.tile([2.5, -1.0, 3.0], (40, 1))
    forest = fit_forest(data, ForestConfig(tree_count=7, subsample_size=16, seed=1))
    for tree in forest.trees:
        assert tree.leaf_count == 1
        assert tree.depth[0] == 0


def test_fit_forest_determinism_byte_identical():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(60, 4))
    cfg = ForestConfig(tree_count=6, subsample_size=32, seed=42)
    a = json.dumps(_forest_to_dict(fit_forest(data, cfg)))
    b = json.dumps(_forest_to_dict(fit_forest(data, cfg)))
    assert a == b


def test_fit_forest_input_errors():
    with pytest.raises(DataError, match="empty dataset"):
        fit_forest(np.empty((0, 3)), ForestConfig())
    with pytest.raises(DataError, match="no features"):
        fit_forest(np.empty((5, 0)), ForestConfig())
    with pytest.raises(DataError):
        fit_forest(np.ones((1, 3)), ForestConfig())


def test_leaf_of_single_leaf_tree():
    data = np.tile([1.0, 2.0], (10, 1))
    forest = fit_forest(data, ForestConfig(tree_count=1, subsample_size=8, seed=0))
    hit = leaf_of(forest.trees[0], [99.0, -99.0])
    assert hit.leaf_index == 0
    assert hit.depth == 0
    assert hit.training_count == forest.subsample_size


def test_leaf_of_routing_rule():
    data = np.array([[0.0], [1.0]])
    forest = fit_forest(data, ForestConfig(tree_count=1, subsample_size=2, seed=9))
    tree = forest.trees[0]
    v = tree.split_value[0]
    below = leaf_of(tree, [v - 1e-9])
    above = leaf_of(tree, [v + 1e-9])
    assert below.leaf_index == tree.leaf_index[tree.left[0]]
    assert above.leaf_index == tree.leaf_index[tree.right[0]]


def test_leaf_of_dimension_mismatch():
    forest = fit_forest(np.random.default_rng(0).normal(size=(20, 3)), ForestConfig(tree_count=1))
    with pytest.raises(DataError):
        leaf_of(forest.trees[0], [1.0, 2.0])


def _leaf_boxes(tree):
    """Independent oracle: per-leaf axis-aligned predicates from root paths."""
    boxes = {}

    def walk(node, constraints):
        if tree.split_feature[node] < 0:
            boxes[int(tree.leaf_index[node])] = list(constraints)
            return
        f, v = int(tree.split_feature[node]), float(tree.split_value[node])
        walk(int(tree.left[node]), constraints + [(f, v, True)])
        walk(int(tree.right[node]), constraints + [(f, v, False)])

    walk(0, [])
    return boxes


def _box_contains(constraints, x):
    return all((x[f] < v) if is_left else (x[f] >= v) for f, v, is_left in constraints)


def test_leaf_regions_partition_space():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(50, 3))
    forest = fit_forest(data, ForestConfig(tree_count=4, subsample_size=32, max_depth=5, seed=2))
    points = rng.normal(size=(100, 3)) * 2
    for tree in forest.trees:
        boxes = _leaf_boxes(tree)
        assert sorted(boxes) == list(range(tree.leaf_count))
        for x in points:
            matches = [leaf for leaf, cons in boxes.items() if _box_contains(cons, x)]
            assert len(matches) == 1
            assert matches[0] == leaf_of(tree, x).leaf_index


def test_tree_score_two_point_tree_is_one():
    data = np.array([[0.0], [1.0]])
    forest = fit_forest(data, ForestConfig(tree_count=1, subsample_size=2, seed=4))
    # both leaves: depth 1, count 1 -> (1 + c(1)) / c(2) = 1
    for x in ([-5.0], [0.2], [7.0]):
        assert tree_score(forest.trees[0], x) == pytest.approx(1.0, abs=1e-12)


def test_tree_score_degenerate_tree_is_one():
    data = np.tile([3.3], (30, 1))
    forest = fit_forest(data, ForestConfig(tree_count=1, subsample_size=16, seed=4))
    assert tree_score(forest.trees[0], [0.0]) == pytest.approx(1.0, abs=1e-12)


def test_outlier_mean_tree_score_below_cluster():
    # Monte-Carlo: 1-D uniform cluster plus a far outlier
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        cluster = rng.uniform(0, 1, size=(100, 1))
        data = np.vstack([cluster, [[25.0]]])
        forest = fit_forest(data, ForestConfig(tree_count=100, subsample_size=64, seed=seed))
        scores = forest_scores(forest, data) / forest.tree_count
        assert scores[-1] < scores[:-1].mean()


def test_forest_score_single_tree_equals_tree_score():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(40, 2))
    forest = fit_forest(data, ForestConfig(tree_count=1, subsample_size=32, seed=8))
    x = rng.normal(size=2)
    assert forest_score(forest, x) == tree_score(forest.trees[0], x)


def test_forest_score_sums_over_trees():
    data = np.tile([1.0], (20, 1))
    forest = fit_forest(data, ForestConfig(tree_count=13, subsample_size=8, seed=0))
    assert forest_score(forest, [5.0]) == pytest.approx(13.0, abs=1e-12)


def test_outlier_has_minimum_forest_score_at_defaults():
    # 256 uniform points + one 10-sigma outlier, default subsample, t=100
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(200 + seed)
        cluster = rng.uniform(0, 1, size=(256, 2))
        sigma = math.sqrt(1.0 / 12.0)
        outlier = np.array([[0.5 + 10 * sigma, 0.5]])
        data = np.vstack([cluster, outlier])
        forest = fit_forest(data, ForestConfig(tree_count=100, seed=seed))
        if int(np.argmin(forest_scores(forest, data))) == 256:
            wins += 1
    assert wins >= 9


def test_outlier_argmin_one_dimensional_subsampled():
    # 1-D cluster + far outlier with a small subsample per tree
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(300 + seed)
        cluster = rng.uniform(0, 1, size=(256, 1))
        data = np.vstack([cluster, [[0.5 + 10 * math.sqrt(1.0 / 12.0)]]])
        forest = fit_forest(data, ForestConfig(tree_count=100, subsample_size=64, seed=seed))
        if int(np.argmin(forest_scores(forest, data))) == 256:
            wins += 1
    assert wins >= 9


def test_scores_nonnegative():
    rng = np.random.default_rng(21)
    data = rng.normal(size=(80, 3))
    forest = fit_forest(data, ForestConfig(tree_count=10, subsample_size=32, seed=3))
    points = rng.normal(size=(50, 3)) * 3
    assert (forest_scores(forest, points) >= 0).all()
    for tree in forest.trees:
        assert (tree.node_scores()[tree.leaf_index >= 0] >= 0).all()


def test_depth_monotonicity_at_equal_counts():
    rng = np.random.default_rng(31)
    data = rng.normal(size=(100, 2))
    forest = fit_forest(data, ForestConfig(tree_count=20, subsample_size=64, seed=6))
    checked = 0
    for tree in forest.trees:
        leaves = np.nonzero(tree.leaf_index >= 0)[0]
        scores = tree.node_scores()
        for count in np.unique(tree.training_count[leaves]):
            same = leaves[tree.training_count[leaves] == count]
            if same.size < 2:
                continue
            order = np.argsort(tree.depth[same])
            d = tree.depth[same][order]
            s = scores[same][order]
            for a, b in zip(range(same.size), range(1, same.size)):
                if d[b] > d[a]:
                    assert s[b] > s[a]
                    checked += 1
    assert checked > 0


def test_subsample_capped_at_n():
    data = np.random.default_rng(0).normal(size=(10, 2))
    forest = fit_forest(data, ForestConfig(tree_count=2, subsample_size=256, seed=0))
    assert forest.subsample_size == 10
    for tree in forest.trees:
        assert tree.training_count[0] == 10
