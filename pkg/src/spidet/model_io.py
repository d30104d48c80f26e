"""Versioned model persistence.

Models serialize to an indented JSON document (format_version 1). Floats
go through Python's shortest round-trip repr, so save -> load -> save is
byte-identical and a loaded model scores exactly like the original. The
privileged-space forest of the transfer detectors is training-side only
and is not persisted.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .forest import ForestConfig, IsolationForest, IsoTree
from .pipeline import DetectorKind, DetectorOptions, TrainedDetector
from .rank import KernelRanker, KernelSpec, LinearRanker, RankerOptions
from .transfer import FeatureTransferModel, FragmentSet, RidgeRegressor

FORMAT_VERSION = 1


def _tree_to_dict(tree: IsoTree) -> dict:
    return {
        "split_feature": tree.split_feature.tolist(),
        "split_value": tree.split_value.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "depth": tree.depth.tolist(),
        "training_count": tree.training_count.tolist(),
        "leaf_index": tree.leaf_index.tolist(),
        "leaf_count": tree.leaf_count,
        "feature_dim": tree.feature_dim,
        "subsample_size": tree.subsample_size,
    }


def _tree_from_dict(d: dict) -> IsoTree:
    return IsoTree(
        split_feature=np.asarray(d["split_feature"], dtype=np.int32),
        split_value=np.asarray(d["split_value"], dtype=np.float64),
        left=np.asarray(d["left"], dtype=np.int32),
        right=np.asarray(d["right"], dtype=np.int32),
        depth=np.asarray(d["depth"], dtype=np.int32),
        training_count=np.asarray(d["training_count"], dtype=np.int32),
        leaf_index=np.asarray(d["leaf_index"], dtype=np.int32),
        leaf_count=int(d["leaf_count"]),
        feature_dim=int(d["feature_dim"]),
        subsample_size=int(d["subsample_size"]),
    )


def _forest_to_dict(forest: IsolationForest | None) -> dict | None:
    if forest is None:
        return None
    return {
        "config": {
            "tree_count": forest.config.tree_count,
            "subsample_size": forest.config.subsample_size,
            "max_depth": forest.config.max_depth,
            "seed": forest.config.seed,
        },
        "feature_dim": forest.feature_dim,
        "subsample_size": forest.subsample_size,
        "trees": [_tree_to_dict(t) for t in forest.trees],
    }


def _forest_from_dict(d: dict | None) -> IsolationForest | None:
    if d is None:
        return None
    cfg = d["config"]
    return IsolationForest(
        trees=[_tree_from_dict(t) for t in d["trees"]],
        config=ForestConfig(
            tree_count=int(cfg["tree_count"]),
            subsample_size=int(cfg["subsample_size"]),
            max_depth=cfg["max_depth"],
            seed=int(cfg["seed"]),
        ),
        feature_dim=int(d["feature_dim"]),
        subsample_size=int(d["subsample_size"]),
    )


def _ridge_to_dict(reg: RidgeRegressor | None) -> dict | None:
    if reg is None:
        return None
    return {"weights": reg.weights.tolist(), "intercept": reg.intercept, "lambda": reg.lam}


def _ridge_from_dict(d: dict | None) -> RidgeRegressor | None:
    if d is None:
        return None
    return RidgeRegressor(
        weights=np.asarray(d["weights"], dtype=np.float64),
        intercept=float(d["intercept"]),
        lam=float(d["lambda"]),
    )


def _ranker_to_dict(ranker) -> dict | None:
    if ranker is None:
        return None
    if isinstance(ranker, LinearRanker):
        return {"type": "linear", "beta": ranker.beta.tolist()}
    return {
        "type": "kernel",
        "gamma": ranker.gamma.tolist(),
        "kernel": {"kind": ranker.kernel.kind, "bandwidth": ranker.kernel.bandwidth},
        "train_fragments": ranker.train_fragments.tolist(),
    }


def _ranker_from_dict(d: dict | None):
    if d is None:
        return None
    if d["type"] == "linear":
        return LinearRanker(beta=np.asarray(d["beta"], dtype=np.float64))
    if d["type"] == "kernel":
        return KernelRanker(
            gamma=np.asarray(d["gamma"], dtype=np.float64),
            train_fragments=np.asarray(d["train_fragments"], dtype=np.float64),
            kernel=KernelSpec(kind=d["kernel"]["kind"], bandwidth=float(d["kernel"]["bandwidth"])),
        )
    raise DataError(f"malformed model file: unknown ranker type {d['type']!r}")


def _options_to_dict(opts: DetectorOptions) -> dict:
    return {
        "tree_count": opts.tree_count,
        "privileged_tree_count": opts.privileged_tree_count,
        "subsample_size": opts.subsample_size,
        "max_depth": opts.max_depth,
        "ridge_lambda": opts.ridge_lambda,
        "ft_on_true_privileged": opts.ft_on_true_privileged,
        "seed": opts.seed,
        "ranker": {
            "use_kernel": opts.ranker.use_kernel,
            "max_pairs": opts.ranker.max_pairs,
            "tol": opts.ranker.tol,
            "max_iters": opts.ranker.max_iters,
            "bandwidth": opts.ranker.bandwidth,
            "ridge_eps": opts.ranker.ridge_eps,
        },
    }


def _options_from_dict(d: dict) -> DetectorOptions:
    r = d.get("ranker", {})
    return DetectorOptions(
        tree_count=int(d["tree_count"]),
        privileged_tree_count=d.get("privileged_tree_count"),
        subsample_size=int(d["subsample_size"]),
        max_depth=d.get("max_depth"),
        ridge_lambda=float(d["ridge_lambda"]),
        ft_on_true_privileged=bool(d.get("ft_on_true_privileged", False)),
        seed=int(d["seed"]),
        ranker=RankerOptions(
            use_kernel=bool(r.get("use_kernel", False)),
            max_pairs=int(r.get("max_pairs", 100_000)),
            tol=float(r.get("tol", 1e-6)),
            max_iters=int(r.get("max_iters", 500)),
            bandwidth=r.get("bandwidth"),
            ridge_eps=float(r.get("ridge_eps", 1e-6)),
        ),
    )


def model_to_dict(model: TrainedDetector, metadata: dict | None = None) -> dict:
    frag = None
    if model.fragments is not None:
        frag = [_ridge_to_dict(r) for r in model.fragments.regressors]
    ft = None
    if model.ft_model is not None:
        ft = [_ridge_to_dict(r) for r in model.ft_model.regressors]
    created = metadata or model.metadata or {"tool": "spidet", "tool_version": "0.1.0"}
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind.value,
        "feature_dim": model.feature_dim,
        "options": _options_to_dict(model.options),
        "created": created,
        "decision_forest": _forest_to_dict(model.decision_forest),
        "fragments": frag,
        "ranker": _ranker_to_dict(model.ranker),
        "lite_regressor": _ridge_to_dict(model.lite_regressor),
        "ft_model": ft,
        "ft_forest": _forest_to_dict(model.ft_forest),
    }


def model_from_dict(doc: dict) -> TrainedDetector:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise DataError("malformed model file: missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise DataError(f"unsupported model version: {doc['format_version']}")
    try:
        fragments = None
        if doc["fragments"] is not None:
            fragments = FragmentSet(regressors=[_ridge_from_dict(r) for r in doc["fragments"]])
        ft_model = None
        if doc["ft_model"] is not None:
            ft_model = FeatureTransferModel(regressors=[_ridge_from_dict(r) for r in doc["ft_model"]])
        return TrainedDetector(
            kind=DetectorKind.from_string(doc["kind"]),
            feature_dim=int(doc["feature_dim"]),
            options=_options_from_dict(doc["options"]),
            decision_forest=_forest_from_dict(doc["decision_forest"]),
            privileged_forest=None,
            fragments=fragments,
            ranker=_ranker_from_dict(doc["ranker"]),
            lite_regressor=_ridge_from_dict(doc["lite_regressor"]),
            ft_model=ft_model,
            ft_forest=_forest_from_dict(doc["ft_forest"]),
            metadata=doc.get("created"),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model file: {exc}") from None


def save_model(model: TrainedDetector, path: str | Path, metadata: dict | None = None):
    doc = model_to_dict(model, metadata=metadata)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> TrainedDetector:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"truncated or invalid model JSON: {exc}") from None
    return model_from_dict(doc)
