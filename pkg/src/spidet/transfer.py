"""Knowledge transfer between feature spaces.

Three pieces live here: sparse leaf-score vectors over a fitted forest's
stacked leaf space, a closed-form ridge solver (unpenalized intercept)
that powers all regressions in the package, and the two transfer models
built on top of it: per-tree fragment regressors and the per-coordinate
feature-transfer baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import DataError, NumericError
from .forest import IsolationForest, forest_assignments, tree_score_matrix


@dataclass
class LeafScoreVector:
    """Sparse encoding of a point: one nonzero per tree, at the occupied leaf.

    Entry k lives at ``block_offsets[k] + leaf_indices[k]`` in the stacked
    leaf space and carries the point's score under tree k.
    """

    leaf_indices: np.ndarray
    values: np.ndarray
    block_offsets: np.ndarray
    total_dim: int

    def positions(self) -> np.ndarray:
        return self.block_offsets + self.leaf_indices

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.total_dim, dtype=np.float64)
        dense[self.positions()] = self.values
        return dense


def build_leaf_vector(forest: IsolationForest, x: np.ndarray) -> LeafScoreVector:
    """Leaf-score vector of a single point; nonzero sum equals the forest score."""
    x = np.asarray(x, dtype=np.float64).ravel()
    leaves, scores = forest_assignments(forest, x[None, :])
    return LeafScoreVector(
        leaf_indices=leaves[0],
        values=scores[0],
        block_offsets=forest.block_offsets,
        total_dim=forest.leaf_dim,
    )


def leaf_vector_matrix(forest: IsolationForest, X: np.ndarray) -> sp.csr_matrix:
    """CSR matrix stacking the leaf-score vectors of every row of X."""
    leaves, scores = forest_assignments(forest, X)
    n, t = leaves.shape
    cols = (leaves + forest.block_offsets[None, :]).ravel()
    rows = np.repeat(np.arange(n), t)
    return sp.csr_matrix((scores.ravel(), (rows, cols)), shape=(n, forest.leaf_dim))


def _vectors_to_csr(vectors: list[LeafScoreVector]) -> sp.csr_matrix:
    if not vectors:
        raise DataError("no leaf vectors given")
    dim = vectors[0].total_dim
    cols = np.concatenate([v.positions() for v in vectors])
    vals = np.concatenate([v.values for v in vectors])
    rows = np.repeat(np.arange(len(vectors)), [v.values.size for v in vectors])
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(vectors), dim))


@dataclass
class RidgeRegressor:
    weights: np.ndarray
    intercept: float
    lam: float

    def predict(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            if x.size != self.weights.size:
                raise DataError(f"feature dimension mismatch: got {x.size}, expected {self.weights.size}")
            return float(x @ self.weights + self.intercept)
        if x.shape[1] != self.weights.size:
            raise DataError(f"feature dimension mismatch: got {x.shape[1]}, expected {self.weights.size}")
        return x @ self.weights + self.intercept

    def predict_leaf_vector(self, z: LeafScoreVector) -> float:
        if z.total_dim != self.weights.size:
            raise DataError(f"feature dimension mismatch: got {z.total_dim}, expected {self.weights.size}")
        return float(self.values_dot(z) + self.intercept)

    def values_dot(self, z: LeafScoreVector) -> float:
        return float(z.values @ self.weights[z.positions()])


def _column_means(A) -> np.ndarray:
    if sp.issparse(A):
        return np.asarray(A.mean(axis=0)).ravel()
    return A.mean(axis=0)


def _fit_ridge_multi(inputs, targets: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve min ||Y - Xw - b||^2 + lam*||w||^2 for every target column at once.

    Uses the primal normal equations when the feature count is at most the
    row count, otherwise the dual (Gram) form; both avoid densifying a
    sparse design. Returns (weights q x m, intercepts m).
    """
    if lam < 0:
        raise DataError("lambda must be >= 0")
    n, q = inputs.shape
    Y = np.asarray(targets, dtype=np.float64)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    if Y.shape[0] != n:
        raise DataError("row count mismatch between inputs and targets")

    c = _column_means(inputs)
    y_mean = Y.mean(axis=0)
    Yc = Y - y_mean

    if lam == 0.0 and q > n:
        raise NumericError("singular design; increase lambda")

    if q <= n:
        # primal: (X'X - n cc' + lam I) w = X'Y - n c ybar'
        G = inputs.T @ inputs
        if sp.issparse(G):
            G = G.toarray()
        G = np.asarray(G, dtype=np.float64) - n * np.outer(c, c)
        if lam > 0:
            G[np.diag_indices_from(G)] += lam
        elif G.size and np.linalg.cond(G) > 1e12:
            # Cholesky can slip past an exactly rank-deficient normal matrix
            # on rounding noise; reject it explicitly
            raise NumericError("singular design; increase lambda")
        rhs = np.asarray(inputs.T @ Yc, dtype=np.float64)
        rhs -= np.outer(c, Yc.sum(axis=0))
        W = _chol_solve(G, rhs)
    else:
        # dual: alpha = (XX' centered + lam I)^-1 Yc, w = X' alpha - c (1'alpha)
        K = inputs @ inputs.T
        if sp.issparse(K):
            K = K.toarray()
        K = np.asarray(K, dtype=np.float64)
        u = np.asarray(inputs @ c, dtype=np.float64).ravel()
        K -= u[:, None]
        K -= u[None, :]
        K += float(c @ c)
        K[np.diag_indices_from(K)] += lam
        alpha = _chol_solve(K, Yc)
        W = np.asarray(inputs.T @ alpha, dtype=np.float64)
        W -= np.outer(c, alpha.sum(axis=0))

    b = y_mean - c @ W
    if squeeze:
        return W[:, 0], b
    return W, b


def _chol_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular design; increase lambda") from exc
    z = np.linalg.solve(L, B)
    return np.linalg.solve(L.T, z)


def fit_ridge(inputs, targets: np.ndarray, lam: float) -> RidgeRegressor:
    """Ridge regression with an unpenalized intercept, solved in closed form."""
    inputs = inputs if sp.issparse(inputs) else np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if inputs.shape[0] < 1:
        raise DataError("need at least 1 row")
    if inputs.shape[1] < 1:
        raise DataError("no features")
    w, b = _fit_ridge_multi(inputs, targets, lam)
    return RidgeRegressor(weights=w, intercept=float(b[0]), lam=float(lam))


@dataclass
class FragmentSet:
    """One ridge regressor per privileged tree, all over the same leaf space."""

    regressors: list[RidgeRegressor]
    _weight_matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.regressors)

    def weight_matrix(self) -> np.ndarray:
        if self._weight_matrix is None:
            self._weight_matrix = np.column_stack([r.weights for r in self.regressors])
        return self._weight_matrix

    def intercepts(self) -> np.ndarray:
        return np.array([r.intercept for r in self.regressors], dtype=np.float64)


def fit_fragment_regressors(
    z,
    privileged_forest: IsolationForest,
    x_star: np.ndarray,
    lam: float,
) -> FragmentSet:
    """Fit one regressor per privileged tree, mapping leaf vectors to that tree's score.

    ``z`` is either a list of LeafScoreVector or a CSR matrix of stacked
    leaf vectors, row-aligned with ``x_star``.
    """
    Z = z if sp.issparse(z) else _vectors_to_csr(list(z))
    x_star = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    if Z.shape[0] != x_star.shape[0]:
        raise DataError("row count mismatch between leaf vectors and privileged data")
    if Z.shape[0] < 2:
        raise DataError("need at least 2 rows")
    targets = tree_score_matrix(privileged_forest, x_star)
    W, b = _fit_ridge_multi(Z, targets, lam)
    regs = [RidgeRegressor(weights=W[:, k], intercept=float(b[k]), lam=float(lam)) for k in range(W.shape[1])]
    return FragmentSet(regressors=regs)


def predict_fragment_vector(frags: FragmentSet, z: LeafScoreVector) -> np.ndarray:
    """Evaluate every fragment regressor on one leaf vector."""
    W = frags.weight_matrix()
    if z.total_dim != W.shape[0]:
        raise DataError(f"feature dimension mismatch: got {z.total_dim}, expected {W.shape[0]}")
    return z.values @ W[z.positions()] + frags.intercepts()


def predict_fragment_matrix(frags: FragmentSet, Z: sp.csr_matrix) -> np.ndarray:
    W = frags.weight_matrix()
    if Z.shape[1] != W.shape[0]:
        raise DataError(f"feature dimension mismatch: got {Z.shape[1]}, expected {W.shape[0]}")
    return np.asarray(Z @ W) + frags.intercepts()[None, :]


@dataclass
class FeatureTransferModel:
    """p ridge regressors mapping primary features to each privileged coordinate."""

    regressors: list[RidgeRegressor]

    def __len__(self) -> int:
        return len(self.regressors)


def fit_feature_transfer(x: np.ndarray, x_star: np.ndarray, lam: float) -> FeatureTransferModel:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    x_star = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    if x.shape[0] != x_star.shape[0]:
        raise DataError("row count mismatch between primary and privileged data")
    if x.shape[0] < 2:
        raise DataError("need at least 2 rows")
    W, b = _fit_ridge_multi(x, x_star, lam)
    regs = [RidgeRegressor(weights=W[:, j], intercept=float(b[j]), lam=float(lam)) for j in range(W.shape[1])]
    return FeatureTransferModel(regressors=regs)


def apply_feature_transfer(model: FeatureTransferModel, x: np.ndarray) -> np.ndarray:
    """Predict the privileged coordinates of one point (or a matrix of points)."""
    x = np.asarray(x, dtype=np.float64)
    W = np.column_stack([r.weights for r in model.regressors])
    b = np.array([r.intercept for r in model.regressors])
    if x.ndim == 1:
        if x.size != W.shape[0]:
            raise DataError(f"feature dimension mismatch: got {x.size}, expected {W.shape[0]}")
        return x @ W + b
    if x.shape[1] != W.shape[0]:
        raise DataError(f"feature dimension mismatch: got {x.shape[1]}, expected {W.shape[0]}")
    return x @ W + b[None, :]
