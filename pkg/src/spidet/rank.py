"""Pairwise learning-to-rank over fragment vectors.

Pair targets encode the probability that one training point out-ranks
another in anomalousness under the privileged ensemble (lower privileged
score = more anomalous). A linear or RBF-kernelized model is fit by
minimizing the pairwise cross entropy with full-batch gradient descent
and backtracking line search. Because the targets flip the sign of the
privileged score gap, the fitted model's raw output tracks the *negated*
privileged score: higher raw output means more anomalous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import expit

from .exceptions import DataError, NumericError


@dataclass(frozen=True)
class PairTarget:
    i: int
    j: int
    p_star: float


@dataclass
class RankerOptions:
    use_kernel: bool = False
    max_pairs: int = 100_000
    tol: float = 1e-6
    max_iters: int = 500
    bandwidth: float | None = None
    ridge_eps: float = 1e-6
    armijo_c: float = 1e-4
    backtrack: float = 0.5


@dataclass
class KernelSpec:
    kind: str = "rbf"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind != "rbf":
            raise DataError(f"unsupported kernel: {self.kind}")
        if self.bandwidth <= 0:
            raise DataError("bandwidth must be positive")


@dataclass
class LinearRanker:
    beta: np.ndarray
    cost_history: list[float] | None = field(default=None, repr=False, compare=False)


@dataclass
class KernelRanker:
    gamma: np.ndarray
    train_fragments: np.ndarray
    kernel: KernelSpec
    cost_history: list[float] | None = field(default=None, repr=False, compare=False)


def target_probability(s_star_i: float, s_star_j: float) -> float:
    """Probability that i out-ranks j in anomalousness given privileged scores."""
    return float(expit(-(s_star_i - s_star_j)))


def _pair_from_linear_index(k: int, n: int) -> tuple[int, int]:
    # lexicographic unranking of the k-th (i, j) pair with i < j
    i = (2 * n - 1 - math.isqrt((2 * n - 1) ** 2 - 8 * k)) // 2
    while i * (2 * n - i - 1) // 2 > k:
        i -= 1
    while (i + 1) * (2 * n - i - 2) // 2 <= k and i + 1 < n - 1:
        i += 1
    j = k - i * (2 * n - i - 1) // 2 + i + 1
    return i, j


def pairwise_targets(s_star: np.ndarray, max_pairs: int, seed: int) -> list[PairTarget]:
    """All ordered pairs i<j, or a uniform sample of ``max_pairs`` of them.

    Deterministic given the seed; the sampled pair list is sorted in
    lexicographic order.
    """
    s = np.asarray(s_star, dtype=np.float64).ravel()
    n = s.size
    if n < 2:
        raise DataError("need >=2 examples")
    if max_pairs < 1:
        raise DataError("max_pairs must be >= 1")
    total = n * (n - 1) // 2
    if total <= max_pairs:
        i_idx, j_idx = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
        if total <= 4 * max_pairs:
            chosen = rng.permutation(total)[:max_pairs]
        else:
            picked: set[int] = set()
            while len(picked) < max_pairs:
                for k in rng.integers(0, total, size=max_pairs - len(picked)):
                    picked.add(int(k))
            chosen = np.fromiter(picked, dtype=np.int64)
        pairs = [_pair_from_linear_index(int(k), n) for k in sorted(chosen.tolist())]
        i_idx = np.array([p[0] for p in pairs], dtype=np.int64)
        j_idx = np.array([p[1] for p in pairs], dtype=np.int64)
    p_star = expit(-(s[i_idx] - s[j_idx]))
    return [PairTarget(int(a), int(b), float(p)) for a, b, p in zip(i_idx, j_idx, p_star)]


def _pair_arrays(pairs: list[PairTarget]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not pairs:
        raise DataError("need at least one pair")
    i_idx = np.array([p.i for p in pairs], dtype=np.int64)
    j_idx = np.array([p.j for p in pairs], dtype=np.int64)
    p_star = np.array([p.p_star for p in pairs], dtype=np.float64)
    return i_idx, j_idx, p_star


def _cross_entropy_parts(delta: np.ndarray, p_star: np.ndarray) -> tuple[float, np.ndarray]:
    # cost = sum(-p* delta + log(1 + e^delta)), residual = p - p*
    cost = float(-p_star @ delta + np.logaddexp(0.0, delta).sum())
    return cost, expit(delta) - p_star


def linear_rank_objective(
    beta: np.ndarray, fragments: np.ndarray, pairs: list[PairTarget]
) -> tuple[float, np.ndarray]:
    """Pairwise cross-entropy cost and its gradient for a linear ranking weight."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    Phi = np.atleast_2d(np.asarray(fragments, dtype=np.float64))
    if Phi.shape[1] != beta.size:
        raise DataError(f"feature dimension mismatch: got {Phi.shape[1]}, expected {beta.size}")
    i_idx, j_idx, p_star = _pair_arrays(pairs)
    diff = Phi[i_idx] - Phi[j_idx]
    cost, resid = _cross_entropy_parts(diff @ beta, p_star)
    return cost, diff.T @ resid


def rbf_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> float:
    """exp(-||a-b||^2 / (2 h^2))."""
    if bandwidth <= 0:
        raise DataError("bandwidth must be positive")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DataError(f"feature dimension mismatch: got {b.size}, expected {a.size}")
    d2 = float(((a - b) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * bandwidth * bandwidth)))


def _gram(points: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = cdist(points, points, metric="sqeuclidean")
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth))


def median_heuristic_bandwidth(fragments: np.ndarray, cap: int = 2048) -> float:
    """Median pairwise distance of the fragment vectors; 1.0 if degenerate."""
    Phi = np.atleast_2d(np.asarray(fragments, dtype=np.float64))
    if Phi.shape[0] > cap:
        Phi = Phi[:cap]
    if Phi.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(Phi)))
    return med if med > 0 else 1.0


def kernel_rank_objective(
    gamma: np.ndarray,
    train_fragments: np.ndarray,
    pairs: list[PairTarget],
    kernel: KernelSpec,
) -> tuple[float, np.ndarray]:
    """Cross-entropy cost and gradient for the kernelized ranking coefficients."""
    gamma = np.asarray(gamma, dtype=np.float64).ravel()
    Phi = np.atleast_2d(np.asarray(train_fragments, dtype=np.float64))
    if Phi.shape[0] != gamma.size:
        raise DataError(f"coefficient count mismatch: got {gamma.size}, expected {Phi.shape[0]}")
    K = _gram(Phi, kernel.bandwidth)
    i_idx, j_idx, p_star = _pair_arrays(pairs)
    B = K[:, i_idx] - K[:, j_idx]
    cost, resid = _cross_entropy_parts(gamma @ B, p_star)
    return cost, B @ resid


def _descend(objective, x0: np.ndarray, opts: RankerOptions) -> tuple[np.ndarray, list[float]]:
    """Full-batch gradient descent with Armijo backtracking; cost never increases."""
    x = np.asarray(x0, dtype=np.float64).copy()
    cost, grad = objective(x)
    if not np.isfinite(cost) or not np.all(np.isfinite(grad)):
        raise NumericError("diverged")
    history = [cost]
    step = 1.0
    for _ in range(opts.max_iters):
        if np.max(np.abs(grad)) <= opts.tol:
            break
        g2 = float(grad @ grad)
        s = step
        accepted = False
        while s >= 1e-20:
            cand = x - s * grad
            c_new, g_new = objective(cand)
            if np.isfinite(c_new) and np.all(np.isfinite(g_new)) and c_new <= cost - opts.armijo_c * s * g2:
                accepted = True
                break
            s *= opts.backtrack
        if not accepted:
            break
        x, cost, grad = cand, c_new, g_new
        history.append(cost)
        step = min(s * 2.0, 1e6)
    return x, history


def fit_linear_ranker(
    fragments: np.ndarray, pairs: list[PairTarget], opts: RankerOptions | None = None
) -> LinearRanker:
    """Fit the linear ranking weights from a zero start; final cost <= |pairs| ln 2."""
    opts = opts or RankerOptions()
    Phi = np.atleast_2d(np.asarray(fragments, dtype=np.float64))
    i_idx, j_idx, p_star = _pair_arrays(pairs)
    diff = Phi[i_idx] - Phi[j_idx]

    def objective(beta):
        cost, resid = _cross_entropy_parts(diff @ beta, p_star)
        return cost, diff.T @ resid

    beta, history = _descend(objective, np.zeros(Phi.shape[1]), opts)
    return LinearRanker(beta=beta, cost_history=history)


def fit_kernel_ranker(
    train_fragments: np.ndarray,
    pairs: list[PairTarget],
    kernel: KernelSpec | None = None,
    opts: RankerOptions | None = None,
) -> KernelRanker:
    """Fit kernelized ranking coefficients; a small ridge term bounds the minimizer."""
    opts = opts or RankerOptions()
    Phi = np.atleast_2d(np.asarray(train_fragments, dtype=np.float64))
    if kernel is None:
        bw = opts.bandwidth if opts.bandwidth is not None else median_heuristic_bandwidth(Phi)
        kernel = KernelSpec(kind="rbf", bandwidth=bw)
    K = _gram(Phi, kernel.bandwidth)
    i_idx, j_idx, p_star = _pair_arrays(pairs)
    B = K[:, i_idx] - K[:, j_idx]
    eps = opts.ridge_eps

    def objective(gamma):
        cost, resid = _cross_entropy_parts(gamma @ B, p_star)
        return cost + eps * float(gamma @ gamma), B @ resid + 2.0 * eps * gamma

    gamma, history = _descend(objective, np.zeros(Phi.shape[0]), opts)
    return KernelRanker(gamma=gamma, train_fragments=Phi, kernel=kernel, cost_history=history)


def predict_rank_score(model: LinearRanker | KernelRanker, phi_e: np.ndarray) -> float:
    """Raw ranking output for one fragment vector; higher = more anomalous."""
    phi_e = np.asarray(phi_e, dtype=np.float64).ravel()
    return float(predict_rank_scores(model, phi_e[None, :])[0])


def predict_rank_scores(model: LinearRanker | KernelRanker, Phi: np.ndarray) -> np.ndarray:
    Phi = np.atleast_2d(np.asarray(Phi, dtype=np.float64))
    if isinstance(model, LinearRanker):
        if Phi.shape[1] != model.beta.size:
            raise DataError(f"feature dimension mismatch: got {Phi.shape[1]}, expected {model.beta.size}")
        return Phi @ model.beta
    if Phi.shape[1] != model.train_fragments.shape[1]:
        raise DataError(
            f"feature dimension mismatch: got {Phi.shape[1]}, expected {model.train_fragments.shape[1]}"
        )
    h = model.kernel.bandwidth
    Kx = np.exp(-cdist(Phi, model.train_fragments, metric="sqeuclidean") / (2.0 * h * h))
    return Kx @ model.gamma
