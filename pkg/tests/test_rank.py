import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import kendalltau

from spidet.exceptions import DataError
from spidet.rank import (
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

finite_floats = st.floats(min_value=-50, max_value=50, allow_nan=False)


def test_target_probability_values():
    assert target_probability(1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert target_probability(0.0, 1.0) == pytest.approx(0.731059, abs=1e-6)
    assert target_probability(1.0, 0.0) == pytest.approx(0.268941, abs=1e-6)


@given(finite_floats, finite_floats)
def test_target_probability_antisymmetry(a, b):
    assert target_probability(a, b) + target_probability(b, a) == pytest.approx(1.0, abs=1e-15)


@given(finite_floats, finite_floats, st.floats(min_value=-20, max_value=20, allow_nan=False))
def test_target_probability_shift_invariance(a, b, shift):
    assert target_probability(a + shift, b + shift) == pytest.approx(
        target_probability(a, b), abs=1e-12
    )


def test_pairwise_targets_all_pairs():
    pairs = pairwise_targets(np.array([3.0, 1.0, 2.0]), max_pairs=100, seed=0)
    assert len(pairs) == 3
    assert {(p.i, p.j) for p in pairs} == {(0, 1), (0, 2), (1, 2)}


def test_pairwise_targets_constant_scores():
    pairs = pairwise_targets(np.full(6, 2.2), max_pairs=100, seed=0)
    assert all(p.p_star == pytest.approx(0.5) for p in pairs)


def test_pairwise_targets_deterministic_subsample():
    s = np.random.default_rng(0).normal(size=100)
    a = pairwise_targets(s, max_pairs=500, seed=77)
    b = pairwise_targets(s, max_pairs=500, seed=77)
    assert len(a) == 500
    assert a == b
    seen = {(p.i, p.j) for p in a}
    assert len(seen) == 500
    assert all(0 <= p.i < p.j < 100 for p in a)


def test_pairwise_targets_sparse_regime_subsample():
    s = np.random.default_rng(1).normal(size=800)  # 319600 pairs >> 4 * max_pairs
    pairs = pairwise_targets(s, max_pairs=1000, seed=5)
    assert len(pairs) == 1000
    assert len({(p.i, p.j) for p in pairs}) == 1000
    assert all(0 <= p.i < p.j < 800 for p in pairs)


def test_pairwise_targets_needs_two():
    with pytest.raises(DataError, match="need >=2 examples"):
        pairwise_targets(np.array([1.0]), max_pairs=10, seed=0)


def _random_instance(rng, n=8, dim=4, n_pairs=12):
    phi = rng.normal(size=(n, dim))
    s_star = rng.normal(size=n)
    pairs = pairwise_targets(s_star, max_pairs=n_pairs, seed=int(rng.integers(2**31)))
    return phi, pairs


def test_linear_objective_at_zero():
    rng = np.random.default_rng(2)
    phi, pairs = _random_instance(rng)
    cost, grad = linear_rank_objective(np.zeros(4), phi, pairs)
    assert cost == pytest.approx(len(pairs) * math.log(2), rel=1e-12)
    want = np.zeros(4)
    for p in pairs:
        want += (0.5 - p.p_star) * (phi[p.i] - phi[p.j])
    assert np.allclose(grad, want, atol=1e-12)


def _finite_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        up[i] += h
        dn = x.copy()
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def test_linear_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(5):
        phi, pairs = _random_instance(rng, n=7, dim=4, n_pairs=10)
        beta = rng.normal(size=4)
        _, grad = linear_rank_objective(beta, phi, pairs)
        fd = _finite_difference(lambda b: linear_rank_objective(b, phi, pairs)[0], beta)
        assert np.allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_fit_linear_ranker_indifferent_targets():
    rng = np.random.default_rng(4)
    phi = rng.normal(size=(10, 3))
    pairs = pairwise_targets(np.full(10, 1.0), max_pairs=1000, seed=0)
    model = fit_linear_ranker(phi, pairs)
    assert np.allclose(model.beta, 0.0)
    assert model.cost_history[-1] == pytest.approx(len(pairs) * math.log(2), rel=1e-12)


def test_fit_linear_ranker_recovers_monotone_order():
    phi = np.linspace(0, 3, 12)[:, None]
    s_star = phi[:, 0].copy()  # co-monotone with fragments
    pairs = pairwise_targets(s_star, max_pairs=1000, seed=0)
    model = fit_linear_ranker(phi, pairs)
    predicted = phi @ model.beta
    tau, _ = kendalltau(predicted, -s_star)
    assert tau == pytest.approx(1.0)


def test_fit_linear_ranker_cost_non_increasing():
    rng = np.random.default_rng(5)
    for _ in range(5):
        phi, pairs = _random_instance(rng, n=10, dim=3, n_pairs=20)
        model = fit_linear_ranker(phi, pairs)
        h = model.cost_history
        assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))
        assert h[-1] <= len(pairs) * math.log(2) + 1e-12


def test_rbf_kernel_values():
    a = np.array([1.0, -2.0, 0.5])
    assert rbf_kernel(a, a, 0.7) == pytest.approx(1.0, abs=1e-15)
    assert rbf_kernel([0.0], [1.0], 1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert rbf_kernel([0.0], [1.0], 1.0) == pytest.approx(0.606531, abs=1e-6)


@given(
    st.lists(finite_floats, min_size=3, max_size=3),
    st.lists(finite_floats, min_size=3, max_size=3),
    st.floats(min_value=0.1, max_value=10, allow_nan=False),
)
def test_rbf_kernel_symmetric(a, b, h):
    assert rbf_kernel(a, b, h) == pytest.approx(rbf_kernel(b, a, h), abs=1e-15)


def test_rbf_kernel_rejects_bad_bandwidth():
    with pytest.raises(DataError):
        rbf_kernel([0.0], [1.0], 0.0)
    with pytest.raises(DataError):
        KernelSpec(kind="rbf", bandwidth=-1.0)


def test_kernel_objective_at_zero():
    rng = np.random.default_rng(6)
    phi, pairs = _random_instance(rng, n=6, dim=2, n_pairs=8)
    cost, grad = kernel_rank_objective(np.zeros(6), phi, pairs, KernelSpec(bandwidth=1.0))
    assert cost == pytest.approx(len(pairs) * math.log(2), rel=1e-12)
    assert grad.shape == (6,)


def test_kernel_objective_single_anchor_hand_formula():
    anchors = np.array([[0.0]])
    fragments = anchors
    pairs = [PairTarget(0, 0, 0.5)]  # placeholder to exercise the delta formula below
    # use a 2-point fragment set scored against one anchor coefficient
    train = np.array([[0.0], [1.0]])
    kernel = KernelSpec(bandwidth=1.0)
    gamma = np.array([0.7, 0.0])
    pairs = [PairTarget(0, 1, 0.8)]
    cost, grad = kernel_rank_objective(gamma, train, pairs, kernel)
    k00, k01 = 1.0, math.exp(-0.5)
    delta = 0.7 * (k00 - k01)
    want_cost = -0.8 * delta + math.log(1 + math.exp(delta))
    assert cost == pytest.approx(want_cost, rel=1e-12)
    p = 1 / (1 + math.exp(-delta))
    want_grad0 = (p - 0.8) * (k00 - k01)
    assert grad[0] == pytest.approx(want_grad0, rel=1e-12)


def test_kernel_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(5):
        phi, pairs = _random_instance(rng, n=8, dim=3, n_pairs=12)
        gamma = rng.normal(size=8) * 0.5
        kernel = KernelSpec(bandwidth=1.3)
        _, grad = kernel_rank_objective(gamma, phi, pairs, kernel)
        fd = _finite_difference(lambda g: kernel_rank_objective(g, phi, pairs, kernel)[0], gamma)
        assert np.allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_fit_kernel_ranker_indifferent_targets():
    rng = np.random.default_rng(8)
    phi = rng.normal(size=(9, 2))
    pairs = pairwise_targets(np.full(9, 3.0), max_pairs=1000, seed=1)
    model = fit_kernel_ranker(phi, pairs)
    assert np.allclose(model.gamma, 0.0)


def _radial_fragments():
    # anomalousness depends on the radius only: linearly inseparable in phi,
    # separable after the RBF lift
    rng = np.random.default_rng(0)
    n = 24
    angles = rng.uniform(0, 2 * np.pi, n)
    radii = np.linspace(0.1, 1.5, n)[rng.permutation(n)]
    phi = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    return phi, radii


def test_kernel_ranker_handles_ring_vs_center():
    phi, s_star = _radial_fragments()
    pairs = pairwise_targets(s_star * 4.0, max_pairs=10_000, seed=2)
    kernel_model = fit_kernel_ranker(phi, pairs, opts=RankerOptions(max_iters=3000))
    kernel_pred = predict_rank_scores(kernel_model, phi)
    tau_kernel, _ = kendalltau(kernel_pred, -s_star)
    assert tau_kernel >= 0.9

    linear_model = fit_linear_ranker(phi, pairs, opts=RankerOptions(max_iters=3000))
    linear_pred = phi @ linear_model.beta
    tau_linear, _ = kendalltau(linear_pred, -s_star)
    assert tau_linear < 0.9


def test_fit_kernel_ranker_cost_non_increasing():
    rng = np.random.default_rng(9)
    phi, pairs = _random_instance(rng, n=9, dim=3, n_pairs=15)
    model = fit_kernel_ranker(phi, pairs)
    h = model.cost_history
    assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))


def test_predict_rank_score_linear_basis_vector():
    model = LinearRanker(beta=np.array([1.0, 0.0, 0.0]))
    assert predict_rank_score(model, np.array([3.0, -1.0, 9.0])) == 3.0


def test_predict_rank_score_zero_gamma():
    model = KernelRanker(
        gamma=np.zeros(4),
        train_fragments=np.random.default_rng(0).normal(size=(4, 2)),
        kernel=KernelSpec(bandwidth=1.0),
    )
    assert predict_rank_score(model, np.array([0.3, 0.4])) == 0.0


def test_predict_rank_score_kernel_matches_anchor_sum_oracle():
    rng = np.random.default_rng(10)
    train = rng.normal(size=(6, 3))
    gamma = rng.normal(size=6)
    model = KernelRanker(gamma=gamma, train_fragments=train, kernel=KernelSpec(bandwidth=0.9))
    phi = rng.normal(size=3)
    want = sum(gamma[l] * rbf_kernel(train[l], phi, 0.9) for l in range(6))
    assert predict_rank_score(model, phi) == pytest.approx(want, abs=1e-12)


def test_linear_cost_convexity_witness():
    rng = np.random.default_rng(11)
    phi, pairs = _random_instance(rng, n=8, dim=3, n_pairs=14)
    for _ in range(20):
        b1 = rng.normal(size=3)
        b2 = rng.normal(size=3)
        theta = rng.uniform(0.05, 0.95)
        c1 = linear_rank_objective(b1, phi, pairs)[0]
        c2 = linear_rank_objective(b2, phi, pairs)[0]
        cmix = linear_rank_objective(theta * b1 + (1 - theta) * b2, phi, pairs)[0]
        assert cmix <= theta * c1 + (1 - theta) * c2 + 1e-9


def _binary_entropy(p):
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def test_per_pair_cost_lower_bound():
    rng = np.random.default_rng(12)
    phi, pairs = _random_instance(rng, n=7, dim=2, n_pairs=10)
    entropy = sum(_binary_entropy(p.p_star) for p in pairs)
    for _ in range(10):
        beta = rng.normal(size=2) * 2
        cost, _ = linear_rank_objective(beta, phi, pairs)
        assert cost >= entropy - 1e-9
    # equality when the model probability hits the target exactly
    single = [PairTarget(0, 1, 0.7)]
    frag = np.array([[1.0], [0.0]])
    delta_star = math.log(0.7 / 0.3)
    cost, _ = linear_rank_objective(np.array([delta_star]), frag, single)
    assert cost == pytest.approx(_binary_entropy(0.7), rel=1e-12)


def test_median_heuristic_bandwidth():
    pts = np.array([[0.0], [1.0], [2.0]])
    assert median_heuristic_bandwidth(pts) == pytest.approx(1.0)
    assert median_heuristic_bandwidth(np.zeros((5, 2))) == 1.0
