import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import central_diff, loss_brute, mine_brute, random_unit_batch, weights_brute

from fakebio.errors import DegenerateVector, NonUnitInput, ZeroVector
from fakebio.metric_learning import (
    MiningResult,
    MsLossConfig,
    SimilarityMatrix,
    cosine_similarity,
    mine_pairs,
    ms_loss,
    ms_loss_grad,
    normalize_backward,
    normalize_embedding,
    normalize_rows,
    pair_weights,
    pairwise_similarity,
)

CFG = MsLossConfig()


def _sim(S, labels):
    return SimilarityMatrix(np.array(S, dtype=float), np.array(labels))


# --------------------------------------------------------------------------
# similarities


def test_cosine_examples():
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    v = np.array([0.3, -2.0, 5.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-15)
    assert cosine_similarity([3, 4], [4, 3]) == pytest.approx(0.96, abs=1e-15)
    with pytest.raises(ZeroVector):
        cosine_similarity([0, 0], [1, 0])


def test_pairwise_examples():
    u = np.array([0.6, 0.8])
    assert np.allclose(pairwise_similarity([u, u], ["a", "a"]).S, [[1, 1], [1, 1]])
    assert np.array_equal(pairwise_similarity(np.eye(2), ["a", "b"]).S, np.eye(2))
    with pytest.raises(NonUnitInput):
        pairwise_similarity([[1.0, 1.0]], ["a"])


def test_pairwise_matches_brute_force():
    E, labels = random_unit_batch(np.random.default_rng(0), 8, 5, 3)
    S = pairwise_similarity(E, labels).S
    for i in range(8):
        for j in range(8):
            assert abs(S[i, j] - sum(E[i, k] * E[j, k] for k in range(5))) <= 1e-12
    assert np.array_equal(S, S.T)
    assert np.all(np.abs(np.diag(S) - 1) <= 1e-12)


# --------------------------------------------------------------------------
# mining


def test_mining_hand_example():
    # anchor 0: S01 = 0.8 (pos), S02 = 0.75, S03 = 0.5 (neg)
    S = [[1, 0.8, 0.75, 0.5], [0.8, 1, 0.1, 0.1], [0.75, 0.1, 1, 0.9], [0.5, 0.1, 0.9, 1]]
    mining = mine_pairs(_sim(S, ["A", "A", "B", "B"]), 0.1)
    assert set(mining.negatives[0]) == {2}
    assert set(mining.positives[0]) == {1}


def test_mining_separated_batch_is_empty():
    labels = ["A", "A", "B", "B"]
    S = [[1 if labels[i] == labels[j] else -1 for j in range(4)] for i in range(4)]
    assert mine_pairs(_sim(S, labels), 0.1).is_empty()


def test_mining_wide_margin_takes_everything():
    E, labels = random_unit_batch(np.random.default_rng(1), 10, 4, 3)
    mining = mine_pairs(pairwise_similarity(E, labels), 2.0)
    same = labels[:, None] == labels[None, :]
    assert np.array_equal(mining.neg, ~same)
    assert np.array_equal(mining.pos, same & ~np.eye(10, dtype=bool))


def test_mining_invariants():
    E, labels = random_unit_batch(np.random.default_rng(2), 16, 6, 4)
    mining = mine_pairs(pairwise_similarity(E, labels), 0.1)
    for i in range(16):
        assert all(labels[j] == labels[i] and j != i for j in mining.positives[i])
        assert all(labels[j] != labels[i] for j in mining.negatives[i])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 20), eps=st.floats(0, 0.5))
def test_mining_matches_brute_force(seed, m, eps):
    rng = np.random.default_rng(seed)
    E, labels = random_unit_batch(rng, m, 3, int(rng.integers(1, m + 1)))
    sim = pairwise_similarity(E, labels)
    mining = mine_pairs(sim, eps)
    P, N = mine_brute(sim.S.tolist(), labels.tolist(), eps)
    assert [set(p) for p in mining.positives] == P
    assert [set(n) for n in mining.negatives] == N


# --------------------------------------------------------------------------
# weights and loss


def _single(S_pos, S_neg):
    """m = 1 block: anchor against one positive and one negative column."""
    S = np.array([[S_pos, S_neg]])
    return SimilarityMatrix(S, np.array(["A"]), np.array(["A", "B"]))


def test_single_positive_weight():
    sim = SimilarityMatrix(np.array([[0.5]]), np.array(["A"]), np.array(["A"]))
    mining = MiningResult(np.array([[True]]), np.array([[False]]))
    w = pair_weights(sim, mining, MsLossConfig(alpha=2, lam=1))
    assert w.w_pos[0, 0] == pytest.approx(0.7310585786300049, abs=1e-12)


def test_negative_weight_at_lambda_is_half():
    sim = SimilarityMatrix(np.array([[0.3]]), np.array(["A"]), np.array(["B"]))
    mining = MiningResult(np.array([[False]]), np.array([[True]]))
    assert pair_weights(sim, mining, MsLossConfig(lam=0.3)).w_neg[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_equal_negatives_equal_weights():
    sim = SimilarityMatrix(np.array([[0.4, 0.4]]), np.array(["A"]), np.array(["B", "C"]))
    mining = MiningResult(np.array([[False, False]]), np.array([[True, True]]))
    w = pair_weights(sim, mining, CFG).w_neg
    assert w[0, 0] == w[0, 1]


def test_weights_in_open_unit_interval():
    E, labels = random_unit_batch(np.random.default_rng(3), 24, 5, 4)
    sim = pairwise_similarity(E, labels)
    mining = mine_pairs(sim, 0.1)
    w = pair_weights(sim, mining, CFG)
    assert np.all((w.w_pos[mining.pos] > 0) & (w.w_pos[mining.pos] < 1))
    assert np.all((w.w_neg[mining.neg] > 0) & (w.w_neg[mining.neg] < 1))
    assert not np.any(w.w_pos[~mining.pos]) and not np.any(w.w_neg[~mining.neg])


def test_loss_zero_when_nothing_mined():
    labels = ["A", "A", "B", "B"]
    S = [[1 if labels[i] == labels[j] else -1 for j in range(4)] for i in range(4)]
    sim = _sim(S, labels)
    mining = mine_pairs(sim, 0.1)
    assert ms_loss(sim, mining, CFG) == 0.0
    assert not np.any(ms_loss_grad(sim, mining, CFG))


def test_hand_loss_single_pair():
    sim = _single(0.5, 0.5)
    mining = MiningResult(np.array([[True, False]]), np.array([[False, True]]))
    loss = ms_loss(sim, mining, MsLossConfig(alpha=2, beta=50, lam=1))
    # 0.5 ln(1 + e) + 0.02 ln(1 + e^-25)
    assert loss == pytest.approx(0.5 * math.log1p(math.e) + 0.02 * math.log1p(math.exp(-25)), abs=1e-15)
    assert abs(loss - 0.65664) <= 1e-5


def test_loss_invariant_to_duplicating_batch():
    E, labels = random_unit_batch(np.random.default_rng(4), 12, 5, 3)
    sim = pairwise_similarity(E, labels)
    mining = mine_pairs(sim, 0.1)
    base = ms_loss(sim, mining, CFG)
    # duplicate as a block-diagonal stack: each copy only sees its own rows
    S2 = np.block([[sim.S, np.full_like(sim.S, -5)], [np.full_like(sim.S, -5), sim.S]])
    P2 = np.block([[mining.pos, np.zeros_like(mining.pos)], [np.zeros_like(mining.pos), mining.pos]])
    N2 = np.block([[mining.neg, np.zeros_like(mining.neg)], [np.zeros_like(mining.neg), mining.neg]])
    sim2 = SimilarityMatrix(S2, np.concatenate([labels, labels]))
    assert ms_loss(sim2, MiningResult(P2, N2), CFG) == pytest.approx(base, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(-1, 1), alpha=st.floats(0.5, 5), beta=st.floats(1, 60))
def test_loss_and_weights_match_brute_force(seed, lam, alpha, beta):
    E, labels = random_unit_batch(np.random.default_rng(seed), 12, 4, 3)
    cfg = MsLossConfig(alpha, beta, lam, 0.1)
    sim = pairwise_similarity(E, labels)
    mining = mine_pairs(sim, cfg.epsilon)
    P, N = mine_brute(sim.S.tolist(), labels.tolist(), 0.1)
    wp, wn = weights_brute(sim.S.tolist(), P, N, alpha, beta, lam)
    w = pair_weights(sim, mining, cfg)
    for (i, j), v in wp.items():
        assert w.w_pos[i, j] == pytest.approx(v, rel=1e-12)
    for (i, j), v in wn.items():
        assert w.w_neg[i, j] == pytest.approx(v, rel=1e-12)
    assert ms_loss(sim, mining, cfg) == pytest.approx(loss_brute(sim.S.tolist(), P, N, alpha, beta, lam),
                                                      rel=1e-12)


def test_extreme_exponents_stay_finite():
    sim = SimilarityMatrix(np.array([[1.0, 1.0]]), np.array(["A"]), np.array(["A", "B"]))
    mining = MiningResult(np.array([[False, False]]), np.array([[False, True]]))
    cfg = MsLossConfig(beta=2000.0, lam=-1.0)
    loss = ms_loss(sim, mining, cfg)
    w = pair_weights(sim, mining, cfg)
    assert math.isfinite(loss) and loss == pytest.approx(2000 * 2 / 2000, rel=1e-12)
    assert w.w_neg[0, 1] == pytest.approx(1.0, rel=1e-12) and w.w_neg[0, 1] <= 1.0


# --------------------------------------------------------------------------
# gradient


def test_gradient_equals_scaled_weights():
    E, labels = random_unit_batch(np.random.default_rng(5), 16, 4, 4)
    sim = pairwise_similarity(E, labels)
    mining = mine_pairs(sim, 0.1)
    G = ms_loss_grad(sim, mining, CFG)
    w = pair_weights(sim, mining, CFG)
    assert np.array_equal(G[mining.pos], -w.w_pos[mining.pos] / 16)
    assert np.array_equal(G[mining.neg], w.w_neg[mining.neg] / 16)
    assert not np.any(G[~(mining.pos | mining.neg)])


def test_gradient_finite_differences():
    rng = np.random.default_rng(6)
    E, labels = random_unit_batch(rng, 8, 16, 3)
    cfg = MsLossConfig(lam=0.5)
    sim = pairwise_similarity(E, labels)
    mining = mine_pairs(sim, cfg.epsilon)  # selection held fixed
    f = lambda x: ms_loss(SimilarityMatrix(x.reshape(8, 8), labels), mining, cfg)
    fd = central_diff(f, sim.S.ravel(), 1e-5).reshape(8, 8)
    G = ms_loss_grad(sim, mining, cfg)
    assert np.linalg.norm(fd - G) <= 1e-5 * np.linalg.norm(G)


# --------------------------------------------------------------------------
# normalization


def test_normalize_examples():
    assert np.allclose(normalize_embedding([2, 0]), [0.7071067811865476, -0.7071067811865476], atol=1e-15)
    v = normalize_embedding([0.3, -1.2, 0.4, 0.5])
    assert np.allclose(normalize_embedding(v), v, atol=1e-15)
    with pytest.raises(DegenerateVector):
        normalize_embedding([5, 5, 5])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 12))
def test_normalize_backward_matches_jacobian(seed, d):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((1, d))
    unit, norms = normalize_rows(v)
    J = np.stack([(normalize_rows(v + h)[0] - normalize_rows(v - h)[0])[0] / 2e-6
                  for h in 1e-6 * np.eye(d)[:, None, :]], axis=1)
    g = rng.standard_normal((1, d))
    assert np.allclose(normalize_backward(unit, norms, g)[0], J.T @ g[0], atol=1e-7)
    # the tangent direction is orthogonal to the output
    assert abs(float(unit[0] @ normalize_backward(unit, norms, g)[0])) <= 1e-12
