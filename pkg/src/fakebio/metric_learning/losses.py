"""Multi-similarity loss: cosine similarities, hard-pair mining, soft pair
weights, the loss itself and its gradient with respect to the similarities.

All functions accept a rectangular similarity block (``m`` anchor rows by
``n`` candidate columns) as well as the usual square batch matrix, so a
single anchor can be evaluated on its own. The mean in the loss is over the
``m`` anchor rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateVector, NonUnitInput, ZeroVector

UNIT_TOL = 1e-6
_SHIFT_ABOVE = 30.0


@dataclass(frozen=True)
class MsLossConfig:
    alpha: float = 2.0
    beta: float = 50.0
    lam: float = 1.0
    epsilon: float = 0.1

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta > 0:
            raise ValueError("alpha and beta must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not -1.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [-1, 1]")


@dataclass
class SimilarityMatrix:
    S: np.ndarray
    labels: np.ndarray  # per row anchor
    col_labels: np.ndarray | None = None

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.col_labels is None:
            self.col_labels = self.labels
        else:
            self.col_labels = np.asarray(self.col_labels)

    @property
    def m(self) -> int:
        return self.S.shape[0]


@dataclass
class MiningResult:
    """Boolean masks: ``pos[i, j]`` is true iff ``j`` is in P_i."""

    pos: np.ndarray
    neg: np.ndarray

    @property
    def positives(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.pos]

    @property
    def negatives(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.neg]

    def is_empty(self) -> bool:
        return not (self.pos.any() or self.neg.any())


@dataclass
class PairWeights:
    """Dense weight matrices, zero outside the mined pairs."""

    w_pos: np.ndarray
    w_neg: np.ndarray


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def pairwise_similarity(embeddings, labels) -> SimilarityMatrix:
    E = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(E, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if bad.size:
        raise NonUnitInput(f"embedding {bad[0]} has norm {norms[bad[0]]:.9g}")
    S = E @ E.T
    S = 0.5 * (S + S.T)
    return SimilarityMatrix(S, labels)


def mine_pairs(sim: SimilarityMatrix, epsilon: float) -> MiningResult:
    """Select hard negatives and positives for every anchor row.

    A negative j of anchor i is kept when ``S_ij > min_k S_ik - epsilon``
    over the anchor's positives k; a positive j is kept when
    ``S_ij < max_k S_ik + epsilon`` over its negatives k. Rows with no
    positive or no negative candidates mine nothing.
    """
    S = sim.S
    m, n = S.shape
    same = sim.labels[:, None] == sim.col_labels[None, :]
    pos_cand = same.copy()
    if m == n and sim.col_labels is sim.labels:
        np.fill_diagonal(pos_cand, False)
    neg_cand = ~same

    min_pos = np.where(pos_cand, S, np.inf).min(axis=1) if n else np.full(m, np.inf)
    max_neg = np.where(neg_cand, S, -np.inf).max(axis=1) if n else np.full(m, -np.inf)
    neg = neg_cand & (S > (min_pos - epsilon)[:, None])
    pos = pos_cand & (S < (max_neg + epsilon)[:, None])
    return MiningResult(pos, neg)


def _masked_exponents(S, mask, scale, lam):
    z = np.where(mask, scale * (S - lam), -np.inf)
    zmax = z.max(axis=1, initial=-np.inf)
    shift = np.where(zmax > _SHIFT_ABOVE, zmax, 0.0)
    e = np.exp(z - shift[:, None])  # exp(-inf) = 0 off the mask
    return e, shift


def _log1p_sum(e, shift):
    # log(1 + sum exp(z)) = shift + log(exp(-shift) + sum exp(z - shift))
    total = e.sum(axis=1)
    plain = np.log1p(total)
    shifted = shift + np.log(np.exp(-shift) + total)
    return np.where(shift > 0, shifted, plain)


def pair_weights(sim: SimilarityMatrix, mining: MiningResult, cfg: MsLossConfig) -> PairWeights:
    S = sim.S
    # negative weights grow with similarity: exp(beta * (S - lambda))
    e_neg, s_neg = _masked_exponents(S, mining.neg, cfg.beta, cfg.lam)
    e_pos, s_pos = _masked_exponents(S, mining.pos, -cfg.alpha, cfg.lam)
    w_neg = e_neg / (np.exp(-s_neg) + e_neg.sum(axis=1))[:, None]
    w_pos = e_pos / (np.exp(-s_pos) + e_pos.sum(axis=1))[:, None]
    return PairWeights(w_pos, w_neg)


def ms_loss_terms(sim: SimilarityMatrix, mining: MiningResult, cfg: MsLossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor positive and negative terms of the loss (before the mean)."""
    e_pos, s_pos = _masked_exponents(sim.S, mining.pos, -cfg.alpha, cfg.lam)
    e_neg, s_neg = _masked_exponents(sim.S, mining.neg, cfg.beta, cfg.lam)
    return _log1p_sum(e_pos, s_pos) / cfg.alpha, _log1p_sum(e_neg, s_neg) / cfg.beta


def ms_loss(sim: SimilarityMatrix, mining: MiningResult, cfg: MsLossConfig) -> float:
    if sim.m < 1:
        raise ValueError("empty batch")
    pos_term, neg_term = ms_loss_terms(sim, mining, cfg)
    return float(np.sum(pos_term + neg_term) / sim.m)


def ms_loss_grad(sim: SimilarityMatrix, mining: MiningResult, cfg: MsLossConfig) -> np.ndarray:
    """dL/dS with every entry S_ij treated as an independent variable.

    Mining sets are held fixed, so the gradient is exactly the soft pair weight
    scaled by 1/m: negative for mined positives, positive for negatives.
    """
    w = pair_weights(sim, mining, cfg)
    return (w.w_neg - w.w_pos) / sim.m


def embedding_grad(embeddings: np.ndarray, grad_S: np.ndarray) -> np.ndarray:
    """Chain dL/dS through S = E E^T to dL/dE."""
    return grad_S @ embeddings + grad_S.T @ embeddings


# --------------------------------------------------------------------------
# zero-mean / unit-length projection


def normalize_embedding(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out, _ = normalize_rows(v[None, :])
    return out[0]


def normalize_rows(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centre each row and scale it to unit length. Returns (rows, norms)."""
    C = V - V.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(C, axis=1)
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise DegenerateVector(f"row {bad[0]} is constant; cannot normalize")
    return C / norms[:, None], norms


def normalize_backward(unit: np.ndarray, norms: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`normalize_rows`.

    The Jacobian ``(I - u u^T)(I - 11^T/d) / |c|`` is symmetric, so this is
    also the Jacobian-vector product.
    """
    g = grad - unit * np.sum(unit * grad, axis=1, keepdims=True)
    g = g / norms[:, None]
    return g - g.mean(axis=1, keepdims=True)
