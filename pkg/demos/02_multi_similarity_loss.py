"""
Multi-similarity loss by hand
=============================

Mining picks the informative pairs of a batch, soft weights rank them,
and the gradient with respect to each similarity is just its weight
divided by the batch size (negative for positives).
"""

# %%
import numpy as np

from fakebio.metric_learning import (
    MsLossConfig,
    SimilarityMatrix,
    mine_pairs,
    ms_loss,
    ms_loss_grad,
    pair_weights,
    pairwise_similarity,
)

# %%
# The four-clip example: anchor 0 sees its positive at 0.8 and negatives at
# 0.75 and 0.5. With a 0.1 margin only the 0.75 negative is hard.
labels = np.array(["A", "A", "B", "B"])
S = np.array([[1, 0.8, 0.75, 0.5], [0.8, 1, 0.1, 0.1], [0.75, 0.1, 1, 0.9], [0.5, 0.1, 0.9, 1]])
mining = mine_pairs(SimilarityMatrix(S, labels), 0.1)
print("anchor 0 positives", mining.positives[0], "negatives", mining.negatives[0])

# %%
# A random batch of unit embeddings.
rng = np.random.default_rng(1)
E = rng.standard_normal((16, 8))
E /= np.linalg.norm(E, axis=1, keepdims=True)
labels = np.repeat(["a", "b", "c", "d"], 4)
cfg = MsLossConfig(lam=0.5)
sim = pairwise_similarity(E, labels)
mining = mine_pairs(sim, cfg.epsilon)
print("mined", mining.pos.sum(), "positive and", mining.neg.sum(), "negative pairs")
print("loss", ms_loss(sim, mining, cfg))

# %%
# Gradient against the weights, then against a central difference with the
# mined sets held fixed.
G = ms_loss_grad(sim, mining, cfg)
w = pair_weights(sim, mining, cfg)
print("max | |G| - w/m |:", np.abs(np.abs(G[mining.neg]) - w.w_neg[mining.neg] / 16).max())

h = 1e-5
S = sim.S
fd = np.zeros_like(S)
for i in range(16):
    for j in range(16):
        Sp, Sm = S.copy(), S.copy()
        Sp[i, j] += h
        Sm[i, j] -= h
        fd[i, j] = (ms_loss(SimilarityMatrix(Sp, labels), mining, cfg)
                    - ms_loss(SimilarityMatrix(Sm, labels), mining, cfg)) / (2 * h)
print("relative error vs finite differences:", np.linalg.norm(fd - G) / np.linalg.norm(G))
