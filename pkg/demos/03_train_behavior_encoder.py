"""
Training the behavior encoder
=============================

The encoder maps a dim x t clip to a unit, zero-mean embedding. It is
trained on identity-balanced batches (P people, K clips each) drawn from a
world of people that never appear at test time.

Set DEMO_ITERS to train longer; the acceptance run uses 2000 iterations.
"""

# %%
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from fakebio.metric_learning import TrainConfig, save_checkpoint, train
from fakebio.protocol import training_index, training_world
from fakebio.synthetic import WorldConfig, generate_world

work = Path(tempfile.mkdtemp())
logging.basicConfig(level=logging.INFO, format="%(message)s")
iters = int(os.environ.get("DEMO_ITERS", "300"))

# %%
world = training_world(WorldConfig())
man = generate_world(world, work / "train_world")
index = training_index(man)
print(len(index.identities), "training identities")

# %%
cfg = TrainConfig.desk(iterations=iters)
print(f"batch {cfg.identities_per_batch} x {cfg.clips_per_identity}, lr {cfg.learning_rate}, "
      f"lambda {cfg.loss.lam}, d {cfg.embedding_dim}")
params, log = train(index, cfg, progress_every=max(iters // 5, 1))

n = min(50, iters // 2)
print(f"mean loss, first {n} steps {np.mean(log.loss[:n]):.4f}, last {n} steps {np.mean(log.loss[-n:]):.4f}")

# %%
save_checkpoint(params, work / "encoder.bnet", cfg.to_text())
print("checkpoint", work / "encoder.bnet", (work / "encoder.bnet").stat().st_size, "bytes")
