"""
The measurement protocol
========================

Train on an unseen population, enroll 80% of each person's real videos,
score every test clip and sweep the confidence threshold. The default
world and recipe take about two minutes on one core.

Set DEMO_ITERS to shorten training (the numbers then get worse).
"""

# %%
import os
import tempfile

from fakebio.evaluation import accuracy_at, behavior_context_distributions, reference_ablation, similarity_distributions
from fakebio.metric_learning import TrainConfig
from fakebio.protocol import run_desk, tau_or_default
from fakebio.synthetic import WorldConfig

cfg = TrainConfig.desk(iterations=int(os.environ.get("DEMO_ITERS", "2000")))
run = run_desk(tempfile.mkdtemp(), WorldConfig(), cfg)
print("timings (s):", {k: round(v, 1) for k, v in run.seconds.items()})

# %%
tau = tau_or_default(run)
print("crossover:", run.crossover, " AUC:", run.auc)
print("accuracy at the crossover, or 0.86 without one (real, fake, mean):", accuracy_at(run.records, tau))
print("accuracy at tau_f = 0.86:", accuracy_at(run.records, 0.86))

# %%
# Face-swap clips resemble their source, not the person whose behavior they carry.
fakes = run.test_sigs.subset(run.test_sigs.truth == "fake")
print("fake vs source gallery", round(similarity_distributions(fakes, run.refs, "vs_source").mean, 3),
      " fake vs target gallery", round(similarity_distributions(fakes, run.refs, "vs_target").mean, 3))

# %%
# Behavior embeddings separate people more than contexts.
reals = run.test_sigs.subset(run.test_sigs.truth == "real")
for k, h in behavior_context_distributions(reals.B, reals.identity, reals.context).items():
    print(f"{k:26s} mean {h.mean:.3f} over {h.n} pairs")

# %%
# Fewer enrolled clips per person, lower accuracy.
print(reference_ablation(run.ref_sigs, run.test_sigs, [1, 2, 10, 50], tau_f=tau, trials=3))
