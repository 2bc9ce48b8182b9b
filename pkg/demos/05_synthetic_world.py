"""
The synthetic world and its face swaps
======================================

Every person has a fixed appearance signature and behavior made of a few
sinusoids, reshaped by the recording context. A good face swap puts the
source's face on the target's behavior; a failed one leaves the target's
face in place.
"""

# %%
import numpy as np

from fakebio.biometrics import appearance_descriptor
from fakebio.synthetic import WorldConfig, make_identities, synth_face_swap

cfg = WorldConfig()
people = make_identities(cfg)
sig = np.stack([p.appearance for p in people])
G = sig @ sig.T
np.fill_diagonal(G, 0)
print(len(people), "people, largest |cos| between signatures:", round(float(np.abs(G).max()), 3))

# %%
src, tgt = people[0], people[1]
rng = np.random.default_rng(0)
for mode in ("good", "failed"):
    _, app = synth_face_swap(src, tgt, mode, cfg, rng)
    f = appearance_descriptor(app[:100])
    print(f"{mode:6s} swap: cos to source {f @ src.appearance:.3f}, cos to target {f @ tgt.appearance:.3f}")

# %%
print("behavior frequencies (cycles/frame) of", src.name, np.round(src.freqs, 4))
