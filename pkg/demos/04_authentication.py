"""
Enrollment and the real/fake rule
=================================

Each identity gets two galleries: appearance descriptors and behavior
embeddings of authentic clips. A clip is real when both galleries point at
the same person and the appearance match is confident.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from fakebio.authentication import (
    classify,
    enroll,
    fakeness_score,
    load_reference_set,
    match_identity,
    save_reference_set,
)

# %%
# Exact cosine search: the query leans towards A.
q = np.array([0.9, 0.1]) / np.sqrt(0.82)
print(match_identity(q, {"A": np.array([[1.0, 0.0]]), "B": np.array([[0.0, 1.0]])}))

# %%
# Two people, two enrolled clips each, with orthogonal signatures.
rng = np.random.default_rng(0)


def unit(v):
    return v / np.linalg.norm(v)


app = {"alice": unit(rng.standard_normal(8)), "bob": unit(rng.standard_normal(8))}
beh = {"alice": unit(rng.standard_normal(4)), "bob": unit(rng.standard_normal(4))}
clips = [(p, unit(beh[p] + 0.05 * rng.standard_normal(4)), unit(app[p] + 0.05 * rng.standard_normal(8)))
         for p in ("alice", "bob") for _ in range(2)]
refs = enroll(clips)
print("enrolled", refs.counts())

# %%
# Alice's face with Alice's behavior, Alice's face with Bob's behavior (a
# face swap onto Bob), and a blurry Alice.
cases = {
    "genuine": (app["alice"], beh["alice"]),
    "face swap": (app["alice"], beh["bob"]),
    "low confidence": (unit(app["alice"] + 1.5 * rng.standard_normal(8)), beh["alice"]),
}
for name, (f, b) in cases.items():
    v = classify(f, b, refs, tau_f=0.86)
    print(f"{name:15s} {v.label:5s} {v.reason:18s} c_f={v.match.c_f:.3f} score={fakeness_score(f, b, refs):.3f}")

# %%
path = Path(tempfile.mkdtemp()) / "refs.bref"
save_reference_set(refs, path)
print("reloaded equal:", load_reference_set(path).equals(refs))
