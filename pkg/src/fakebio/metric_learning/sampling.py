"""P x K identity batch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientIdentities
from ..feature_store import ClipFeatureMatrix


@dataclass
class Batch:
    X: np.ndarray  # (P*K, dim, t)
    labels: np.ndarray
    origins: list  # (video_id, start) per clip

    def __len__(self):
        return len(self.labels)

    @property
    def clips(self):
        return [(ClipFeatureMatrix(x, o), y) for x, o, y in zip(self.X, self.origins, self.labels)]


class ClipIndex:
    """Per-identity lists of frame matrices (``frames x dim``) to draw clips from."""

    def __init__(self, videos: dict, video_ids: dict | None = None):
        self.videos = {k: [np.asarray(v, dtype=np.float64) for v in vs] for k, vs in videos.items()}
        self.video_ids = video_ids or {k: [f"{k}/{i}" for i in range(len(vs))] for k, vs in videos.items()}

    @classmethod
    def from_sequences(cls, pairs) -> ClipIndex:
        """Build from ``(identity, FrameFeatureSequence)`` pairs."""
        videos, ids = {}, {}
        for ident, seq in pairs:
            videos.setdefault(ident, []).append(seq.data)
            ids.setdefault(ident, []).append(seq.video_id)
        return cls(videos, ids)

    @property
    def identities(self) -> list[str]:
        return sorted(self.videos)

    def eligible(self, t: int) -> dict[str, list[int]]:
        out = {}
        for ident in self.identities:
            ok = [i for i, v in enumerate(self.videos[ident]) if v.shape[0] >= t]
            if ok:
                out[ident] = ok
        return out


def sample_batch(index: ClipIndex, P: int, K: int, t: int, rng: np.random.Generator) -> Batch:
    """Draw P distinct identities and K random t-frame windows for each.

    Videos are chosen without replacement when an identity has at least K
    of them and with replacement otherwise; each window start is uniform.
    """
    pool = index.eligible(t)
    names = list(pool)
    if len(names) < P:
        raise InsufficientIdentities(f"need {P} identities with a >= {t}-frame video, have {len(names)}")
    chosen = rng.choice(len(names), size=P, replace=False)
    xs, labels, origins = [], [], []
    for c in chosen:
        ident = names[c]
        vids = pool[ident]
        picks = rng.choice(len(vids), size=K, replace=len(vids) < K)
        for p in picks:
            vi = vids[p]
            frames = index.videos[ident][vi]
            start = int(rng.integers(0, frames.shape[0] - t + 1))
            xs.append(frames[start : start + t].T)
            labels.append(ident)
            origins.append((index.video_ids[ident][vi], start))
    return Batch(np.stack(xs), np.array(labels), origins)
