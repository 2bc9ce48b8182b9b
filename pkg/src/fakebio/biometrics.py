"""Per-clip behavior embeddings and appearance descriptors."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateVector, NonFiniteValue, ShapeMismatch
from .feature_store import FrameFeatureSequence, VideoRecord, clip_starts, window_stack
from .metric_learning.encoder import EncoderParams, forward_batch

DEGENERATE_NORM = 1e-12
EMBED_CHUNK = 512


def behavior_embed(params: EncoderParams, clip) -> np.ndarray:
    """Embed one ``dim x t`` clip; the result is zero-mean and unit-length."""
    emb, _ = forward_batch(params, clip)
    return emb[0]


def behavior_embed_batch(params: EncoderParams, X: np.ndarray) -> np.ndarray:
    """Embed ``(n, dim, t)`` clips in fixed-size chunks. Returns ``(n, d)``."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.empty((0, params.embedding_dim))
    out = [forward_batch(params, X[i : i + EMBED_CHUNK])[0] for i in range(0, len(X), EMBED_CHUNK)]
    return np.concatenate(out)


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1)
    bad = np.flatnonzero(norms <= DEGENERATE_NORM)
    if bad.size:
        raise DegenerateVector(f"mean appearance of window {bad[0]} is zero")
    return M / norms[:, None]


def appearance_descriptor(frames) -> np.ndarray:
    """Average per-frame descriptors over the window and scale to unit length.

    ``frames`` is a ``t x dim`` matrix (one row per frame) or a
    :class:`FrameFeatureSequence` holding exactly the window.
    """
    if isinstance(frames, FrameFeatureSequence):
        frames = frames.data
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ShapeMismatch(f"expected a frames x dim window, got shape {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise NonFiniteValue("non-finite appearance value")
    return _unit_rows(frames.mean(axis=0)[None, :])[0]


def appearance_descriptors(seq: FrameFeatureSequence, t: int, stride: int) -> np.ndarray:
    """Descriptors for every window of ``seq`` (same starts as clip windowing)."""
    n = len(clip_starts(seq.frames, t, stride))
    if n == 0:
        return np.empty((0, seq.dim))
    win = sliding_window_view(seq.data.astype(np.float64), t, axis=0)[::stride]  # (n, dim, t)
    return _unit_rows(win.mean(axis=2))


def clip_signatures(params: EncoderParams, behavior: FrameFeatureSequence, appearance: FrameFeatureSequence,
                    t: int, stride: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Both signatures for every window of a video: ``(B, F, starts)``."""
    if behavior.frames != appearance.frames:
        raise ShapeMismatch(f"{behavior.video_id}: {behavior.frames} behavior vs "
                            f"{appearance.frames} appearance frames")
    starts = [behavior.offset + s for s in clip_starts(behavior.frames, t, stride)]
    B = behavior_embed_batch(params, window_stack(behavior, t, stride))
    F = appearance_descriptors(appearance, t, stride)
    return B, F, starts


@dataclass
class VideoPart:
    """A video (or a time range of one) paired with its manifest record."""

    record: VideoRecord
    behavior: FrameFeatureSequence
    appearance: FrameFeatureSequence


@dataclass
class Signatures:
    """Per-clip signatures with their bookkeeping, one row per clip.

    ``identity`` is the person whose behavior the clip shows: the recorded
    identity for real videos and the swap target for fakes.
    """

    B: np.ndarray
    F: np.ndarray
    video_id: np.ndarray
    start: np.ndarray
    truth: np.ndarray
    identity: np.ndarray
    source: np.ndarray
    target: np.ndarray
    context: np.ndarray

    def __len__(self):
        return len(self.B)

    def subset(self, mask) -> Signatures:
        return Signatures(*(getattr(self, f.name)[mask] for f in fields(self)))

    @classmethod
    def empty(cls, behavior_dim: int, appearance_dim: int) -> Signatures:
        s = np.array([], dtype=object)
        return cls(np.empty((0, behavior_dim)), np.empty((0, appearance_dim)), s, np.array([], dtype=np.int64),
                   s, s, s, s, s)


def extract_signatures(params: EncoderParams, parts: list[VideoPart], t: int, stride: int) -> Signatures:
    """Window every part and compute both signatures for each clip."""
    Bs, Fs, meta = [], [], []
    for part in parts:
        B, F, starts = clip_signatures(params, part.behavior, part.appearance, t, stride)
        rec = part.record
        ident = rec.target_identity if rec.is_fake else rec.identity
        Bs.append(B)
        Fs.append(F)
        meta += [(rec.video_id, s, rec.label, ident, rec.source_identity, rec.target_identity, rec.context)
                 for s in starts]
    if not meta:
        dim_a = parts[0].appearance.dim if parts else 0
        return Signatures.empty(params.embedding_dim, dim_a)
    cols = list(zip(*meta))
    obj = [np.array(c, dtype=object) for c in cols]
    return Signatures(np.concatenate(Bs), np.concatenate(Fs), obj[0], np.array(cols[1], dtype=np.int64),
                      *obj[2:])
