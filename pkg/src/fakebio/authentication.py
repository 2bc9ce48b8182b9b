"""Reference galleries and the real/fake decision.

A reference set holds, per enrolled identity, the appearance descriptors
``F`` and behavior embeddings ``B`` of its authentic clips. Galleries are
stored row-per-clip (``F[ident]`` has shape ``(m_i, appearance_dim)``), i.e.
the transpose of the column-per-clip matrices used in the math, and in
float32 so that the on-disk form round-trips exactly.

A test clip is matched against both galleries; it is real only when both
match the same identity and the appearance match is confident::

    i_f = argmax_i max_j <f, F_i[j]>        i_b = argmax_i max_j <b, B_i[j]>
    real  iff  i_f == i_b  and  c_f >= tau_f
"""

from __future__ import annotations

import io
import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyEnrollment,
    EmptyReferenceSet,
    NonUnitInput,
    TruncatedPayload,
    VersionMismatch,
)

REF_MAGIC = b"BREF"
REF_VERSION = 1
UNIT_TOL = 1e-5
MISMATCH_SCORE = 2.0
DEFAULT_TAU_F = 0.86
_QUERY_CHUNK = 1024


@dataclass
class ReferenceSet:
    identities: list[str]
    F: dict[str, np.ndarray]
    B: dict[str, np.ndarray]

    def __post_init__(self):
        for ident in self.identities:
            if len(self.F[ident]) != len(self.B[ident]):
                raise DimensionMismatch(f"{ident}: {len(self.F[ident])} appearance vs "
                                        f"{len(self.B[ident])} behavior columns")

    def __len__(self):
        return len(self.identities)

    def counts(self) -> dict[str, int]:
        return {i: len(self.F[i]) for i in self.identities}

    @property
    def appearance_dim(self) -> int:
        return self.F[self.identities[0]].shape[1]

    @property
    def behavior_dim(self) -> int:
        return self.B[self.identities[0]].shape[1]

    def F_matrix(self, ident: str) -> np.ndarray:
        """The ``appearance_dim x m_i`` matrix with one clip per column."""
        return self.F[ident].T

    def B_matrix(self, ident: str) -> np.ndarray:
        return self.B[ident].T

    def equals(self, other: ReferenceSet) -> bool:
        return self.identities == other.identities and all(
            np.array_equal(self.F[i], other.F[i]) and np.array_equal(self.B[i], other.B[i])
            for i in self.identities
        )


@dataclass(frozen=True)
class MatchResult:
    i_f: str
    c_f: float
    i_b: str
    c_b: float


@dataclass(frozen=True)
class Verdict:
    label: str  # "real" | "fake"
    reason: str  # "matched" | "identity_mismatch" | "low_confidence"
    match: MatchResult
    threshold: float


def _check_unit(M: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(np.asarray(M, dtype=np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if bad.size:
        raise NonUnitInput(f"{what} row {bad[0]} has norm {norms[bad[0]]:.9g}")


def _unit(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NonUnitInput("zero vector in a gallery or query")
    return M / norms


def enroll(clips) -> ReferenceSet:
    """Build galleries from ``(identity, behavior, appearance)`` triples."""
    groups_b, groups_f = defaultdict(list), defaultdict(list)
    for ident, b, f in clips:
        groups_b[ident].append(np.asarray(b, dtype=np.float64))
        groups_f[ident].append(np.asarray(f, dtype=np.float64))
    if not groups_b:
        raise EmptyEnrollment("no clips to enroll")
    ids = sorted(groups_b)
    return enroll_arrays(
        np.concatenate([[i] * len(groups_b[i]) for i in ids]),
        np.concatenate([np.stack(groups_b[i]) for i in ids]),
        np.concatenate([np.stack(groups_f[i]) for i in ids]),
    )


def enroll_arrays(identities, B: np.ndarray, F: np.ndarray) -> ReferenceSet:
    """Vectorised :func:`enroll`: one row of ``B``/``F`` per clip."""
    identities = np.asarray(identities)
    if len(identities) == 0:
        raise EmptyEnrollment("no clips to enroll")
    if not (len(identities) == len(B) == len(F)):
        raise DimensionMismatch("identities, B and F must have one row per clip")
    _check_unit(B, "behavior")
    _check_unit(F, "appearance")
    ids = sorted(set(identities.tolist()))
    Fd, Bd = {}, {}
    for ident in ids:
        sel = identities == ident
        Fd[ident] = np.ascontiguousarray(F[sel], dtype=np.float32)
        Bd[ident] = np.ascontiguousarray(B[sel], dtype=np.float32)
    return ReferenceSet(ids, Fd, Bd)


# --------------------------------------------------------------------------
# matching


class Gallery:
    """Concatenated per-identity rows for fast exhaustive max search."""

    def __init__(self, identities: list[str], rows: dict[str, np.ndarray]):
        if not identities:
            raise EmptyReferenceSet("reference set is empty")
        self.identities = list(identities)
        blocks = [np.asarray(rows[i], dtype=np.float64) for i in self.identities]
        if any(len(b) == 0 for b in blocks):
            raise EmptyReferenceSet("an identity has no reference clips")
        # renormalise in float64: float32 storage leaves norms off by ~1e-8,
        # and the match score is meant to be a true cosine
        self.G = _unit(np.concatenate(blocks)).T  # (dim, total)
        self.offsets = np.cumsum([0] + [len(b) for b in blocks[:-1]])

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    def best(self, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per query: (identity index, best similarity, per-identity maxima)."""
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != self.dim:
            raise DimensionMismatch(f"query dim {Q.shape[1]} vs gallery dim {self.dim}")
        Q = _unit(Q)
        per_id = np.empty((len(Q), len(self.identities)))
        for a in range(0, len(Q), _QUERY_CHUNK):
            S = Q[a : a + _QUERY_CHUNK] @ self.G
            per_id[a : a + _QUERY_CHUNK] = np.maximum.reduceat(S, self.offsets, axis=1)
        # argmax takes the first maximum; identities are sorted, so ties go
        # to the lexicographically smallest label
        idx = np.argmax(per_id, axis=1)
        return idx, per_id[np.arange(len(Q)), idx], per_id


def match_identity(query, galleries, identities=None) -> tuple[str, float]:
    """Best-matching identity and its similarity for one unit query.

    ``galleries`` maps identity -> rows (one reference clip per row).
    """
    if identities is None:
        identities = sorted(galleries)
    g = Gallery(list(identities), galleries)
    idx, sim, _ = g.best(query)
    return g.identities[idx[0]], float(sim[0])


class Matcher:
    """Both galleries of a reference set, ready for batched queries."""

    def __init__(self, refs: ReferenceSet):
        if len(refs) == 0:
            raise EmptyReferenceSet("reference set is empty")
        self.refs = refs
        self.face = Gallery(refs.identities, refs.F)
        self.behavior = Gallery(refs.identities, refs.B)

    def match_many(self, Fq: np.ndarray, Bq: np.ndarray) -> list[MatchResult]:
        fi, fs, _ = self.face.best(Fq)
        bi, bs, _ = self.behavior.best(Bq)
        ids = self.refs.identities
        return [MatchResult(ids[a], float(c), ids[b], float(d)) for a, c, b, d in zip(fi, fs, bi, bs)]

    def match(self, f, b) -> MatchResult:
        return self.match_many(np.atleast_2d(f), np.atleast_2d(b))[0]


def verdict_from_match(match: MatchResult, tau_f: float = DEFAULT_TAU_F) -> Verdict:
    # identity mismatch is reported ahead of low confidence
    if match.i_f != match.i_b:
        return Verdict("fake", "identity_mismatch", match, tau_f)
    if match.c_f < tau_f:
        return Verdict("fake", "low_confidence", match, tau_f)
    return Verdict("real", "matched", match, tau_f)


def score_from_match(match: MatchResult) -> float:
    return MISMATCH_SCORE if match.i_f != match.i_b else 1.0 - match.c_f


def flagged(score, tau_f):
    """Fake decision from a fakeness score: ``score > 1 - tau_f``."""
    return np.asarray(score) > 1.0 - np.asarray(tau_f)


def classify(f, b, refs: ReferenceSet | Matcher, tau_f: float = DEFAULT_TAU_F) -> Verdict:
    matcher = refs if isinstance(refs, Matcher) else Matcher(refs)
    return verdict_from_match(matcher.match(f, b), tau_f)


def fakeness_score(f, b, refs: ReferenceSet | Matcher) -> float:
    matcher = refs if isinstance(refs, Matcher) else Matcher(refs)
    return score_from_match(matcher.match(f, b))


# --------------------------------------------------------------------------
# reference-set file


def encode_reference_set(refs: ReferenceSet) -> bytes:
    buf = io.BytesIO()
    buf.write(REF_MAGIC)
    buf.write(struct.pack("<II", REF_VERSION, len(refs.identities)))
    for ident in refs.identities:
        label = ident.encode("utf-8")
        F, B = refs.F[ident], refs.B[ident]
        buf.write(struct.pack("<H", len(label)))
        buf.write(label)
        buf.write(struct.pack("<III", len(F), F.shape[1], B.shape[1]))
        # column-major dim x m is row-major m x dim
        buf.write(np.ascontiguousarray(F, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(B, dtype="<f4").tobytes())
    return buf.getvalue()


def decode_reference_set(data: bytes, where="<bytes>") -> ReferenceSet:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedPayload(f"{where}: truncated at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != REF_MAGIC:
        raise BadMagic(f"{where}: not a reference-set file")
    version, count = struct.unpack("<II", take(8))
    if version != REF_VERSION:
        raise VersionMismatch(f"{where}: reference-set version {version}, expected {REF_VERSION}")
    ids, F, B = [], {}, {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        ident = take(n).decode("utf-8")
        m, a_dim, d = struct.unpack("<III", take(12))
        F[ident] = np.frombuffer(take(4 * m * a_dim), dtype="<f4").reshape(m, a_dim).astype(np.float32)
        B[ident] = np.frombuffer(take(4 * m * d), dtype="<f4").reshape(m, d).astype(np.float32)
        ids.append(ident)
    if pos != len(data):
        raise TruncatedPayload(f"{where}: {len(data) - pos} trailing bytes")
    return ReferenceSet(ids, F, B)


def save_reference_set(refs: ReferenceSet, path) -> None:
    Path(path).write_bytes(encode_reference_set(refs))


def load_reference_set(path) -> ReferenceSet:
    return decode_reference_set(Path(path).read_bytes(), str(path))
