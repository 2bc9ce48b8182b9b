"""Dataset manifests, per-video feature files, clip windowing and splits.

A dataset is a tab-separated manifest (one video per line) pointing at two
binary feature files per video: the per-frame behavior features and the
per-frame appearance descriptors. Feature files use a small fixed header
followed by little-endian float32 rows, one row per frame::

    b"BGF1" | u32 version=1 | u8 stream | 3 zero bytes | u32 frames | u32 dim
    frames * dim float32 values, row-major by frame
"""

from __future__ import annotations

import math
import os
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BadMagic,
    DuplicateVideoId,
    MalformedRecord,
    MissingFeatureFile,
    NonFiniteValue,
    TooFewVideos,
    TooShort,
    TruncatedPayload,
    VersionMismatch,
)

MANIFEST_COLUMNS = (
    "video_id",
    "identity",
    "label",
    "source_identity",
    "target_identity",
    "context",
    "behavior_path",
    "appearance_path",
    "fps",
)
MANIFEST_HEADER = "\t".join(MANIFEST_COLUMNS)
EMPTY = "-"

FEATURE_MAGIC = b"BGF1"
FEATURE_VERSION = 1
STREAM_BEHAVIOR = 0
STREAM_APPEARANCE = 1
_HEADER = struct.Struct("<4sIB3xII")

CANONICAL_FPS = 25
CANONICAL_T = 100
CANONICAL_STRIDE = 5


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    identity: str
    label: str  # "real" | "fake"
    behavior_path: str
    appearance_path: str
    fps: int = CANONICAL_FPS
    source_identity: str = ""
    target_identity: str = ""
    context: str = ""

    @property
    def is_fake(self) -> bool:
        return self.label == "fake"


@dataclass
class DatasetManifest:
    records: list[VideoRecord]
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def path(self, record: VideoRecord, stream: str = "behavior") -> Path:
        rel = record.behavior_path if stream == "behavior" else record.appearance_path
        return Path(self.root) / rel

    def identities(self) -> list[str]:
        return sorted({r.identity for r in self.records if r.label == "real"})

    def by_id(self, video_id: str) -> VideoRecord:
        for r in self.records:
            if r.video_id == video_id:
                return r
        raise KeyError(video_id)


@dataclass
class FrameFeatureSequence:
    """Per-frame features of one video, ``data[frame, component]``.

    ``offset`` is the absolute index of ``data[0]`` in the source video;
    it is non-zero only for sequences cut out of a longer one.
    """

    data: np.ndarray
    stream: int = STREAM_BEHAVIOR
    video_id: str = ""
    offset: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"expected a non-empty frames x dim matrix, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue(f"non-finite feature value in {self.video_id or 'sequence'}")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def slice(self, start: int, stop: int) -> FrameFeatureSequence:
        return FrameFeatureSequence(self.data[start:stop], self.stream, self.video_id, self.offset + start)


@dataclass
class ClipFeatureMatrix:
    """A ``dim x t`` window of a sequence: one column per frame."""

    X: np.ndarray
    origin: tuple[str, int] = ("", 0)

    @property
    def dim(self) -> int:
        return self.X.shape[0]

    @property
    def t(self) -> int:
        return self.X.shape[1]


@dataclass
class SplitResult:
    reference: list[VideoRecord]
    test: list[VideoRecord]
    seed: int


@dataclass
class HalfSplit:
    reference: FrameFeatureSequence | None
    test: FrameFeatureSequence


# --------------------------------------------------------------------------
# feature files


def encode_feature_file(seq: FrameFeatureSequence) -> bytes:
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, seq.stream, seq.frames, seq.dim)
    return header + np.ascontiguousarray(seq.data, dtype="<f4").tobytes()


def write_feature_file(path, seq: FrameFeatureSequence | np.ndarray, stream: int | None = None) -> None:
    if not isinstance(seq, FrameFeatureSequence):
        seq = FrameFeatureSequence(seq, STREAM_BEHAVIOR if stream is None else stream)
    elif stream is not None and stream != seq.stream:
        seq = FrameFeatureSequence(seq.data, stream, seq.video_id, seq.offset)
    Path(path).write_bytes(encode_feature_file(seq))


def _parse_header(buf: bytes, where) -> tuple[int, int, int]:
    if len(buf) < 4 or buf[:4] != FEATURE_MAGIC:
        raise BadMagic(f"{where}: not a feature file (magic {bytes(buf[:4])!r})")
    if len(buf) < _HEADER.size:
        raise TruncatedPayload(f"{where}: header truncated ({len(buf)} bytes)")
    _, version, stream, frames, dim = _HEADER.unpack_from(buf)
    if version != FEATURE_VERSION:
        raise VersionMismatch(f"{where}: feature file version {version}, expected {FEATURE_VERSION}")
    return stream, frames, dim


def decode_feature_file(buf: bytes, where="<bytes>", video_id="") -> FrameFeatureSequence:
    stream, frames, dim = _parse_header(buf, where)
    need = frames * dim * 4
    payload = buf[_HEADER.size :]
    if len(payload) != need:
        # trailing garbage is as suspicious as missing bytes
        raise TruncatedPayload(f"{where}: header declares {frames}x{dim} values, payload has {len(payload)} bytes")
    if frames < 1 or dim < 1:
        raise TruncatedPayload(f"{where}: empty feature matrix {frames}x{dim}")
    data = np.frombuffer(payload, dtype="<f4").reshape(frames, dim).astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{where}: non-finite feature value")
    return FrameFeatureSequence(data, stream, video_id)


def read_feature_file(path, video_id="") -> FrameFeatureSequence:
    path = Path(path)
    if not path.exists():
        raise MissingFeatureFile(str(path))
    return decode_feature_file(path.read_bytes(), str(path), video_id)


def read_feature_header(path) -> tuple[int, int, int]:
    """Return ``(stream, frames, dim)`` and check the file size matches."""
    path = Path(path)
    if not path.exists():
        raise MissingFeatureFile(str(path))
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    stream, frames, dim = _parse_header(head, str(path))
    if os.path.getsize(path) != _HEADER.size + 4 * frames * dim:
        raise TruncatedPayload(f"{path}: size does not match header {frames}x{dim}")
    return stream, frames, dim


# --------------------------------------------------------------------------
# manifests


def _opt(value: str) -> str:
    return "" if value == EMPTY else value


def parse_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a TSV manifest.

    With ``check_files`` every referenced feature file must exist and carry
    a valid header whose size matches its payload.
    """
    path = Path(path)
    root = path.parent
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].rstrip("\r") != MANIFEST_HEADER:
        raise MalformedRecord(1, "header", "expected " + MANIFEST_HEADER.replace("\t", "<TAB>"))

    records: list[VideoRecord] = []
    seen: dict[str, int] = {}
    fps0 = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(MANIFEST_COLUMNS):
            raise MalformedRecord(lineno, "*", f"{len(parts)} fields, expected {len(MANIFEST_COLUMNS)}")
        row = dict(zip(MANIFEST_COLUMNS, parts))
        for key in ("video_id", "identity", "behavior_path", "appearance_path"):
            if _opt(row[key]) == "":
                raise MalformedRecord(lineno, key, "required")
        if row["label"] not in ("real", "fake"):
            raise MalformedRecord(lineno, "label", f"{row['label']!r} is not real/fake")
        src, tgt = _opt(row["source_identity"]), _opt(row["target_identity"])
        if row["label"] == "fake":
            if not src:
                raise MalformedRecord(lineno, "source_identity", "required for fake records")
            if not tgt:
                raise MalformedRecord(lineno, "target_identity", "required for fake records")
        else:
            if src:
                raise MalformedRecord(lineno, "source_identity", "must be '-' for real records")
            if tgt:
                raise MalformedRecord(lineno, "target_identity", "must be '-' for real records")
        try:
            fps = int(row["fps"])
        except ValueError:
            raise MalformedRecord(lineno, "fps", f"{row['fps']!r} is not an integer") from None
        if fps <= 0:
            raise MalformedRecord(lineno, "fps", "must be positive")
        if fps0 is None:
            fps0 = fps
        elif fps != fps0:
            raise MalformedRecord(lineno, "fps", f"{fps} differs from {fps0}; resample upstream")
        vid = row["video_id"]
        if vid in seen:
            raise DuplicateVideoId(f"line {lineno}: video_id {vid!r} already used on line {seen[vid]}")
        seen[vid] = lineno
        records.append(
            VideoRecord(
                video_id=vid,
                identity=row["identity"],
                label=row["label"],
                behavior_path=row["behavior_path"],
                appearance_path=row["appearance_path"],
                fps=fps,
                source_identity=src,
                target_identity=tgt,
                context=_opt(row["context"]),
            )
        )

    manifest = DatasetManifest(records, root)
    if check_files:
        for rec in records:
            b_stream, b_frames, _ = read_feature_header(manifest.path(rec, "behavior"))
            a_stream, a_frames, _ = read_feature_header(manifest.path(rec, "appearance"))
            if b_frames != a_frames:
                raise MalformedRecord(seen[rec.video_id], "appearance_path",
                                      f"{a_frames} frames vs {b_frames} behavior frames")
    return manifest


def format_manifest(manifest: DatasetManifest) -> str:
    out = [MANIFEST_HEADER]
    for r in manifest.records:
        cells = [
            r.video_id,
            r.identity,
            r.label,
            r.source_identity or EMPTY,
            r.target_identity or EMPTY,
            r.context or EMPTY,
            r.behavior_path,
            r.appearance_path,
            str(r.fps),
        ]
        out.append("\t".join(cells))
    return "\n".join(out) + "\n"


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(format_manifest(manifest), encoding="utf-8")


def load_video(manifest: DatasetManifest, record: VideoRecord) -> tuple[FrameFeatureSequence, FrameFeatureSequence]:
    """Read the (behavior, appearance) sequences of one record."""
    b = read_feature_file(manifest.path(record, "behavior"), record.video_id)
    a = read_feature_file(manifest.path(record, "appearance"), record.video_id)
    return b, a


# --------------------------------------------------------------------------
# windowing and splits


def clip_starts(frames: int, t: int, stride: int) -> range:
    if t < 1 or stride < 1:
        raise ValueError("t and stride must be >= 1")
    if frames < t:
        return range(0)
    return range(0, frames - t + 1, stride)


def window_clips(seq: FrameFeatureSequence, t: int = CANONICAL_T, stride: int = CANONICAL_STRIDE) -> list[ClipFeatureMatrix]:
    return [
        ClipFeatureMatrix(seq.data[s : s + t].T.astype(np.float64), (seq.video_id, seq.offset + s))
        for s in clip_starts(seq.frames, t, stride)
    ]


def window_stack(seq: FrameFeatureSequence, t: int = CANONICAL_T, stride: int = CANONICAL_STRIDE) -> np.ndarray:
    """All windows at once as a ``(n_clips, dim, t)`` float64 array."""
    starts = clip_starts(seq.frames, t, stride)
    if len(starts) == 0:
        return np.empty((0, seq.dim, t))
    win = sliding_window_view(seq.data, t, axis=0)  # (frames - t + 1, dim, t)
    return np.ascontiguousarray(win[::stride], dtype=np.float64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_identity_videos(manifest: DatasetManifest, ratio: float = 0.8, seed: int = 0) -> SplitResult:
    """Per-identity reference/test split of the real videos.

    Each identity's real videos are shuffled with a generator seeded by
    ``seed`` (identities visited in sorted order) and the first
    ``round(ratio * n)`` go to the reference side, clamped so both sides
    keep at least one video. Fakes always go to the test side.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    real = defaultdict(list)
    for idx, rec in enumerate(manifest.records):
        if rec.label == "real":
            real[rec.identity].append(idx)

    rng = np.random.default_rng(seed)
    ref_idx = set()
    for ident in sorted(real):
        idxs = real[ident]
        if len(idxs) < 2:
            raise TooFewVideos(ident, len(idxs))
        n_ref = min(max(_round_half_up(ratio * len(idxs)), 1), len(idxs) - 1)
        perm = rng.permutation(len(idxs))
        ref_idx.update(idxs[p] for p in perm[:n_ref])

    reference = [r for i, r in enumerate(manifest.records) if i in ref_idx]
    test = [r for i, r in enumerate(manifest.records) if i not in ref_idx]
    return SplitResult(reference, test, seed)


def split_video_halves(seq: FrameFeatureSequence, label: str, t: int = 1) -> HalfSplit:
    """Split one video in time: reference from the first half, test from the second.

    A real video keeps its first ``ceil(frames / 2)`` frames for reference.
    For a fake the first half is dropped and only the second half is tested.
    """
    if seq.frames < 2 * t:
        raise TooShort(f"{seq.video_id or 'sequence'}: {seq.frames} frames, need {2 * t}")
    half = (seq.frames + 1) // 2
    test = seq.slice(half, seq.frames)
    if label == "real":
        return HalfSplit(seq.slice(0, half), test)
    if label == "fake":
        return HalfSplit(None, test)
    raise ValueError(f"label must be real or fake, got {label!r}")
