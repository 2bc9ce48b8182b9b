import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import clip_starts_brute

from fakebio.errors import (
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
from fakebio.feature_store import (
    MANIFEST_HEADER,
    STREAM_APPEARANCE,
    DatasetManifest,
    FrameFeatureSequence,
    VideoRecord,
    decode_feature_file,
    encode_feature_file,
    parse_manifest,
    read_feature_file,
    split_identity_videos,
    split_video_halves,
    window_clips,
    window_stack,
    write_feature_file,
    write_manifest,
)
from fakebio.synthetic import WorldConfig, generate_world


def _video(tmp_path, vid, frames=120, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    b = f"{vid}.b.bgf"
    a = f"{vid}.a.bgf"
    write_feature_file(tmp_path / b, rng.standard_normal((frames, dim)))
    write_feature_file(tmp_path / a, rng.standard_normal((frames, dim + 2)), STREAM_APPEARANCE)
    return b, a


def _manifest_text(rows):
    return MANIFEST_HEADER + "\n" + "\n".join("\t".join(r) for r in rows) + "\n"


# --------------------------------------------------------------------------
# feature files


def test_feature_round_trip_100x256(tmp_path):
    data = np.random.default_rng(1).standard_normal((100, 256)).astype(np.float32)
    write_feature_file(tmp_path / "x.bgf", data)
    seq = read_feature_file(tmp_path / "x.bgf")
    assert seq.frames == 100 and seq.dim == 256
    assert np.array_equal(seq.data, data)


def test_feature_file_header_layout():
    seq = FrameFeatureSequence(np.ones((3, 2)), STREAM_APPEARANCE)
    raw = encode_feature_file(seq)
    assert raw[:4] == b"BGF1"
    assert raw[4:8] == (1).to_bytes(4, "little")
    assert raw[8] == 1 and raw[9:12] == b"\0\0\0"
    assert raw[12:16] == (3).to_bytes(4, "little") and raw[16:20] == (2).to_bytes(4, "little")
    assert len(raw) == 20 + 4 * 6


def test_truncated_mid_payload():
    raw = encode_feature_file(FrameFeatureSequence(np.ones((10, 4))))
    with pytest.raises(TruncatedPayload):
        decode_feature_file(raw[:-7])


def test_header_declares_more_frames_than_payload():
    # byte surgery: 100 frames declared, 99 frames of payload
    raw = bytearray(encode_feature_file(FrameFeatureSequence(np.ones((100, 8)))))
    cut = bytes(raw[: len(raw) - 8 * 4])
    with pytest.raises(TruncatedPayload):
        decode_feature_file(cut)


def test_bad_magic_and_version():
    raw = bytearray(encode_feature_file(FrameFeatureSequence(np.ones((2, 2)))))
    with pytest.raises(BadMagic):
        decode_feature_file(b"XXXX" + bytes(raw[4:]))
    raw[4] = 2
    with pytest.raises(VersionMismatch):
        decode_feature_file(bytes(raw))


def test_non_finite_payload_rejected():
    raw = bytearray(encode_feature_file(FrameFeatureSequence(np.ones((2, 2)))))
    raw[20:24] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(NonFiniteValue):
        decode_feature_file(bytes(raw))
    with pytest.raises(NonFiniteValue):
        FrameFeatureSequence(np.array([[np.inf]]))


def test_missing_feature_file(tmp_path):
    with pytest.raises(MissingFeatureFile):
        read_feature_file(tmp_path / "nope.bgf")


@settings(max_examples=40, deadline=None)
@given(frames=st.integers(1, 30), dim=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_feature_bytes_round_trip(frames, dim, seed):
    data = np.random.default_rng(seed).standard_normal((frames, dim))
    raw = encode_feature_file(FrameFeatureSequence(data))
    assert encode_feature_file(decode_feature_file(raw)) == raw


# --------------------------------------------------------------------------
# manifests


def test_two_real_records(tmp_path):
    b0, a0 = _video(tmp_path, "v0")
    b1, a1 = _video(tmp_path, "v1", seed=1)
    rows = [["v0", "alice", "real", "-", "-", "-", b0, a0, "25"],
            ["v1", "bob", "real", "-", "-", "home", b1, a1, "25"]]
    (tmp_path / "m.tsv").write_text(_manifest_text(rows), encoding="utf-8")
    man = parse_manifest(tmp_path / "m.tsv")
    assert len(man.records) == 2
    assert man.records[1].context == "home" and man.records[0].context == ""
    assert man.identities() == ["alice", "bob"]


def test_fake_missing_target_is_malformed(tmp_path):
    b0, a0 = _video(tmp_path, "v0")
    rows = [["v0", "alice", "fake", "alice", "-", "-", b0, a0, "25"]]
    (tmp_path / "m.tsv").write_text(_manifest_text(rows), encoding="utf-8")
    with pytest.raises(MalformedRecord) as exc:
        parse_manifest(tmp_path / "m.tsv")
    assert exc.value.line == 2 and exc.value.field == "target_identity"


@pytest.mark.parametrize("row,field", [
    (["v0", "alice", "real", "bob", "-", "-", "B", "A", "25"], "source_identity"),
    (["v0", "alice", "maybe", "-", "-", "-", "B", "A", "25"], "label"),
    (["v0", "alice", "real", "-", "-", "-", "B", "A", "0"], "fps"),
    (["v0", "alice", "real", "-", "-", "-", "B", "A", "2x"], "fps"),
    (["v0", "-", "real", "-", "-", "-", "B", "A", "25"], "identity"),
    (["v0", "alice", "real", "-", "-", "-", "B", "A"], "*"),
])
def test_malformed_rows(tmp_path, row, field):
    b0, a0 = _video(tmp_path, "v0")
    row = [b0 if c == "B" else a0 if c == "A" else c for c in row]
    (tmp_path / "m.tsv").write_text(_manifest_text([row]), encoding="utf-8")
    with pytest.raises(MalformedRecord) as exc:
        parse_manifest(tmp_path / "m.tsv")
    assert exc.value.field == field


def test_mixed_fps_rejected(tmp_path):
    b0, a0 = _video(tmp_path, "v0")
    rows = [["v0", "a", "real", "-", "-", "-", b0, a0, "25"], ["v1", "a", "real", "-", "-", "-", b0, a0, "30"]]
    (tmp_path / "m.tsv").write_text(_manifest_text(rows), encoding="utf-8")
    with pytest.raises(MalformedRecord) as exc:
        parse_manifest(tmp_path / "m.tsv")
    assert exc.value.field == "fps"


def test_duplicate_and_missing_files(tmp_path):
    b0, a0 = _video(tmp_path, "v0")
    rows = [["v0", "a", "real", "-", "-", "-", b0, a0, "25"], ["v0", "b", "real", "-", "-", "-", b0, a0, "25"]]
    (tmp_path / "m.tsv").write_text(_manifest_text(rows), encoding="utf-8")
    with pytest.raises(DuplicateVideoId):
        parse_manifest(tmp_path / "m.tsv")
    rows = [["v0", "a", "real", "-", "-", "-", "gone.bgf", a0, "25"]]
    (tmp_path / "m.tsv").write_text(_manifest_text(rows), encoding="utf-8")
    with pytest.raises(MissingFeatureFile):
        parse_manifest(tmp_path / "m.tsv")


def test_bad_header(tmp_path):
    (tmp_path / "m.tsv").write_text("video_id\tidentity\n", encoding="utf-8")
    with pytest.raises(MalformedRecord):
        parse_manifest(tmp_path / "m.tsv")


def test_synthetic_world_manifest_parses(tmp_path):
    cfg = WorldConfig(frames_per_video=120)
    generate_world(cfg, tmp_path)
    man = parse_manifest(tmp_path / "manifest.tsv")
    real = [r for r in man.records if r.label == "real"]
    assert len(real) == 320
    assert len(man.records) == 320 + cfg.n_fakes


def test_write_manifest_round_trip(tmp_path):
    b0, a0 = _video(tmp_path, "v0")
    man = DatasetManifest([VideoRecord("v0", "a", "fake", b0, a0, 25, "a", "b", "ctx")], tmp_path)
    write_manifest(man, tmp_path / "m.tsv")
    assert parse_manifest(tmp_path / "m.tsv").records == man.records


# --------------------------------------------------------------------------
# windowing


def _seq(frames, dim=3):
    return FrameFeatureSequence(np.arange(frames * dim, dtype=np.float32).reshape(frames, dim), video_id="v")


def test_window_exact_fit():
    clips = window_clips(_seq(100), 100, 5)
    assert len(clips) == 1 and clips[0].origin == ("v", 0)


def test_window_110_frames():
    clips = window_clips(_seq(110), 100, 5)
    assert [c.origin[1] for c in clips] == [0, 5, 10]


def test_window_too_short():
    assert window_clips(_seq(99), 100, 5) == []


def test_window_is_transposed_block():
    seq = _seq(30, 4)
    clips = window_clips(seq, 10, 7)
    for c in clips:
        s = c.origin[1]
        assert c.X.shape == (4, 10)
        assert np.array_equal(c.X, seq.data[s : s + 10].T)
    stack = window_stack(seq, 10, 7)
    assert np.array_equal(stack, np.stack([c.X for c in clips]))


@settings(max_examples=200, deadline=None)
@given(frames=st.integers(1, 80), t=st.integers(1, 40), stride=st.integers(1, 15))
def test_window_count_property(frames, t, stride):
    clips = window_clips(_seq(frames, 1), t, stride)
    starts = clip_starts_brute(frames, t, stride)
    assert [c.origin[1] for c in clips] == starts
    expected = (frames - t) // stride + 1 if frames >= t else 0
    assert len(clips) == expected


# --------------------------------------------------------------------------
# splits


def _split_manifest(counts):
    recs = []
    for ident, n in counts.items():
        recs += [VideoRecord(f"{ident}_{k}", ident, "real", "b", "a") for k in range(n)]
    recs.append(VideoRecord("fake0", "A", "fake", "b", "a", 25, "A", "B"))
    return DatasetManifest(recs)


def test_split_80_20():
    sp = split_identity_videos(_split_manifest({"A": 10}), 0.8, 3)
    assert sum(r.identity == "A" and r.label == "real" for r in sp.reference) == 8
    assert sum(r.label == "real" for r in sp.test) == 2
    assert [r.video_id for r in sp.test if r.label == "fake"] == ["fake0"]


def test_split_clamp_two_videos():
    sp = split_identity_videos(_split_manifest({"A": 2}), 0.8, 0)
    assert len(sp.reference) == 1 and sum(r.label == "real" for r in sp.test) == 1


def test_split_deterministic_and_too_few():
    man = _split_manifest({"A": 7, "B": 5})
    a, b = split_identity_videos(man, 0.8, 11), split_identity_videos(man, 0.8, 11)
    assert a.reference == b.reference and a.test == b.test
    with pytest.raises(TooFewVideos):
        split_identity_videos(_split_manifest({"A": 5, "B": 1}), 0.8, 0)


def test_split_rounds_half_up():
    # 0.5 * 5 = 2.5 -> 3 reference videos
    sp = split_identity_videos(_split_manifest({"A": 5}), 0.5, 0)
    assert len(sp.reference) == 3


@settings(max_examples=60, deadline=None)
@given(counts=st.lists(st.integers(2, 12), min_size=1, max_size=5), ratio=st.floats(0.05, 0.95),
       seed=st.integers(0, 2**63 - 1))
def test_split_partition_property(counts, ratio, seed):
    man = _split_manifest({f"I{k}": n for k, n in enumerate(counts)})
    sp = split_identity_videos(man, ratio, seed)
    ref = {r.video_id for r in sp.reference}
    test = {r.video_id for r in sp.test if r.label == "real"}
    assert not ref & test
    assert ref | test == {r.video_id for r in man.records if r.label == "real"}
    for k, n in enumerate(counts):
        n_ref = sum(r.identity == f"I{k}" for r in sp.reference)
        assert 1 <= n_ref <= n - 1


def test_halves_real_and_fake():
    sp = split_video_halves(_seq(200), "real", 100)
    assert sp.reference.frames == 100 and sp.reference.offset == 0
    assert sp.test.frames == 100 and sp.test.offset == 100
    sp = split_video_halves(_seq(200), "fake", 100)
    assert sp.reference is None and sp.test.offset == 100 and sp.test.frames == 100


def test_halves_odd_length():
    sp = split_video_halves(_seq(201), "real", 100)
    assert sp.reference.frames == 101 and sp.test.frames == 100


def test_halves_too_short():
    with pytest.raises(TooShort):
        split_video_halves(_seq(199), "real", 100)
