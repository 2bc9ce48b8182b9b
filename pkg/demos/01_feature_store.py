"""
Feature files, clips and splits
===============================

Per-frame features live in small binary files (a header then float32 rows).
A video is cut into overlapping fixed-length clips, and videos are split
into a reference side and a test side.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from fakebio.feature_store import (
    FrameFeatureSequence,
    clip_starts,
    parse_manifest,
    read_feature_file,
    split_identity_videos,
    split_video_halves,
    window_clips,
    write_feature_file,
)
from fakebio.synthetic import WorldConfig, generate_world

work = Path(tempfile.mkdtemp())

# %%
# Round trip one sequence of 250 frames x 24 features.
rng = np.random.default_rng(0)
seq = FrameFeatureSequence(rng.standard_normal((250, 24)).astype(np.float32))
write_feature_file(work / "clip.bin", seq)
back = read_feature_file(work / "clip.bin")
print("frames, dim:", back.frames, back.dim, " identical:", np.array_equal(back.data, seq.data))

# %%
# 100-frame windows every 5 frames. The last start that still fits is 150.
starts = list(clip_starts(250, 100, 5))
print(len(starts), "clips, starts", starts[:3], "...", starts[-1])
clips = window_clips(back, 100, 5)
print("one clip is dim x t:", clips[0].X.shape)

# %%
# A generated world comes with a manifest. The identity split keeps 80% of
# each person's real videos for enrollment; fakes are always tested.
man = generate_world(WorldConfig(identities=4, videos_per_identity=5, frames_per_video=240), work / "world")
man = parse_manifest(work / "world" / "manifest.tsv")
sp = split_identity_videos(man, 0.8, seed=0)
print(len(sp.reference), "reference videos,", len(sp.test), "test videos")

# %%
# The halves split uses the first half of every real video for enrollment.
halves = split_video_halves(back, "real", t=100)
print("reference half", halves.reference.frames, "frames, test half starts at", halves.test.offset)
