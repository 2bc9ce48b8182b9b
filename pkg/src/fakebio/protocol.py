"""Reference/test protocols and the synthetic end-to-end run.

``identity`` protocol: a seeded 80/20 split of each identity's real videos,
fakes tested whole. ``halves`` protocol: every real video contributes its
first half to the reference set and its second half to the test set; fakes
contribute their second half only.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .authentication import DEFAULT_TAU_F, Gallery, ReferenceSet, enroll_arrays
from .biometrics import Signatures, VideoPart, extract_signatures
from .errors import NoCrossover
from .evaluation import EvalRecord, RocCurve, auc, crossover, evaluate_signatures, roc_sweep
from .feature_store import (
    CANONICAL_STRIDE,
    CANONICAL_T,
    DatasetManifest,
    VideoRecord,
    load_video,
    parse_manifest,
    split_identity_videos,
    split_video_halves,
)
from .metric_learning import ClipIndex, EncoderParams, TrainConfig, TrainLog, train
from .synthetic import WorldConfig, generate_world

log = logging.getLogger(__name__)

SPLITS = ("identity", "halves")
TRAIN_WORLD_OFFSET = 100


def reference_test_parts(manifest: DatasetManifest, split: str = "identity", ratio: float = 0.8,
                         seed: int = 0, t: int = CANONICAL_T) -> tuple[list[VideoPart], list[VideoPart]]:
    if split == "identity":
        sp = split_identity_videos(manifest, ratio, seed)
        load = lambda recs: [VideoPart(r, *load_video(manifest, r)) for r in recs]
        return load(sp.reference), load(sp.test)
    if split != "halves":
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    ref, test = [], []
    for r in manifest.records:
        b, a = load_video(manifest, r)
        hb, ha = split_video_halves(b, r.label, t), split_video_halves(a, r.label, t)
        if hb.reference is not None:
            ref.append(VideoPart(r, hb.reference, ha.reference))
        test.append(VideoPart(r, hb.test, ha.test))
    return ref, test


def training_index(manifest: DatasetManifest, records: list[VideoRecord] | None = None) -> ClipIndex:
    """Clip index over the real videos of ``records`` (default: the whole manifest)."""
    recs = manifest.records if records is None else records
    pairs = [(r.identity, load_video(manifest, r)[0]) for r in recs if r.label == "real"]
    return ClipIndex.from_sequences(pairs)


def enroll_signatures(ref: Signatures) -> ReferenceSet:
    return enroll_arrays(ref.identity, ref.B, ref.F)


def training_world(world: WorldConfig) -> WorldConfig:
    """A disjoint corpus of unseen people for learning the behavior encoder.

    It plays the role of the large external talking-head corpus the encoder
    is trained on; none of its identities appear in the evaluation world.
    """
    return dataclasses.replace(world, identities=128, fakes_per_identity=0, prefix="vox",
                               seed=world.seed + TRAIN_WORLD_OFFSET, failed_swap_fraction=0.0)


@dataclass
class DeskRun:
    params: EncoderParams
    history: TrainLog
    refs: ReferenceSet
    ref_sigs: Signatures
    test_sigs: Signatures
    records: list[EvalRecord]
    curve: RocCurve
    crossover: tuple[float, float] | None
    auc: float
    seconds: dict


def train_encoder(world: WorldConfig, work_dir, train_cfg: TrainConfig | None = None) -> tuple[EncoderParams, TrainLog]:
    tw = training_world(world)
    tman = generate_world(tw, Path(work_dir) / "train_world")
    cfg = train_cfg or TrainConfig.desk(seed=world.seed)
    return train(training_index(tman), cfg)


def evaluate_world(params: EncoderParams, manifest: DatasetManifest, split: str = "identity", ratio: float = 0.8,
                   seed: int = 0, t: int = CANONICAL_T, stride: int = CANONICAL_STRIDE):
    ref_parts, test_parts = reference_test_parts(manifest, split, ratio, seed, t)
    ref = extract_signatures(params, ref_parts, t, stride)
    test = extract_signatures(params, test_parts, t, stride)
    refs = enroll_signatures(ref)
    return refs, ref, test, evaluate_signatures(test, refs)


def run_desk(work_dir, world: WorldConfig | None = None, train_cfg: TrainConfig | None = None,
             params: EncoderParams | None = None, history: TrainLog | None = None) -> DeskRun:
    """Generate, train, enroll and score the synthetic world end to end.

    Passing ``params`` skips training (the real videos of worlds that only
    differ in their fakes are identical, so an encoder can be reused).
    """
    world = world or WorldConfig()
    work = Path(work_dir)
    secs = {}
    t0 = time.perf_counter()
    generate_world(world, work / "world")
    manifest = parse_manifest(work / "world" / "manifest.tsv")
    secs["generate"] = time.perf_counter() - t0
    if params is None:
        t0 = time.perf_counter()
        params, history = train_encoder(world, work, train_cfg)
        secs["train"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    refs, ref, test, records = evaluate_world(params, manifest, seed=world.seed)
    curve = roc_sweep(records)
    try:
        cross = crossover(curve)
    except NoCrossover:
        cross = None
    secs["evaluate"] = time.perf_counter() - t0
    log.info("desk run timings %s", secs)
    return DeskRun(params, history or TrainLog(), refs, ref, test, records, curve, cross, auc(records), secs)


def tau_or_default(run: DeskRun) -> float:
    return run.crossover[0] if run.crossover else DEFAULT_TAU_F


def identity_top1(sigs: Signatures, refs: ReferenceSet, which: str = "B") -> float:
    """Fraction of clips whose best gallery identity is their true one."""
    g = Gallery(refs.identities, refs.B if which == "B" else refs.F)
    idx, _, _ = g.best(sigs.B if which == "B" else sigs.F)
    return float(np.mean(np.array(refs.identities, dtype=object)[idx] == sigs.identity))
