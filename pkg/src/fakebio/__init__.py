"""Face-swap detection from the agreement of appearance and behavior biometrics."""

__version__ = "0.1.0"

from .authentication import (
    MatchResult,
    ReferenceSet,
    Verdict,
    classify,
    enroll,
    fakeness_score,
    load_reference_set,
    match_identity,
    save_reference_set,
)
from .biometrics import Signatures, appearance_descriptor, behavior_embed, extract_signatures
from .evaluation import (
    EvalRecord,
    RocCurve,
    accuracy_at,
    auc,
    behavior_context_distributions,
    crossover,
    evaluate_clips,
    reference_ablation,
    roc_sweep,
    similarity_distributions,
)
from .feature_store import (
    DatasetManifest,
    FrameFeatureSequence,
    VideoRecord,
    parse_manifest,
    read_feature_file,
    split_identity_videos,
    split_video_halves,
    window_clips,
    write_feature_file,
)
from .synthetic import WorldConfig, generate_world, synth_face_swap
