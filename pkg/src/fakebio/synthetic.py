"""Seeded synthetic identities, videos and face-swap fakes.

Each identity owns a unit appearance signature and a behavior process: a
sum of three sinusoids with identity-specific frequencies, phases and
amplitude vectors, whose amplitudes are modulated by the recording
context. A real video renders both streams for one identity; a fake keeps
the target's behavior process and shows the source's appearance (or, for a
failed swap, still the target's).

Random streams are derived from ``(seed, kind, index)`` so every video is
reproducible on its own and changing the fake settings never perturbs the
real videos.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SameIdentity
from .feature_store import (
    CANONICAL_FPS,
    STREAM_APPEARANCE,
    STREAM_BEHAVIOR,
    DatasetManifest,
    FrameFeatureSequence,
    VideoRecord,
    write_feature_file,
    write_manifest,
)

N_COMPONENTS = 3
FREQ_RANGE = (0.05, 0.2)  # cycles per frame; Nyquist is 0.5
MAX_SIGNATURE_COS = 0.5
_MAX_DRAWS = 10000

_MODELS, _REAL, _FAKE, _CONTEXT = 0, 1, 2, 3


@dataclass(frozen=True)
class WorldConfig:
    identities: int = 32
    videos_per_identity: int = 10
    frames_per_video: int = 400
    behavior_dim: int = 24
    appearance_dim: int = 48
    contexts: int = 2
    noise_sigma: float = 0.3
    failed_swap_fraction: float = 0.0
    fakes_per_identity: int = 2
    amplitude: float = 0.6
    context_gain: float = 1.0
    context_tempo: float = 0.1
    seed: int = 0
    fps: int = CANONICAL_FPS
    prefix: str = "id"

    def __post_init__(self):
        for name in ("identities", "videos_per_identity", "frames_per_video", "behavior_dim",
                     "appearance_dim", "contexts", "fps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fakes_per_identity < 0 or self.noise_sigma < 0:
            raise ValueError("fakes_per_identity and noise_sigma must be non-negative")
        if not 0.0 <= self.failed_swap_fraction <= 1.0:
            raise ValueError("failed_swap_fraction must lie in [0, 1]")
        if self.fakes_per_identity and self.identities < 2:
            raise ValueError("fakes need at least two identities")

    @property
    def n_fakes(self) -> int:
        return self.identities * self.fakes_per_identity


@dataclass
class IdentityModel:
    name: str
    appearance: np.ndarray  # unit, (appearance_dim,)
    freqs: np.ndarray  # (3,)
    phases: np.ndarray  # (3,)
    amplitudes: np.ndarray  # (3, behavior_dim)
    context_mod: np.ndarray  # (contexts, behavior_dim)
    tempo: np.ndarray  # (contexts,) frequency scale per context

    def amplitudes_in(self, context: int, gain: float) -> np.ndarray:
        return self.amplitudes * (1.0 + gain * self.context_mod[context])[None, :]


def identity_name(i: int, prefix: str = "id") -> str:
    return f"{prefix}{i:02d}"


def _rng(cfg: WorldConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


def make_identities(cfg: WorldConfig) -> list[IdentityModel]:
    """Draw every identity model; signatures are kept quasi-orthogonal by rejection."""
    shared = _rng(cfg, _CONTEXT).standard_normal((cfg.contexts, cfg.behavior_dim + 1))
    models: list[IdentityModel] = []
    for i in range(cfg.identities):
        rng = _rng(cfg, _MODELS, i)
        for _ in range(_MAX_DRAWS):
            sig = rng.standard_normal(cfg.appearance_dim)
            sig /= np.linalg.norm(sig)
            if all(abs(sig @ m.appearance) < MAX_SIGNATURE_COS for m in models):
                break
        else:
            raise ValueError(f"cannot place {cfg.identities} signatures in {cfg.appearance_dim} dims")
        freqs = rng.uniform(*FREQ_RANGE, N_COMPONENTS)
        phases = rng.uniform(0.0, 2 * np.pi, N_COMPONENTS)
        amps = cfg.amplitude * rng.standard_normal((N_COMPONENTS, cfg.behavior_dim))
        own = rng.standard_normal((cfg.contexts, cfg.behavior_dim))
        # contexts share a common direction across people plus a personal one
        mod = (shared[:, :-1] + own) / np.sqrt(2.0)
        tempo = np.exp(cfg.context_tempo * (shared[:, -1] + rng.standard_normal(cfg.contexts)) / np.sqrt(2.0))
        models.append(IdentityModel(identity_name(i, cfg.prefix), sig, freqs, phases, amps, mod, tempo))
    return models


def render_behavior(model: IdentityModel, context: int, cfg: WorldConfig, rng: np.random.Generator,
                    frames: int | None = None) -> np.ndarray:
    frames = cfg.frames_per_video if frames is None else frames
    offset = rng.uniform(0.0, 1000.0)
    tau = offset + np.arange(frames)
    freqs = model.freqs * model.tempo[context]
    waves = np.sin(2 * np.pi * freqs[None, :] * tau[:, None] + model.phases[None, :])
    signal = waves @ model.amplitudes_in(context, cfg.context_gain)
    return signal + cfg.noise_sigma * rng.standard_normal((frames, cfg.behavior_dim))


def render_appearance(signature: np.ndarray, cfg: WorldConfig, rng: np.random.Generator,
                      frames: int | None = None) -> np.ndarray:
    frames = cfg.frames_per_video if frames is None else frames
    return signature[None, :] + cfg.noise_sigma * rng.standard_normal((frames, signature.size))


def synth_face_swap(source: IdentityModel, target: IdentityModel, mode: str, cfg: WorldConfig,
                    rng: np.random.Generator, context: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Render a fake: target behavior, source (good) or target (failed) appearance."""
    if source.name == target.name:
        raise SameIdentity(f"source and target are both {source.name}")
    if mode not in ("good", "failed"):
        raise ValueError(f"mode must be good or failed, got {mode!r}")
    behavior = render_behavior(target, context, cfg, rng)
    face = source.appearance if mode == "good" else target.appearance
    return behavior, render_appearance(face, cfg, rng)


def _write_video(out: Path, video_id: str, behavior, appearance) -> tuple[str, str]:
    b_rel = f"features/{video_id}.behavior.bgf"
    a_rel = f"features/{video_id}.appearance.bgf"
    write_feature_file(out / b_rel, FrameFeatureSequence(behavior, STREAM_BEHAVIOR, video_id))
    write_feature_file(out / a_rel, FrameFeatureSequence(appearance, STREAM_APPEARANCE, video_id))
    return b_rel, a_rel


def generate_world(cfg: WorldConfig, out_dir) -> DatasetManifest:
    """Write feature files and ``manifest.tsv`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    models = make_identities(cfg)
    records: list[VideoRecord] = []

    for i, model in enumerate(models):
        for v in range(cfg.videos_per_identity):
            rng = _rng(cfg, _REAL, i, v)
            ctx = v % cfg.contexts
            vid = f"{model.name}_v{v:02d}"
            b_rel, a_rel = _write_video(out, vid, render_behavior(model, ctx, cfg, rng),
                                        render_appearance(model.appearance, cfg, rng))
            records.append(VideoRecord(vid, model.name, "real", b_rel, a_rel, cfg.fps,
                                       context=f"ctx{ctx}"))

    for j in range(cfg.n_fakes):
        rng = _rng(cfg, _FAKE, j)
        tgt = j % cfg.identities
        src = (tgt + 1 + int(rng.integers(0, cfg.identities - 1))) % cfg.identities
        failed = rng.uniform() < cfg.failed_swap_fraction
        ctx = int(rng.integers(0, cfg.contexts))
        source, target = models[src], models[tgt]
        behavior, appearance = synth_face_swap(source, target, "failed" if failed else "good", cfg, rng, ctx)
        vid = f"fake{j:03d}_{source.name}_to_{target.name}"
        b_rel, a_rel = _write_video(out, vid, behavior, appearance)
        records.append(VideoRecord(vid, source.name, "fake", b_rel, a_rel, cfg.fps,
                                   source_identity=source.name, target_identity=target.name,
                                   context=f"ctx{ctx}"))

    manifest = DatasetManifest(records, out)
    write_manifest(manifest, out / "manifest.tsv")
    return manifest
