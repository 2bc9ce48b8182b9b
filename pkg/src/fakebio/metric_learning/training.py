"""Stochastic gradient descent on the multi-similarity loss."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import NonFiniteLoss
from .encoder import EncoderParams, build_encoder, encoder_backward, forward_batch
from .losses import MsLossConfig, embedding_grad, mine_pairs, ms_loss, ms_loss_grad, pairwise_similarity
from .sampling import ClipIndex, sample_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    iterations: int = 10000
    identities_per_batch: int = 32
    clips_per_identity: int = 8
    t: int = 100
    learning_rate: float = 1e-2
    seed: int = 0
    loss: MsLossConfig = field(default_factory=MsLossConfig)
    clip_norm: float | None = 5.0
    embedding_dim: int = 32
    channels: tuple = (32, 32)
    kernels: tuple = (7, 5)
    strides: tuple = (2, 2)

    @classmethod
    def desk(cls, seed: int = 0, **overrides) -> TrainConfig:
        """The recipe used for the synthetic end-to-end runs.

        The canonical learning rate of 1e-2 barely moves this small encoder
        in 2000 steps, and lambda = 0.5 keeps different contexts of one
        person closer together than different people.
        """
        base = dict(iterations=2000, learning_rate=0.5, seed=seed, loss=MsLossConfig(lam=0.5))
        base.update(overrides)
        return cls(**base)

    @property
    def batch_size(self) -> int:
        return self.identities_per_batch * self.clips_per_identity

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "loss":
                for k, v in asdict(value).items():
                    lines.append(f"loss.{k}={v!r}")
            elif isinstance(value, tuple):
                lines.append(f"{f.name}={','.join(map(str, value))}")
            else:
                lines.append(f"{f.name}={value!r}")
        return "\n".join(lines) + "\n"


@dataclass
class TrainLog:
    loss: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    pos_pairs: list[int] = field(default_factory=list)
    neg_pairs: list[int] = field(default_factory=list)

    def window_mean(self, start: int, stop: int) -> float:
        return float(np.mean(self.loss[start:stop]))


def train_step(params: EncoderParams, X, labels, loss_cfg: MsLossConfig):
    """One forward/backward pass. Returns (loss, gradient, mining)."""
    emb, tape = forward_batch(params, X)
    sim = pairwise_similarity(emb, labels)
    mining = mine_pairs(sim, loss_cfg.epsilon)
    loss = ms_loss(sim, mining, loss_cfg)
    grad_E = embedding_grad(emb, ms_loss_grad(sim, mining, loss_cfg))
    return loss, encoder_backward(params, tape, grad_E), mining


def train(index: ClipIndex, cfg: TrainConfig, params: EncoderParams | None = None,
          progress_every: int = 0) -> tuple[EncoderParams, TrainLog]:
    init_seq, sample_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if params is None:
        dim = next(iter(index.videos.values()))[0].shape[1]
        params = build_encoder(dim, cfg.t, cfg.embedding_dim, cfg.channels, cfg.kernels,
                               cfg.strides, np.random.default_rng(init_seq))
    else:
        params = params.copy()
    rng = np.random.default_rng(sample_seq)
    history = TrainLog()

    for it in range(cfg.iterations):
        batch = sample_batch(index, cfg.identities_per_batch, cfg.clips_per_identity, cfg.t, rng)
        loss, grads, mining = train_step(params, batch.X, batch.labels, cfg.loss)
        if not np.isfinite(loss):
            raise NonFiniteLoss(it)
        gnorm = grads.norm()
        if cfg.clip_norm is not None and gnorm > cfg.clip_norm:
            grads.scale_(cfg.clip_norm / gnorm)
        params.add_(grads, -cfg.learning_rate)

        history.loss.append(loss)
        history.grad_norm.append(gnorm)
        history.pos_pairs.append(int(mining.pos.sum()))
        history.neg_pairs.append(int(mining.neg.sum()))
        if progress_every and (it + 1) % progress_every == 0:
            recent = history.window_mean(max(0, it + 1 - progress_every), it + 1)
            log.info("iter %d  loss %.5f", it + 1, recent)
    return params, history
