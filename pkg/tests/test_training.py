import numpy as np
import pytest

from fakebio.errors import InsufficientIdentities
from fakebio.metric_learning import ClipIndex, MsLossConfig, TrainConfig, sample_batch, train
from fakebio.metric_learning.training import train_step
from fakebio.metric_learning import build_encoder


def _index(n_ids=4, videos=3, frames=40, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    return ClipIndex({f"p{i}": [rng.standard_normal((frames + v, dim)) for v in range(videos)]
                      for i in range(n_ids)})


def test_forced_composition():
    idx = ClipIndex({"A": [np.zeros((30, 2))], "B": [np.ones((30, 2))]})
    b = sample_batch(idx, 2, 2, 10, np.random.default_rng(0))
    assert len(b) == 4
    assert sorted(b.labels.tolist()) == ["A", "A", "B", "B"]
    assert b.X.shape == (4, 2, 10)
    for x, y in zip(b.X, b.labels):
        assert np.all(x == (0 if y == "A" else 1))


def test_canonical_batch_size():
    idx = _index(n_ids=40, videos=2, frames=120)
    b = sample_batch(idx, 32, 8, 100, np.random.default_rng(1))
    assert len(b) == 256 == TrainConfig().batch_size
    assert len(set(b.labels.tolist())) == 32
    for ident in set(b.labels.tolist()):
        assert (b.labels == ident).sum() == 8


def test_sampling_deterministic_and_windows_valid():
    idx = _index()
    a = sample_batch(idx, 3, 4, 20, np.random.default_rng(5))
    b = sample_batch(idx, 3, 4, 20, np.random.default_rng(5))
    assert np.array_equal(a.X, b.X) and a.origins == b.origins
    for (vid, start), x, y in zip(a.origins, a.X, a.labels):
        k = idx.video_ids[y].index(vid)
        assert np.array_equal(idx.videos[y][k][start : start + 20].T, x)


def test_insufficient_identities():
    with pytest.raises(InsufficientIdentities):
        sample_batch(_index(n_ids=2), 3, 2, 10, np.random.default_rng(0))
    # videos shorter than t do not count
    with pytest.raises(InsufficientIdentities):
        sample_batch(_index(n_ids=4, frames=5), 2, 2, 10, np.random.default_rng(0))


def test_zero_iterations_returns_initial_params():
    idx = _index()
    cfg = TrainConfig(iterations=0, identities_per_batch=2, clips_per_identity=2, t=20, embedding_dim=4,
                      channels=(3,), kernels=(3,), strides=(1,))
    init = build_encoder(5, 20, 4, (3,), (3,), (1,), seed=1)
    params, log = train(idx, cfg, params=init)
    assert params.equals(init) and log.loss == []


def test_training_is_deterministic():
    idx = _index()
    cfg = TrainConfig(iterations=5, identities_per_batch=3, clips_per_identity=2, t=20, embedding_dim=4,
                      channels=(3,), kernels=(3,), strides=(2,), learning_rate=0.1, seed=9)
    p1, l1 = train(idx, cfg)
    p2, l2 = train(idx, cfg)
    assert l1.loss == l2.loss and l1.grad_norm == l2.grad_norm
    assert p1.equals(p2)


def test_train_step_reports_mining():
    idx = _index()
    b = sample_batch(idx, 4, 3, 20, np.random.default_rng(2))
    p = build_encoder(5, 20, 6, (4,), (3,), (2,), seed=0)
    loss, grads, mining = train_step(p, b.X, b.labels, MsLossConfig())
    assert loss >= 0 and np.isfinite(grads.norm())
    assert mining.pos.shape == (12, 12)


def test_desk_recipe_and_canonical_defaults():
    canon = TrainConfig()
    assert (canon.iterations, canon.identities_per_batch, canon.clips_per_identity, canon.t) == (10000, 32, 8, 100)
    assert canon.loss == MsLossConfig(2.0, 50.0, 1.0, 0.1)
    desk = TrainConfig.desk(seed=4)
    assert desk.iterations == 2000 and desk.seed == 4 and desk.loss.lam == 0.5
    assert "loss.lam=0.5" in desk.to_text()


def test_loss_descends_on_synthetic_world(desk_run):
    log = desk_run.history
    assert len(log.loss) == 2000
    assert np.mean(log.loss[-200:]) < np.mean(log.loss[:200])
