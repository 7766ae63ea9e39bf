import math

import numpy as np
import pytest

from conftest import small_config
from wsvad.errors import DataError, NumericalError
from wsvad.model import init_params
from wsvad.numcore import make_rng
from wsvad.training import (
    AdamState,
    TrainConfig,
    adam_step,
    fit,
    init_state,
    make_batches,
    prepare_training_set,
    train_step,
)


def test_batches_split_evenly():
    labels = np.array([0] * 70 + [1] * 70)
    batches = make_batches(labels, 64, make_rng(0))
    assert len(batches) == 3
    for n, a in batches:
        assert n.size == a.size == 32
        assert np.all(labels[n] == 0) and np.all(labels[a] == 1)
    shown = np.concatenate([a for _, a in batches])
    assert set(shown.tolist()) == set(range(70, 140))


def test_batches_tiny_pool_repeat():
    batches = make_batches(np.array([0, 1]), 2, make_rng(0))
    assert [(n.tolist(), a.tolist()) for n, a in batches] == [([0], [1])]
    batches = make_batches(np.array([0, 1]), 8, make_rng(0))
    assert batches[0][0].tolist() == [0] * 4 and batches[0][1].tolist() == [1] * 4


def test_batches_seeded():
    labels = np.arange(40) % 2
    a = make_batches(labels, 8, make_rng(5))
    b = make_batches(labels, 8, make_rng(5))
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))


def test_batches_need_both_classes():
    with pytest.raises(DataError):
        make_batches(np.zeros(4, int), 4, make_rng(0))


def _unit_params(rng):
    return init_params(3, rng, (4, 3, 2, 1)).map(lambda p: np.ones_like(p))


def test_adam_zero_gradient_is_noop(rng):
    p = _unit_params(rng)
    g = p.map(np.zeros_like)
    new, st = adam_step(p, g, AdamState.zeros(p), lr=0.1)
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(new.blocks(), p.blocks()))
    assert st.step == 1


def test_adam_zero_lr_is_noop(rng):
    p = _unit_params(rng)
    g = p.map(lambda x: np.full_like(x, 3.0))
    new, _ = adam_step(p, g, AdamState.zeros(p), lr=0.0)
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(new.blocks(), p.blocks()))


def test_adam_first_step_moves_by_lr(rng):
    # bias correction makes the first step size lr * g / (|g| + eps')
    p = _unit_params(rng)
    g = p.map(lambda x: np.full_like(x, 0.5))
    new, _ = adam_step(p, g, AdamState.zeros(p), lr=0.1)
    for _, w in new.blocks():
        np.testing.assert_allclose(w, 0.900000002, atol=1e-6)


def test_adam_rejects_nan(rng):
    p = _unit_params(rng)
    g = p.map(lambda x: np.full_like(x, np.nan))
    with pytest.raises(NumericalError):
        adam_step(p, g, AdamState.zeros(p))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(strategy="way1", enable_bc=False)
    with pytest.raises(ValueError):
        TrainConfig(strategy="way9")
    with pytest.raises(ValueError):
        TrainConfig(tap="gcn3")
    cfg = small_config(strategy="way3", mu=0.5)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def _first_step(cfg, data):
    state = init_state(cfg, data.feature_dim)
    batches = make_batches(data.labels, cfg.hp.batch_size, state.rng)
    m = train_step(state, data, *batches[0], cfg)
    return state, m


def test_zero_lambda_loss_is_kmax(small_synth):
    cfg = small_config(lambda1=0.0)
    data = prepare_training_set(small_synth[0], cfg.segments)
    _, m = _first_step(cfg, data)
    assert m.loss_total == m.loss_kmax
    assert m.loss_bc_normal >= 0 and m.loss_bc_abnormal > 0


def test_zero_lambda_matches_backbone_update(small_synth):
    cfg = small_config(lambda1=0.0)
    base = small_config(strategy="none", enable_bc=False, enable_bcg=False)
    data = prepare_training_set(small_synth[0], cfg.segments)
    s1, _ = _first_step(cfg, data)
    s2, m2 = _first_step(base, data)
    assert math.isnan(m2.loss_bc_normal) and math.isnan(m2.d_abnormal)
    for (_, a), (_, b) in zip(s1.params.blocks(), s2.params.blocks()):
        assert np.array_equal(a, b)


def test_bc_changes_update(small_synth):
    cfg = small_config(lambda1=1.0)
    base = small_config(strategy="none", enable_bc=False)
    data = prepare_training_set(small_synth[0], cfg.segments)
    s1, _ = _first_step(cfg, data)
    s2, _ = _first_step(base, data)
    assert not np.array_equal(s1.params.w_fc, s2.params.w_fc)
    # gradient only reaches layers up to the tap: the last layer sees k-max only
    assert np.array_equal(s1.params.w_g3, s2.params.w_g3)


@pytest.mark.parametrize("strategy", ["none", "way1", "way2", "way3", "way4"])
def test_training_is_bitwise_deterministic(small_synth, strategy):
    cfg = small_config(strategy=strategy)
    train, test = small_synth
    _, h1 = fit(train, cfg, test)
    _, h2 = fit(train, cfg, test)
    assert [m.row() for m in h1] == [m.row() for m in h2]
    assert all(0.0 <= m.val_auc <= 1.0 for m in h1)


def test_rectified_training_runs(small_synth):
    cfg = small_config(rectify_train=True, enable_bc=False, strategy="none")
    state, hist = fit(small_synth[0], cfg)
    assert state.epoch == 2 and all(math.isfinite(m.loss_total) for m in hist)
    assert math.isnan(hist[0].loss_bc_abnormal) and hist[0].d_abnormal_mean > 0


def test_resume_matches_uninterrupted(small_synth):
    train, test = small_synth
    cfg = small_config(epochs=4)
    _, full = fit(train, cfg, test)
    state, first = fit(train, small_config(epochs=2), test)
    _, rest = fit(train, cfg, test, state=state)
    assert [m.row() for m in first + rest] == [m.row() for m in full]


def test_abnormal_centers_spread_over_training(small_synth):
    cfg = small_config(epochs=20, lambda1=1.0, lr=1e-3)
    _, hist = fit(small_synth[0], cfg)
    d = np.array([m.d_abnormal_mean for m in hist])
    assert np.polyfit(np.arange(d.size), d, 1)[0] > 0
    assert d[-5:].mean() > d[:5].mean()
