import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import pair_count_auc
from wsvad.data import VideoSample
from wsvad.evaluation import evaluate, expand_to_frames, roc_auc, write_scores_csv
from wsvad.model import init_params, zeros_like


def test_expand_constant():
    np.testing.assert_array_equal(expand_to_frames(np.array([0.3]), 5), [0.3] * 5)


def test_expand_identity():
    s = np.array([0.1, 0.5, 0.9])
    np.testing.assert_array_equal(expand_to_frames(s, 3), s)


def test_expand_bins():
    np.testing.assert_array_equal(expand_to_frames(np.array([0.2, 0.8]), 4), [0.2, 0.2, 0.8, 0.8])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1)), st.integers(1, 200))
def test_expand_keeps_extremes_when_every_segment_is_used(s, extra):
    frames = s.size + extra
    out = expand_to_frames(s, frames)
    assert out.min() == s.min() and out.max() == s.max()


def test_auc_separated_and_ties():
    assert roc_auc(np.array([0.1, 0.2, 0.8, 0.9]), np.array([0, 0, 1, 1])) == 1.0
    assert roc_auc(np.full(6, 0.5), np.array([0, 1, 0, 1, 1, 0])) == 0.5


def test_auc_matches_pair_counting(rng):
    s = rng.random(50)
    y = rng.integers(0, 2, 50)
    assert abs(roc_auc(s, y) - pair_count_auc(s, y)) <= 1e-12


def test_auc_single_class():
    with pytest.raises(ValueError):
        roc_auc(np.array([0.1, 0.2]), np.array([1, 1]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=4, max_size=40, unique=True), st.randoms())
def test_auc_complement_without_ties(scores, rnd):
    s = np.array(scores) / 1000
    y = np.array([i % 2 for i in range(len(s))])
    rnd.shuffle(y)
    assert roc_auc(1 - s, y) == pytest.approx(1 - roc_auc(s, y), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, 25, elements=st.integers(-50, 50)))
def test_auc_invariant_under_monotone_transform(k):
    s = k / 10
    y = np.arange(25) % 2
    assert roc_auc(np.exp(s) * 3 + 1, y) == roc_auc(s, y)


def _videos(rng):
    vids = []
    for i in range(3):
        vids.append(VideoSample(f"n{i}", rng.normal(size=(6, 4)), 0, 96))
        vids.append(VideoSample(f"a{i}", rng.normal(size=(6, 4)), 1, 96, [(16, 48)]))
    return vids


def test_zero_model_gives_half_auc(rng):
    p = zeros_like(init_params(4, rng, (8, 6, 4, 1)))
    for rectify in (False, True):
        assert evaluate(p, _videos(rng), rectify=rectify).auc == 0.5


def test_alpha_one_rectification_is_identity(rng):
    p = init_params(4, rng, (8, 6, 4, 1))
    vids = _videos(rng)
    assert evaluate(p, vids, rectify=True, alpha=1.0).auc == evaluate(p, vids, rectify=False).auc


def test_perfect_model_scores_one(rng, monkeypatch):
    import wsvad.evaluation as ev

    vids = _videos(rng)
    truth = {id(v.features): v.frame_labels()[::16].astype(float) for v in vids}
    monkeypatch.setattr(ev, "score_video", lambda params, v, *a, **k: truth[id(v.features)])
    res = ev.evaluate(None, vids)
    assert res.auc == 1.0
    assert res.per_video_auc["a0"] == 1.0
    assert np.isnan(res.per_video_auc["n0"])


def test_scores_csv(tmp_path, rng):
    p = init_params(4, rng, (8, 6, 4, 1))
    res = evaluate(p, _videos(rng))
    write_scores_csv(res, tmp_path / "scores.csv")
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert lines[0] == "video_id,frame_index,score,label"
    assert len(lines) == 1 + 6 * 96
    vid, idx, score, label = lines[1 + 96 + 20].split(",")
    assert (vid, idx, label) == ("a0", "20", "1")
    assert float(score) == res.frame_scores["a0"][20]
