import math

import numpy as np
import pytest

from fasa.rope import RopeConfig, rotate_chunk
from fasa.scores import (
    HeadSample,
    attend,
    fc_scores,
    full_scores,
    softmax,
    subset_scores,
)

CFG4 = RopeConfig(head_dim=4)


def ref_full_scores(q, q_pos, keys, cfg):
    """Brute-force oracle: per-chunk 2x2 rotations, pure Python loops."""
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    out = []
    for j in range(keys.shape[0]):
        total = 0.0
        for i in range(cfg.num_chunks):
            th = cfg.base ** (-2.0 * i / cfg.head_dim)
            aq, ak = q_pos * th, j * th
            qx = q[2 * i] * math.cos(aq) - q[2 * i + 1] * math.sin(aq)
            qy = q[2 * i] * math.sin(aq) + q[2 * i + 1] * math.cos(aq)
            kx = keys[j, 2 * i] * math.cos(ak) - keys[j, 2 * i + 1] * math.sin(ak)
            ky = keys[j, 2 * i] * math.sin(ak) + keys[j, 2 * i + 1] * math.cos(ak)
            total += qx * kx + qy * ky
        out.append(total)
    return np.array(out)


def random_sample(seed, d, t, with_values=False):
    rng = np.random.default_rng(seed)
    return HeadSample(
        q=rng.standard_normal(d).astype(np.float32),
        q_pos=t - 1,
        keys=rng.standard_normal((t, d)).astype(np.float32),
        values=rng.standard_normal((t, d)).astype(np.float32) if with_values else None,
    )


def test_sample_validation():
    with pytest.raises(ValueError):
        HeadSample(q=[1, 0], q_pos=0, keys=[[1, 0, 0]])  # dim mismatch
    with pytest.raises(ValueError):
        HeadSample(q=[1, 0], q_pos=0, keys=np.zeros((2, 2)))  # causality
    with pytest.raises(ValueError):
        HeadSample(q=[1, 0], q_pos=0, keys=np.zeros((0, 2)))  # empty context
    with pytest.raises(ValueError):
        HeadSample(q=[1, 0], q_pos=1, keys=np.zeros((2, 2)), values=np.zeros((1, 2)))


def test_full_scores_unit_basis():
    s = HeadSample(q=[1, 0, 0, 0], q_pos=0, keys=[[1, 0, 0, 0]])
    assert full_scores(s, CFG4).tolist() == [1.0]


def test_full_scores_planted_cos1():
    # query at position 1 against the same basis vector at position 0: only
    # chunk 0 is active and the relative rotation is one radian
    s = HeadSample(q=[1, 0, 0, 0], q_pos=1, keys=[[1, 0, 0, 0]])
    assert full_scores(s, CFG4)[0] == pytest.approx(math.cos(1.0), rel=1e-12)


@pytest.mark.parametrize("d,t", [(4, 3), (8, 17), (64, 33)])
def test_full_scores_matches_bruteforce_oracle(d, t):
    cfg = RopeConfig(head_dim=d)
    s = random_sample(d * 101 + t, d, t)
    got = full_scores(s, cfg)
    want = ref_full_scores(s.q, s.q_pos, s.keys, cfg)
    assert np.max(np.abs(got - want)) <= 1e-9


def test_fc_scores_zero_query_chunk():
    s = HeadSample(q=[0, 0, 1, 2], q_pos=4, keys=np.ones((5, 4)))
    assert np.array_equal(fc_scores(s, 0, CFG4), np.zeros(5))


def test_fc_scores_single_chunk_head_equals_full():
    cfg = RopeConfig(head_dim=2)
    s = random_sample(7, 2, 9)
    assert np.allclose(fc_scores(s, 0, cfg), full_scores(s, cfg), atol=1e-12)


def test_fc_scores_planted_case():
    s = HeadSample(q=[1, 0, 0, 0], q_pos=1, keys=[[1, 0, 0, 0]])
    assert fc_scores(s, 0, CFG4)[0] == pytest.approx(math.cos(1.0), rel=1e-12)
    assert fc_scores(s, 1, CFG4)[0] == 0.0


def test_fc_scores_invalid_chunk():
    s = random_sample(1, 4, 3)
    with pytest.raises(ValueError):
        fc_scores(s, 2, CFG4)


def test_subset_all_chunks_equals_full():
    cfg = RopeConfig(head_dim=16)
    s = random_sample(3, 16, 40)
    got = subset_scores(s, range(8), cfg)
    assert np.max(np.abs(got - full_scores(s, cfg))) <= 1e-5


def test_subset_singleton_equals_fc():
    cfg = RopeConfig(head_dim=8)
    s = random_sample(5, 8, 12)
    for i in range(4):
        assert np.allclose(subset_scores(s, [i], cfg), fc_scores(s, i, cfg), atol=1e-12)


def test_subset_pair_is_explicit_sum():
    s = random_sample(9, 4, 20)
    want = fc_scores(s, 0, CFG4) + fc_scores(s, 1, CFG4)
    assert np.allclose(subset_scores(s, [0, 1], CFG4), want, atol=1e-10)


def test_subset_empty_rejected():
    s = random_sample(1, 4, 3)
    with pytest.raises(ValueError):
        subset_scores(s, [], CFG4)
    with pytest.raises(ValueError):
        subset_scores(s, [5], CFG4)


@pytest.mark.parametrize("d,t", [(4, 1), (4, 16), (64, 64), (128, 100)])
def test_decomposition_identity(d, t):
    cfg = RopeConfig(head_dim=d)
    s = random_sample(d + t, d, t)
    total = np.zeros(t)
    for i in range(cfg.num_chunks):
        total += fc_scores(s, i, cfg)
    assert np.max(np.abs(total - full_scores(s, cfg))) <= 1e-4


def test_scale_covariance_power_of_two_exact():
    cfg = RopeConfig(head_dim=8)
    s = random_sample(11, 8, 10)
    doubled = HeadSample(q=2.0 * s.q, q_pos=s.q_pos, keys=s.keys)
    assert np.array_equal(full_scores(doubled, cfg), 2.0 * full_scores(s, cfg))


def test_scale_covariance_ranking_invariant():
    from fasa.agreement import topk_indices

    cfg = RopeConfig(head_dim=8)
    s = random_sample(12, 8, 50)
    scaled = HeadSample(q=3.7 * s.q, q_pos=s.q_pos, keys=s.keys)
    a, b = full_scores(s, cfg), full_scores(scaled, cfg)
    # float32 storage re-rounds the scaled query, so equality is approximate;
    # the ranking, which is all selection ever uses, must be identical
    assert np.allclose(b, 3.7 * a, rtol=1e-4, atol=1e-5)
    assert np.array_equal(topk_indices(a, 10), topk_indices(b, 10))


def test_attend_singleton_returns_value_row():
    v = np.array([[3.0, -1.0, 2.0, 0.5]], dtype=np.float32)
    out = attend([1, 0, 0, 0], 5, np.ones((1, 4), dtype=np.float32), v, [2], CFG4)
    assert np.array_equal(out, v[0].astype(np.float64))


def test_attend_equal_logits_gives_row_mean():
    # all-zero keys produce equal logits at any positions, so the softmax is
    # uniform and the output is the mean value row
    rng = np.random.default_rng(2)
    values = rng.standard_normal((4, 4)).astype(np.float32)
    out = attend([1, 2, 3, 4], 9, np.zeros((4, 4)), values, [0, 3, 5, 9], CFG4)
    assert np.allclose(out, values.astype(np.float64).mean(axis=0), atol=1e-12)


def test_attend_full_context_matches_reference_softmax():
    cfg = RopeConfig(head_dim=8)
    s = random_sample(21, 8, 12, with_values=True)
    positions = np.arange(12)
    out = attend(s.q, s.q_pos, s.keys, s.values, positions, cfg)
    # oracle: dense softmax attention from brute-force logits
    logits = ref_full_scores(s.q, s.q_pos, s.keys, cfg) / math.sqrt(8)
    w = np.exp(logits - logits.max())
    w /= w.sum()
    want = w @ s.values.astype(np.float64)
    assert np.max(np.abs(out - want)) <= 1e-10


def test_attend_depends_only_on_kept_rows():
    cfg = RopeConfig(head_dim=4)
    rng = np.random.default_rng(4)
    kept_keys = rng.standard_normal((3, 4)).astype(np.float32)
    kept_values = rng.standard_normal((3, 4)).astype(np.float32)
    q = rng.standard_normal(4).astype(np.float32)
    positions = [1, 4, 7]
    # two different "surrounding contexts" never reach attend; identical
    # kept rows and positions must give identical outputs
    a = attend(q, 9, kept_keys, kept_values, positions, cfg)
    b = attend(q, 9, kept_keys.copy(), kept_values.copy(), positions, cfg)
    assert np.array_equal(a, b)


def test_attend_weights_are_normalized():
    probe = softmax(np.array([0.1, 5.0, -2.0, 3.3]))
    assert probe.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(probe >= 0) and np.all(probe <= 1)


def test_attend_validation_errors():
    cfg = CFG4
    ones = np.ones((2, 4))
    with pytest.raises(ValueError):
        attend([1, 0, 0, 0], 5, np.ones((0, 4)), np.ones((0, 4)), [], cfg)
    with pytest.raises(ValueError):
        attend([1, 0, 0, 0], 5, ones, ones, [3, 3], cfg)  # not strictly increasing
    with pytest.raises(ValueError):
        attend([1, 0, 0, 0], 5, ones, ones, [4, 6], cfg)  # beyond query position
