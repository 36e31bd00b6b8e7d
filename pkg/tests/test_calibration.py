import numpy as np
import pytest

from fasa.agreement import compound_ca
from fasa.artifacts import dominant_to_json, write_json
from fasa.calibration import (
    CalibrationCorpus,
    DominantSet,
    HeadId,
    calibrate,
    calibrate_head,
)
from fasa.harness import PlantedSpec, random_chunk_subset, synth_planted
from fasa.rng import SplitMix64
from fasa.rope import RopeConfig
from fasa.scores import HeadSample

import json


def spec(seed=0, **kw):
    base = dict(
        head_dim=32,
        context_len=128,
        planted=(2, 9),
        important=tuple(range(0, 128, 8)),
        amplitude=1.0,
        sigma=0.1,
        seed=seed,
        n_samples=2,
    )
    base.update(kw)
    return PlantedSpec(**base)


def test_head_id_labels():
    assert HeadId(3, 7).label() == "3.7"
    assert HeadId.parse("3.7") == HeadId(3, 7)
    with pytest.raises(ValueError):
        HeadId.parse("3")
    with pytest.raises(ValueError):
        HeadId.parse("-1.2")


def test_single_chunk_head_trivial():
    cfg = RopeConfig(head_dim=2)
    rng = np.random.default_rng(1)
    samples = [
        HeadSample(q=rng.standard_normal(2), q_pos=9, keys=rng.standard_normal((10, 2)))
    ]
    assert calibrate_head(samples, 1, 4, cfg) == [(0, 1.0)]


def test_all_zero_keys_tie_break():
    cfg = RopeConfig(head_dim=8)
    samples = [HeadSample(q=np.ones(8), q_pos=5, keys=np.zeros((6, 8)))]
    pairs = calibrate_head(samples, 2, 3, cfg)
    assert [c for c, _ in pairs] == [0, 1]
    assert pairs[0][1] == pairs[1][1]


def test_calibrate_head_validation():
    cfg = RopeConfig(head_dim=8)
    samples = [HeadSample(q=np.ones(8), q_pos=3, keys=np.ones((4, 8)))]
    with pytest.raises(ValueError):
        calibrate_head([], 1, 2, cfg)
    with pytest.raises(ValueError):
        calibrate_head(samples, 0, 2, cfg)
    with pytest.raises(ValueError):
        calibrate_head(samples, 5, 2, cfg)


def test_planted_recovery_single_head():
    corpus, truth = synth_planted(spec())
    head = HeadId(0, 0)
    pairs = calibrate_head(corpus.samples[head], 2, 16, corpus.cfg)
    assert {c for c, _ in pairs} == set(truth[head].planted)
    assert all(v >= 0.9 for _, v in pairs)


def test_two_heads_recover_disjoint_sets():
    specs = {
        HeadId(0, 0): spec(seed=1, planted=(2, 9)),
        HeadId(0, 1): spec(seed=2, planted=(4, 6)),
    }
    corpus, truth = synth_planted(specs)
    ds = calibrate(corpus, 2, 16)
    assert set(ds.chunks(HeadId(0, 0))) == {2, 9}
    assert set(ds.chunks(HeadId(0, 1))) == {4, 6}


def test_nesting_smaller_is_prefix():
    corpus, _ = synth_planted(spec(seed=3))
    head = HeadId(0, 0)
    small = calibrate_head(corpus.samples[head], 3, 16, corpus.cfg)
    large = calibrate_head(corpus.samples[head], 4, 16, corpus.cfg)
    assert large[:3] == small


def test_calibrate_deterministic_bytes(tmp_path):
    corpus1, _ = synth_planted(spec(seed=4))
    corpus2, _ = synth_planted(spec(seed=4))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_json(a, dominant_to_json(calibrate(corpus1, 2, 16)))
    write_json(b, dominant_to_json(calibrate(corpus2, 2, 16)))
    assert a.read_bytes() == b.read_bytes()


def test_head_independence():
    specs = {
        HeadId(0, 0): spec(seed=5),
        HeadId(0, 1): spec(seed=6, planted=(1, 3)),
    }
    corpus, _ = synth_planted(specs)
    before = calibrate(corpus, 2, 16).entries[HeadId(0, 1)]
    # double head 0's samples; head 1 must be untouched
    corpus.samples[HeadId(0, 0)] = corpus.samples[HeadId(0, 0)] * 2
    after = calibrate(corpus, 2, 16).entries[HeadId(0, 1)]
    assert before == after


def test_calibrated_beats_random_subsets():
    sp = spec(seed=7, head_dim=64, planted=(3, 11, 20))
    corpus, truth = synth_planted(sp)
    head = HeadId(0, 0)
    samples = corpus.samples[head]
    k = len(sp.important)
    calibrated = [c for c, _ in calibrate_head(samples, 3, k, corpus.cfg)]
    cal_score = compound_ca(samples, calibrated, k, corpus.cfg)
    rng = SplitMix64(99)
    wins = 0
    for _ in range(30):
        rand = random_chunk_subset(rng, corpus.cfg.num_chunks, 3, exclude=sp.planted)
        if cal_score >= compound_ca(samples, rand, k, corpus.cfg):
            wins += 1
    assert wins == 30


def test_dominant_set_validation():
    cfg = RopeConfig(head_dim=8)
    good = {HeadId(0, 0): ((1, 0.9), (0, 0.5))}
    DominantSet(cfg=cfg, n_tip=2, window=4, entries=good)
    with pytest.raises(ValueError):  # wrong length
        DominantSet(cfg=cfg, n_tip=3, window=4, entries=good)
    with pytest.raises(ValueError):  # duplicates
        DominantSet(cfg=cfg, n_tip=2, window=4, entries={HeadId(0, 0): ((1, 0.9), (1, 0.5))})
    with pytest.raises(ValueError):  # not sorted by score
        DominantSet(cfg=cfg, n_tip=2, window=4, entries={HeadId(0, 0): ((1, 0.5), (0, 0.9))})
    with pytest.raises(ValueError):  # tie must sort by chunk
        DominantSet(cfg=cfg, n_tip=2, window=4, entries={HeadId(0, 0): ((1, 0.5), (0, 0.5))})
    with pytest.raises(ValueError):  # score outside [0, 1]
        DominantSet(cfg=cfg, n_tip=2, window=4, entries={HeadId(0, 0): ((1, 1.5), (0, 0.5))})
    with pytest.raises(ValueError):  # chunk out of range
        DominantSet(cfg=cfg, n_tip=2, window=4, entries={HeadId(0, 0): ((7, 0.9), (0, 0.5))})


def test_corpus_validation():
    cfg = RopeConfig(head_dim=4)
    with pytest.raises(ValueError):
        CalibrationCorpus(cfg=cfg, samples={})
    with pytest.raises(ValueError):
        CalibrationCorpus(cfg=cfg, samples={HeadId(0, 0): []})
    wrong_dim = HeadSample(q=np.ones(6), q_pos=0, keys=np.ones((1, 6)))
    with pytest.raises(ValueError):
        CalibrationCorpus(cfg=cfg, samples={HeadId(0, 0): [wrong_dim]})


def test_calibrate_error_names_head():
    sp = spec(seed=8)
    corpus, _ = synth_planted({HeadId(1, 4): sp})
    with pytest.raises(ValueError, match=r"head 1\.4"):
        calibrate(corpus, 99, 16)
