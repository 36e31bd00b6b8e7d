import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasa.cache import (
    CacheGeometry,
    TieredCache,
    footprint_fasa_m,
    footprint_full,
    speedup_asymptote,
    speedup_model,
    traffic_fraction,
)


def filled_cache(seed, head_dim, dom, n, bytes_per_elem=2):
    rng = np.random.default_rng(seed)
    keys = rng.standard_normal((n, head_dim)).astype(np.float32)
    values = rng.standard_normal((n, head_dim)).astype(np.float32)
    cache = TieredCache(head_dim, dom, bytes_per_elem)
    for k, v in zip(keys, values):
        cache.append(k, v)
    return cache, keys, values


def test_geometry_validation():
    CacheGeometry(n_layers=1, seq_len=8, budget=8, head_dim=4, dom_dims=2)
    with pytest.raises(ValueError):
        CacheGeometry(n_layers=1, seq_len=8, budget=9, head_dim=4, dom_dims=2)
    with pytest.raises(ValueError):
        CacheGeometry(n_layers=1, seq_len=8, budget=4, head_dim=4, dom_dims=0)
    with pytest.raises(ValueError):
        CacheGeometry(n_layers=1, seq_len=8, budget=4, head_dim=4, dom_dims=3)
    with pytest.raises(ValueError):
        CacheGeometry(n_layers=0, seq_len=8, budget=4, head_dim=4, dom_dims=2)


def test_footprint_worked_example():
    g = CacheGeometry(
        n_layers=2, seq_len=1024, budget=128, head_dim=64, dom_dims=16, bytes_per_elem=2
    )
    assert footprint_fasa_m(g) == 2 * (16384 + 6144 + 8192) * 2 == 122880


def test_footprint_degenerate_equals_full():
    g = CacheGeometry(
        n_layers=3, seq_len=512, budget=512, head_dim=64, dom_dims=64, bytes_per_elem=2
    )
    assert footprint_fasa_m(g) == footprint_full(g) == 3 * 512 * 128 * 2


def test_footprint_strict_saving_when_budget_below_seq():
    for budget in (1, 100, 1023):
        g = CacheGeometry(
            n_layers=2, seq_len=1024, budget=budget, head_dim=64, dom_dims=64
        )
        assert footprint_fasa_m(g) < footprint_full(g)
    # with the full budget the tiering saves nothing, whatever dom_dims is
    g = CacheGeometry(n_layers=2, seq_len=1024, budget=1024, head_dim=64, dom_dims=2)
    assert footprint_fasa_m(g) == footprint_full(g)


def test_footprint_compression_ratio_limit():
    # large-L, small-budget limit of the ratio is dom_dims / (2 d)
    g = CacheGeometry(
        n_layers=1, seq_len=1 << 22, budget=16, head_dim=128, dom_dims=32
    )
    assert footprint_fasa_m(g) / footprint_full(g) == pytest.approx(1 / 8, rel=1e-3)


def test_speedup_model_values():
    assert speedup_model(4096, 128, 16, 256) == pytest.approx(1 / (0.125 + 0.0625))
    assert speedup_model(4096, 128, 16, 256) == pytest.approx(5.333333333, rel=1e-9)
    # degenerate: half the dims and a full-context budget help nothing
    assert speedup_model(100, 4, 2, 100) == pytest.approx(2 / 3)


def test_speedup_asymptote_value():
    assert speedup_asymptote(128, 16) == pytest.approx(8.0, abs=1e-9)


def test_speedup_asymptote_bound():
    d, n_tip = 128, 16
    lim = speedup_asymptote(d, n_tip)
    for t in (1 << 20, 1 << 24):
        n_fac = max(1, int(t * n_tip / (100 * d)))
        assert abs(speedup_model(t, d, n_tip, n_fac) - lim) <= 0.01 * lim


def test_speedup_monotonicity():
    base = speedup_model(1024, 128, 16, 128)
    assert speedup_model(2048, 128, 16, 128) > base
    assert speedup_model(1024, 128, 17, 128) < base
    assert speedup_model(1024, 128, 16, 129) < base


def test_speedup_validation():
    with pytest.raises(ValueError):
        speedup_model(0, 128, 16, 256)
    with pytest.raises(ValueError):
        speedup_model(1024, 128, 65, 256)  # more than d/2 chunks


def test_traffic_fraction_values():
    assert traffic_fraction(65536, 128, 16, 256) == 0.12890625
    assert traffic_fraction(65536, 128, 16, 256) == 16 / 128 + 256 / 65536
    # degenerate configurations clamp at the dense baseline
    assert traffic_fraction(64, 128, 128, 64) == 1.0


def test_tiered_cache_layout_calibrated_order():
    cache, keys, _ = filled_cache(0, 8, dom=(3, 1), n=4)
    hot = cache.read_hot()
    want = np.stack([keys[:, 6], keys[:, 7], keys[:, 2], keys[:, 3]], axis=1)
    assert np.array_equal(hot, want)
    assert cache.cold_cols.tolist() == [0, 1, 4, 5]


def test_append_is_lossless_bit_exact():
    cache, keys, values = filled_cache(1, 16, dom=(5, 0, 2), n=10)
    got_k, got_v = cache.peek_keys(), cache.peek_values()
    assert np.array_equal(got_k, keys)
    assert np.array_equal(got_v, values)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 12))
def test_split_reconstruct_roundtrip(seed, half_dim, n):
    d = 2 * half_dim
    rng = np.random.default_rng(seed)
    dom = tuple(rng.permutation(half_dim)[: rng.integers(0, half_dim + 1)])
    cache, keys, values = filled_cache(seed, d, dom, n)
    assert np.array_equal(cache.peek_keys(), keys)
    assert np.array_equal(cache.peek_values(), values)


def test_append_never_touches_counters():
    cache, _, _ = filled_cache(2, 8, dom=(0,), n=100)
    assert cache.counters() == (0, 0)


def test_fetch_accounting_example():
    # one selected row, d=64, 16 hot dims, 2 bytes per element
    cache, _, _ = filled_cache(3, 64, dom=(0, 1, 2, 3, 4, 5, 6, 7), n=5)
    cache.fetch_selected([2])
    assert cache.transfer_bytes == 1 * (48 + 64) * 2 == 224
    assert cache.read_bytes == 1 * 16 * 2
    # identical second fetch doubles both counters: no caching is modeled
    cache.fetch_selected([2])
    assert cache.transfer_bytes == 448
    assert cache.read_bytes == 64


def test_fetch_all_reconstructs_exactly():
    cache, keys, values = filled_cache(4, 8, dom=(2,), n=7)
    got_k, got_v = cache.fetch_all()
    assert np.array_equal(got_k, keys)
    assert np.array_equal(got_v, values)
    # dense pattern costs exactly 2 t d bytes in total
    assert cache.read_bytes + cache.transfer_bytes == 2 * 7 * 8 * 2


def test_read_hot_accounting():
    cache, _, _ = filled_cache(5, 8, dom=(1, 2), n=9)
    cache.read_hot()
    assert cache.read_bytes == 9 * 4 * 2
    assert cache.transfer_bytes == 0


def test_counters_monotone_nondecreasing():
    cache, _, _ = filled_cache(6, 8, dom=(1,), n=8)
    seen = [cache.counters()]
    cache.read_hot()
    seen.append(cache.counters())
    cache.fetch_selected([0, 3])
    seen.append(cache.counters())
    cache.fetch_all()
    seen.append(cache.counters())
    for (r0, t0), (r1, t1) in zip(seen, seen[1:]):
        assert r1 >= r0 and t1 >= t0


def test_fetch_validation():
    cache, _, _ = filled_cache(7, 8, dom=(1,), n=3)
    with pytest.raises(ValueError):
        cache.fetch_selected([])
    with pytest.raises(ValueError):
        cache.fetch_selected([3])
    with pytest.raises(ValueError):
        cache.fetch_selected([-1])


def test_extend_matches_appends():
    rng = np.random.default_rng(8)
    keys = rng.standard_normal((6, 8)).astype(np.float32)
    values = rng.standard_normal((6, 8)).astype(np.float32)
    a = TieredCache(8, (2, 0))
    for k, v in zip(keys, values):
        a.append(k, v)
    b = TieredCache(8, (2, 0))
    b.extend(keys, values)
    assert np.array_equal(a.peek_keys(), b.peek_keys())
    assert np.array_equal(a.peek_values(), b.peek_values())
    assert b.counters() == (0, 0)


def test_cache_validation():
    with pytest.raises(ValueError):
        TieredCache(7, ())
    with pytest.raises(ValueError):
        TieredCache(8, (0, 0))
    with pytest.raises(ValueError):
        TieredCache(8, (4,))
    with pytest.raises(ValueError):
        TieredCache(8, (0,), bytes_per_elem=0)
