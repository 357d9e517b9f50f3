import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowsep.ratetree import RateIndex


def test_total_and_get():
    idx = RateIndex([1.0, 2.0, 3.0, 0.5])
    assert idx.total() == pytest.approx(6.5)
    assert idx.get(2) == 3.0


def test_update_changes_total():
    idx = RateIndex([1.0, 1.0, 1.0])
    idx.update(1, 5.0)
    assert idx.total() == pytest.approx(7.0)
    assert idx.get(1) == 5.0


def test_sample_boundaries():
    idx = RateIndex([0.0, 2.0, 0.0, 1.0])
    assert idx.sample(0.0) == 1
    assert idx.sample(0.99) == 3


def test_sample_proportionality():
    rates = np.array([0.5, 0.0, 3.0, 1.5])
    idx = RateIndex(rates)
    rng = np.random.default_rng(3)
    draws = np.array([idx.sample(u) for u in rng.random(20000)])
    freq = np.bincount(draws, minlength=4) / draws.size
    expect = rates / rates.sum()
    assert np.abs(freq - expect).max() < 4 * np.sqrt(0.25 / 20000) + 0.005
    assert freq[1] == 0.0


def test_validation():
    with pytest.raises(ValueError):
        RateIndex([])
    with pytest.raises(ValueError):
        RateIndex([1.0, -0.1])
    idx = RateIndex([1.0])
    with pytest.raises(IndexError):
        idx.update(1, 0.5)
    with pytest.raises(ValueError):
        idx.sample(1.0)


def test_all_zero_sampling_rejected():
    idx = RateIndex([1.0, 1.0])
    idx.update(0, 0.0)
    idx.update(1, 0.0)
    with pytest.raises(ValueError, match="all-zero"):
        idx.sample(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 64), st.data())
def test_total_tracks_leaf_sum_through_updates(size, data):
    rng_vals = data.draw(st.lists(
        st.floats(0.0, 10.0, allow_nan=False), min_size=size, max_size=size))
    idx = RateIndex(np.ones(size))
    for k, v in enumerate(rng_vals):
        idx.update(k % size, v)
    assert idx.total() == pytest.approx(idx.leaves.sum(), rel=1e-9, abs=1e-12)


def test_periodic_rebuild_restores_exactness():
    idx = RateIndex([0.1, 0.2, 0.3], rebuild_every=10)
    rng = np.random.default_rng(0)
    for k in range(1000):
        idx.update(k % 3, float(rng.random()))
    assert idx.total() == pytest.approx(idx.leaves.sum(), rel=1e-12)
