"""Sampling-without-replacement tests: exhaustion, distinctness, first-draw
distribution."""

import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from pbesynth.sampling import UniqueSampler, unique_sample


def _uniform(n):
    return [(i, 1.0 / n) for i in range(n)]


def test_support_size():
    s = UniqueSampler([_uniform(3), _uniform(4)])
    assert s.support_size() == 12


def test_exact_exhaustion_small():
    s = UniqueSampler([_uniform(3), _uniform(2), _uniform(2)])
    rng = random.Random(0)
    seen = set()
    while True:
        t = s.sample(rng)
        if t is None:
            break
        assert t not in seen
        seen.add(t)
    assert seen == set(itertools.product(range(3), range(2), range(2)))
    assert s.exhausted
    assert s.sample(rng) is None


def test_skewed_weights_still_exhaust():
    dist = [("a", 0.9), ("b", 0.05), ("c", 0.05)]
    s = UniqueSampler([dist, dist])
    rng = random.Random(7)
    out = [s.sample(rng) for _ in range(9)]
    assert len(set(out)) == 9
    assert s.sample(rng) is None


def test_first_draw_follows_weights():
    # a 3:1 weighting on a single position should show up in first draws
    dist = [("x", 0.75), ("y", 0.25)]
    rng = random.Random(13)
    hits = sum(UniqueSampler([dist]).sample(rng) == ("x",)
               for _ in range(4000))
    assert 0.70 < hits / 4000 < 0.80


def test_unique_sample_budget():
    s = UniqueSampler([_uniform(2), _uniform(2)])
    rng = random.Random(1)
    first = unique_sample(None, 3, s, rng)
    assert len(first) == 3
    rest = unique_sample(None, 10, s, rng)
    assert len(rest) == 1
    assert set(first) | set(rest) == set(itertools.product(range(2), range(2)))


def test_zero_mass_rejected():
    with pytest.raises(ValueError):
        UniqueSampler([[("a", 0.0)]])
    with pytest.raises(ValueError):
        UniqueSampler([[]])


@settings(max_examples=40)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4),
       st.integers(0, 2**30))
def test_exhaustion_property(sizes, seed):
    s = UniqueSampler([_uniform(n) for n in sizes])
    rng = random.Random(seed)
    k = s.support_size()
    draws = [s.sample(rng) for _ in range(k)]
    assert len(set(draws)) == k
    assert s.sample(rng) is None
