import numpy as np
import pytest
from hypothesis import given, strategies as st

from builders import timeline
from cpswitch.core import LatticeSpec, RateSet
from cpswitch.duality import check_duality_relation, dual_law_gap, hitting_probability, reverse_timeline
from cpswitch.graphical import sample_timeline

RING = LatticeSpec.ring(5)
RATES = RateSet.symmetric(2.0, 1.4, 0.6, 0.3, 1.0, 0.4, 0.9, 1.1)


def test_reversal_by_hand():
    tl = timeline(RING, 3, [(0.5, "ad", (0, 1)), (1.0, "a->d", 2), (2.0, "delta_d", 3)])
    rev = reverse_timeline(tl, 3, [0, 2])
    events = rev.timeline.event_multiset()
    assert [(round(t, 12), k, a, b) for t, k, a, b in events] == [(1.0, 1, 3, -1), (2.0, 3, 2, -1), (2.5, 7, 1, 0)]
    assert rev.initial_activity.nonzero()[0].tolist() == [0]


def test_no_op_switch_stays_a_no_op():
    tl = timeline(RING, 2, [(0.5, "d->a", 0)])
    rev = reverse_timeline(tl, 2, [0])
    assert rev.timeline.kinds.tolist() == [3]  # still towards 'a', the type before the event


def test_event_at_the_end_is_dropped():
    tl = timeline(RING, 2, [(2.0, "aa", (0, 1)), (1.0, "aa", (1, 2))])
    assert len(reverse_timeline(tl, 2, [0, 1, 2]).timeline) == 1


def test_reversal_rejects_bad_time():
    tl = timeline(RING, 2, [])
    with pytest.raises(ValueError):
        reverse_timeline(tl, 0, [])
    with pytest.raises(ValueError):
        reverse_timeline(tl, 3, [])


def test_empty_timeline_relation():
    tl = timeline(RING, 1, [])
    assert check_duality_relation(tl, [0], [0], [0], 1.0, [0.5]).forward_hits
    assert not check_duality_relation(tl, [0], [0], [1], 1.0, [0.5]).forward_hits
    assert check_duality_relation(tl, [], [0], [1], 1.0, [0.5])


def test_single_arrow_relation():
    tl = timeline(RING, 2, [(1.0, "aa", (0, 1))])
    c = check_duality_relation(tl, [0], [0, 1], [1], 2.0, [0.5, 1.5])
    assert c.holds and c.forward_hits and c.dual_hits


def test_relation_on_random_timelines():
    rng = np.random.default_rng(0)
    for i in range(300):
        tl = sample_timeline(RING, RATES, 2.0, seed=8, replica=i)
        I = np.flatnonzero(rng.random(5) < 0.4)
        J = np.flatnonzero(rng.random(5) < 0.4)
        A0 = np.flatnonzero(rng.random(5) < 0.5)
        assert check_duality_relation(tl, I, A0, J, 2.0, np.linspace(0, 2, 9))


@given(st.integers(0, 2**31), st.lists(st.booleans(), min_size=5, max_size=5), st.floats(0.2, 3.0))
def test_reversal_is_an_involution(seed, act, t):
    tl = sample_timeline(RING, RATES, 3.0, seed=seed)
    once = reverse_timeline(tl, t, np.flatnonzero(act))
    twice = reverse_timeline(once.timeline, t, once.initial_activity)
    kept = tl.times < t
    assert np.allclose(twice.timeline.times, tl.times[kept], atol=1e-12)
    assert np.array_equal(twice.timeline.streams, tl.streams[kept])
    assert np.array_equal(twice.initial_activity, np.asarray(act))


def test_asymmetric_neighbourhood_uses_reversed_lattice():
    lat = LatticeSpec((5,), offsets=((1,), (2,)))
    tl = sample_timeline(lat, RATES, 1.0, seed=3)
    rev = reverse_timeline(tl, 1.0, [0, 1])
    assert set(rev.lattice.offsets) == {(-1,), (-2,)}
    assert check_duality_relation(tl, [0], [0, 1], [2, 3], 1.0, [0.3, 0.7])


def test_dual_law_matches_exactly():
    lat = LatticeSpec.ring(4)
    for I, J in (([0], [2]), ([0, 1], [3]), ([1], [1, 2])):
        assert dual_law_gap(lat, RATES, I, J, 1.5) < 1e-12


def test_self_dual_when_mixed_rates_agree():
    lat = LatticeSpec.ring(4)
    r = RateSet.symmetric(2.0, 0.8, 0.8, 0.3, 1.0, 0.4, 0.9, 1.1)
    a = hitting_probability(lat, r, [0], [1, 2], 1.0)
    b = hitting_probability(lat, r, [1, 2], [0], 1.0)
    assert abs(a - b) < 1e-12
