import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpswitch.core import LatticeSpec, RateSet, alpha, preset
from cpswitch.oracle import (MAX_SITES, exact_marginal, generator_matrix, point_distribution, product_initial,
                             transient_distribution, transient_distribution_expm)

PAIR = LatticeSpec((2,), "free")
RATES = RateSet.symmetric(2.0, 1.3, 0.7, 0.4, 1.0, 0.3, 0.8, 1.2)


def test_rows_sum_to_zero():
    for variant in ("plain", "cpb", "cpid"):
        r = {"plain": RATES, "cpb": preset("cpb", 2, sigma=1, rho=2),
             "cpid": preset("cpid", 2, delta_a=1, delta_d=0.3)}[variant]
        G = generator_matrix(LatticeSpec.ring(3), r)
        assert np.abs(np.asarray(G.Q.sum(axis=1))).max() < 1e-12


def test_state_counts():
    assert generator_matrix(LatticeSpec.ring(3), RATES).n_states == 64
    assert generator_matrix(LatticeSpec.ring(3), preset("cpb", 2)).n_states == 27


def test_two_site_entries():
    G = generator_matrix(PAIR, RATES)
    Q = G.dense()
    s = G.encode([0], [0])  # infected active source, healthy dormant neighbour
    assert Q[s, G.encode([0, 1], [0])] == pytest.approx(1.3)
    assert Q[s, G.encode([], [0])] == pytest.approx(1.0)
    assert Q[s, G.encode([0], [0, 1])] == pytest.approx(1.2)
    assert Q[s, G.encode([0], [])] == pytest.approx(0.8)
    assert Q[s, s] == pytest.approx(-(1.3 + 1.0 + 1.2 + 0.8))


def test_cpid_infection_of_dormant_site_activates_it():
    G = generator_matrix(PAIR, preset("cpid", 2, delta_a=1, delta_d=0.3))
    Q = G.dense()
    s = G.encode([0], [0])
    assert Q[s, G.encode([0, 1], [0, 1])] == pytest.approx(2.0)
    assert Q[s, G.encode([0, 1], [0])] == 0


def test_cpb_switch_of_infected_site_heals():
    G = generator_matrix(PAIR, preset("cpb", 2, sigma=0.5, rho=1))
    Q = G.dense()
    assert Q[G.encode([0], [0, 1]), G.encode([], [1])] == pytest.approx(0.5)


def test_single_site_has_four_states():
    G = generator_matrix(LatticeSpec.ring(1, "free"), RATES)
    assert G.n_states == 4


def test_size_limit():
    with pytest.raises(ValueError):
        generator_matrix(LatticeSpec.ring(MAX_SITES + 1), RATES)


def test_time_zero_and_zero_rates():
    G = generator_matrix(PAIR, RATES)
    p0 = point_distribution(G, [0], [0, 1])
    assert np.array_equal(transient_distribution(G, p0, 0.0), p0)
    G0 = generator_matrix(PAIR, RateSet.symmetric(0, 0, 0, 0, 0, 0, 0, 0))
    assert np.array_equal(transient_distribution(G0, p0, 5.0), p0)


def test_rejects_bad_initial_vector():
    G = generator_matrix(PAIR, RATES)
    with pytest.raises(ValueError):
        transient_distribution(G, np.full(G.n_states, 0.1), 1.0)
    with pytest.raises(ValueError):
        transient_distribution(G, np.ones(3) / 3, 1.0)


def test_uniformisation_matches_matrix_exponential():
    for lat in (PAIR, LatticeSpec.ring(3)):
        G = generator_matrix(lat, RATES)
        p0 = product_initial(G, [0], 0.5)
        for t in (0.1, 1.0, 3.0):
            a = transient_distribution(G, p0, t)
            b = transient_distribution_expm(G, p0, t)
            assert np.abs(a - b).max() < 1e-8


def test_trivial_predicate_and_empty_state():
    G = generator_matrix(LatticeSpec.ring(3), RATES)
    p0 = product_initial(G, [0, 1], 0.4)
    assert exact_marginal(G, p0, 1.5, lambda inf, act: np.ones(len(inf), bool)) == pytest.approx(1.0, abs=1e-12)
    empty = lambda inf, act: ~inf.any(axis=1)
    probs = [exact_marginal(G, p0, t, empty) for t in (0.5, 1, 2, 4)]
    assert all(b >= a - 1e-12 for a, b in zip(probs, probs[1:]))


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.1, 4))
def test_activity_marginal_stays_stationary(s, r, t):
    rates = RateSet.symmetric(1.0, 0.5, 0.5, 0.2, 1.0, 0.5, s, r)
    G = generator_matrix(PAIR, rates)
    a = alpha(rates)
    p = exact_marginal(G, product_initial(G, [0], a), t, lambda inf, act: act[:, 1])
    assert p == pytest.approx(a, abs=1e-10)
