import numpy as np
import pytest

from cpswitch.core import LatticeSpec, RateError, RateSet, preset
from cpswitch.coupling import (CoupledPair, Family, ProcessSpec, _coupled_run, check_additivity,
                               couple_cpid_over_cpd, couple_cpree_switch_monotone, couple_cps_over_cpb,
                               couple_monotone, couple_trivial_dominating, domination_csv,
                               fast_switch_convergence, min_replicas, slow_switch_convergence, test_domination_stat)
from cpswitch.graphical import sample_timeline

RING = LatticeSpec.ring(12)
CPS = RateSet.symmetric(2.5, 1.5, 1.0, 0.5, 1.0, 0.4, 1.0, 1.5)
A0 = np.arange(0, 12, 2)


def all_hold(pairs):
    pairs = list(pairs)
    return all(p.holds for p in pairs) and all(p.audit().ok for p in pairs)


# --- pathwise couplings


def test_monotone_coupling_holds():
    lower = RateSet.symmetric(1.0, 0.5, 0.5, 0.2, 1.2, 0.6, 1.0, 1.5)
    assert all_hold(couple_monotone(RING, lower, CPS, [0, 1], [0, 1, 5], A0, 5.0, seed=s) for s in range(150))


def test_monotone_coupling_needs_ordered_rates():
    with pytest.raises(RateError):
        couple_monotone(RING, CPS, preset("cp", 1.0), [0], [0], A0, 1.0, seed=0)
    with pytest.raises(RateError):
        couple_monotone(RING, preset("cpb", 1.0), CPS, [0], [0], A0, 1.0, seed=0)


def test_equal_rates_give_identical_paths():
    pair = couple_monotone(RING, CPS, CPS, [0, 3], [0, 3], A0, 5.0, seed=4)
    assert np.array_equal(pair.lower.infected, pair.upper.infected)
    assert np.array_equal(pair.lower.active, pair.upper.active)


def test_trivial_dominating_coupling_holds():
    assert all_hold(couple_trivial_dominating(RING, CPS, A0, [0, 6], 5.0, seed=s) for s in range(150))


def test_trivial_dominating_is_exact_for_a_plain_cp():
    pair = couple_trivial_dominating(RING, preset("cp", 2.0, 1.0), A0, [0], 5.0, seed=1)
    assert np.array_equal(pair.lower.infected, pair.upper.infected)


def test_cps_over_cpb_holds():
    r = RateSet.symmetric(3.0, 1.0, 1.0, 0.5, 1.0, 0.3, 1.0, 1.0)
    assert all_hold(couple_cps_over_cpb(RING, r, A0, [0, 1, 2], 5.0, seed=s) for s in range(150))


def test_cps_over_cpb_starts_from_active_infections():
    r = RateSet.symmetric(3.0, 1.0, 1.0, 0.5, 1.0, 0.3, 1.0, 1.0)
    pair = couple_cps_over_cpb(RING, r, A0, [0, 1], 2.0, seed=0, sample_times=[0.0])
    assert pair.lower.infected[0].nonzero()[0].tolist() == [0]
    assert pair.upper.infected[0].nonzero()[0].tolist() == [0, 1]


def test_cpid_over_cpd_holds_for_infection_and_activity():
    r = preset("cpid", 2.5, delta_a=1.0, delta_d=0.3)
    assert all_hold(couple_cpid_over_cpd(RING, r, A0, [0, 1], 5.0, seed=s) for s in range(150))


def test_cpid_over_cpd_from_empty_keeps_equal_activity():
    r = preset("cpid", 2.5, delta_a=1.0, delta_d=0.3)
    pair = couple_cpid_over_cpd(RING, r, A0, [], 5.0, seed=2)
    assert not pair.upper.infected.any()
    assert np.array_equal(pair.lower.active, pair.upper.active)


def test_cpree_switch_monotone_holds():
    pairs = (couple_cpree_switch_monotone(RING, (0.5, 2.0), (1.5, 1.0), 1.0, 0.2, 2.5, [0, 1], A0, 5.0, seed=s)
             for s in range(150))
    assert all_hold(pairs)


def test_cpree_switch_monotone_rejects_unordered_switching():
    with pytest.raises(RateError):
        couple_cpree_switch_monotone(RING, (2.0, 1.0), (1.0, 1.0), 1.0, 0.2, 2.0, [0], A0, 1.0, seed=0)


def test_additivity_after_every_event():
    r = RateSet.symmetric(2.0, 1.0, 0.8, 0.4, 1.0, 0.3, 1.0, 1.0)
    for s in range(100):
        tl = sample_timeline(RING, r, 4.0, seed=s)
        check = check_additivity(tl, [0, 1], [6], A0)
        assert check and check.n_times == len(np.unique(tl.times)) + 1


def test_a_wrong_plan_is_caught():
    # private arrows for the smaller process break the inclusion
    lat = LatticeSpec.ring(6)
    plan = [("base", [1.0, 1.0, 0.0, 0.0, 0.0], [1.0, 0, 0, 0, 0], (0, 1)),
            ("lower_extra", [0.0] * 5, [0, 0, 0, 0, 3.0], (0,))]
    ones = np.ones(6, bool)
    x0 = np.zeros(6, bool)
    x0[0] = True
    broken = [_coupled_run("monotone", ("a", "b"), lat, plan, ["plain", "plain"], [x0, x0], [ones, ones],
                           3.0, s, 0, None) for s in range(30)]
    assert any(p.violations > 0 for p in broken)
    bad = next(p for p in broken if p.violations)
    assert bad.first_violation is not None and 0 < bad.first_violation <= 3.0


def test_audit_catches_reused_randomness():
    pair = couple_monotone(RING, CPS, CPS, [0], [0], A0, 2.0, seed=0)
    tl = pair.families[0].timeline
    forged = CoupledPair(pair.relation, pair.names, [Family("p0", tl, (0,)), Family("p1", tl, (1,))],
                         pair.lower, pair.upper, 0, None, 0)
    assert not forged.audit().ok
    assert pair.audit().ok


# --- statistical domination


def test_min_replicas():
    assert min_replicas(0.99) == 1000
    assert min_replicas(0.95) == 200
    with pytest.raises(ValueError):
        min_replicas(1.0)


def test_domination_stat_rejects_too_few_replicas():
    spec = ProcessSpec(RING, preset("cp", 2), [0], 1.0)
    with pytest.raises(ValueError, match="too few"):
        test_domination_stat(spec, spec, "infected_count_at_t", 100)
    with pytest.raises(ValueError):
        test_domination_stat(spec, spec, "mean_field", 1000)


def test_domination_stat_passes_and_fails_as_expected():
    low = ProcessSpec(RING, preset("cp", 1.0), np.arange(12), 2.0, label="low")
    high = ProcessSpec(RING, preset("cp", 3.0), np.arange(12), 2.0, label="high")
    ok = test_domination_stat(low, high, "infected_count_at_t", 1000)
    wrong = test_domination_stat(high, low, "infected_count_at_t", 1000)
    assert ok.passed and not wrong.passed
    ext = test_domination_stat(low, high, "extinction_prob", 1000)
    assert ext.passed and ext.estimate_B <= ext.estimate_A
    lines = domination_csv([ok, wrong]).splitlines()
    assert lines[0] == "scenario,functional,estimate_A,estimate_B,CI,verdict"
    assert lines[1].startswith("low <= high,infected_count_at_t,") and lines[1].endswith(",pass")


# --- scaling limits


def test_fast_switch_report_shape_and_validation():
    r = preset("cpd_social", 3.0, 1.0)
    rep = fast_switch_convergence(LatticeSpec.ring(8), r, [1, 8], [0, 1], 0.5, 500, seed=1, n_boot=50)
    assert rep.distance.shape == (2,) and rep.boot.shape == (50, 2)
    assert np.all(rep.ci_low <= rep.ci_high)
    with pytest.raises(ValueError):
        fast_switch_convergence(LatticeSpec.ring(8), r, [1], list(range(7)), 0.5, 10)
    with pytest.raises(ValueError):
        fast_switch_convergence(LatticeSpec.ring(8), r, [0], [0], 0.5, 10)


def test_fast_switch_of_a_plain_cp_is_within_noise():
    rep = fast_switch_convergence(LatticeSpec.ring(8), preset("cp", 2.0, 1.0), [1, 4], [0, 1], 1.0, 4000,
                                  seed=3, n_boot=200)
    assert rep.within_noise().all()


def test_slow_switch_without_switching_is_exact():
    r = preset("cpree", 2.0, delta_a=1.0, delta_d=0.2, sigma=0.0, rho=0.0)
    rep = slow_switch_convergence(LatticeSpec.ring(6), r, [1, 4], [0, 1], 1.0, 200, seed=0, p_active=0.5,
                                  n_boot=20)
    assert np.all(rep.distance == 0) and np.all(rep.coupling_bound == 0)


def test_slow_switch_coupling_bound_shrinks():
    r = preset("cpree", 2.0, delta_a=1.0, delta_d=0.2)
    rep = slow_switch_convergence(LatticeSpec.ring(10), r, [1, 4, 16], [0, 1], 1.0, 600, seed=0, n_boot=50)
    assert np.all(np.diff(rep.coupling_bound) <= 0)
    assert np.all(rep.distance <= rep.coupling_bound + 1e-12)
