import math

import numpy as np
import pytest
from scipy import stats

from cpswitch.core import LatticeSpec, RateError, RateSet, alpha, preset
from cpswitch.dynamics import Censored, extinction_time, run_ensemble, simulate_direct
from cpswitch.oracle import exact_marginal, generator_matrix

RING4 = LatticeSpec.ring(4)


def test_lone_site_dies_at_exponential_time():
    lat = LatticeSpec.ring(1, "free")
    ens = run_ensemble(lat, preset("cp", 5, 1), [0], [0], 50.0, 20_000, seed=4)
    ext = ens.extinction[:, 0]
    assert np.all(np.isfinite(ext))
    assert stats.kstest(ext, "expon").pvalue > 1e-3


def test_reproducible_and_thread_count_invariant():
    r = preset("cpree", 2.5, delta_a=1, delta_d=0.2)
    times = np.linspace(0, 5, 6)
    a = run_ensemble(RING4, r, [0], [0, 1], 5, 64, seed=9, sample_times=times, window=[0, 1, 2, 3])
    b = run_ensemble(RING4, r, [0], [0, 1], 5, 64, seed=9, sample_times=times, window=[0, 1, 2, 3], n_jobs=3)
    assert np.array_equal(a.codes, b.codes) and np.array_equal(a.extinction, b.extinction)
    t1 = simulate_direct(RING4, r, [0], [0, 1], 5, seed=9, sample_times=times)
    t2 = simulate_direct(RING4, r, [0], [0, 1], 5, seed=9, sample_times=times)
    assert t1.state_dump() == t2.state_dump()


def test_replica_offset_selects_streams():
    r = preset("cp", 2)
    a = run_ensemble(RING4, r, [0], [0, 1, 2, 3], 3, 10, seed=1)
    b = run_ensemble(RING4, r, [0], [0, 1, 2, 3], 3, 5, seed=1, replica_offset=5)
    assert np.array_equal(a.extinction[5:], b.extinction)


def test_cpb_never_has_infected_dormant_sites():
    lat = LatticeSpec.ring(10)
    ens = run_ensemble(lat, preset("cpb", 3, sigma=1, rho=1), range(10), range(10), 5, 200, seed=2,
                       sample_times=np.linspace(0, 5, 51), window=np.arange(10))
    assert not np.any(ens.codes == 3)


def test_cpb_rejects_infected_dormant_start():
    with pytest.raises(ValueError):
        simulate_direct(RING4, preset("cpb", 2), [0], [1], 1, seed=0)


def test_lockstep_processes_are_ordered():
    rates = [preset("cpd_social", lam, 1) for lam in (1.0, 2.0, 3.0, 4.0)]
    ens = run_ensemble(LatticeSpec.ring(30), rates, [0], None, 50, 300, seed=3, initial_activity="stationary")
    assert np.all(np.diff(ens.extinction, axis=1) >= 0)


def test_lockstep_needs_shared_recovery():
    with pytest.raises(RateError):
        run_ensemble(RING4, [preset("cp", 1, 1), preset("cp", 1, 2)], [0], None, 1, 2, seed=0,
                     initial_activity="stationary")


def test_trajectory_outputs():
    r = preset("cp", 0.0, 1.0, sigma=0.0, rho=1.0)
    tr = simulate_direct(RING4, r, [0, 1], [0, 1, 2, 3], 100, seed=0, sample_times=[0, 100])
    assert tr.to_csv().splitlines() == ["time,infected_count,active_count", "0.0,2,4", "100.0,0,4"]
    assert tr.state_dump().splitlines()[0] == "0.0 2A2a"
    assert isinstance(extinction_time(tr), float)
    stuck = simulate_direct(RING4, RateSet.symmetric(0, 0, 0, 0, 0, 0, 0, 1), [0], [0], 2, seed=0)
    assert extinction_time(stuck) == Censored(2.0)
    assert repr(Censored(2.0)) == "CENSORED(2)"


def test_stationary_activity_start():
    r = preset("cp", 1, sigma=1, rho=3)
    ens = run_ensemble(LatticeSpec.ring(20), r, [0], None, 1.0, 500, seed=6, sample_times=[0.0, 1.0],
                       initial_activity="stationary")
    frac = ens.active_count / 20
    assert abs(frac.mean() - alpha(r)) < 0.02


@pytest.mark.parametrize("rates", [
    RateSet.symmetric(2.0, 1.3, 0.7, 0.4, 1.0, 0.3, 0.8, 1.2),
    preset("cpb", 2.0, sigma=0.8, rho=1.2),
    preset("cpid", 2.0, delta_a=1.0, delta_d=0.3, sigma=0.8, rho=1.2),
], ids=["plain", "cpb", "cpid"])
def test_marginals_match_exact_law(rates):
    lat = LatticeSpec.ring(4)
    X0, A0, t, R = [0], [0, 1, 3], 1.0, 40_000
    ens = run_ensemble(lat, rates, X0, A0, t, R, seed=17, sample_times=[t], window=np.arange(4))
    codes = ens.codes[:, 0, 0, :]
    G = generator_matrix(lat, rates)
    init = np.zeros(G.n_states)
    init[G.encode(X0, A0)] = 1.0
    for x in range(4):
        p_inf = exact_marginal(G, init, t, lambda inf, act, x=x: inf[:, x])
        p_act = exact_marginal(G, init, t, lambda inf, act, x=x: act[:, x])
        for p, est in ((p_inf, np.mean(codes[:, x] >= 2)), (p_act, np.mean(codes[:, x] % 2 == 0))):
            assert abs(est - p) < 4.5 * math.sqrt(p * (1 - p) / R) + 1e-12
