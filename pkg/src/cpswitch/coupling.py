"""Shared-randomness couplings and distributional comparisons.

A pathwise coupling is described as a list of event families. Each family is
an independent set of Poisson streams drawn from its own seed address, and it
drives a subset of the two coupled processes. Both processes are then evolved
by one sweep over the merged events, with containment checked after every
event that changes a state.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from . import rng as _rng
from .core import LatticeSpec, RateError, RateSet, alpha, effective_fast_rates, param_dominates, site_mask
from .dynamics import Trajectory, run_ensemble
from .graphical import (EventTimeline, TO_A, TO_D, sample_streams, stream_rate_vector, sweep,
                        timeline_rates)

RELATIONS = ("monotone", "dominating_cp", "dominated_cp", "cps_over_cpb", "cpid_over_cpd",
             "cpree_switch_monotone", "fast_limit", "slow_limit")


@dataclass(frozen=True)
class Family:
    """One independent block of streams and the processes it drives."""

    label: str
    timeline: EventTimeline
    members: tuple[int, ...]

    @property
    def shared(self) -> bool:
        return set(self.members) >= {0, 1}


@dataclass(frozen=True)
class StreamAudit:
    declared_shared: frozenset  # families declared as shared
    shared_events: int  # events found in both processes
    declared_events: int  # events in declared-shared families
    ok: bool


@dataclass
class CoupledPair:
    """Two processes evolved on shared events; process 0 is the smaller one."""

    relation: str
    names: tuple[str, str]
    families: list[Family]
    lower: Trajectory
    upper: Trajectory
    violations: int
    first_violation: float | None
    checks: int

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def events_of(self, k: int) -> set[tuple[float, int]]:
        out = set()
        for f in self.families:
            if k in f.members:
                out.update(zip(f.timeline.times.tolist(), f.timeline.streams.tolist()))
        return out

    def audit(self) -> StreamAudit:
        """Compare the events the processes actually share with the declared plan.

        Events are identified by (time, stream id); independent families cannot
        produce the same pair, so any overlap outside the declared shared
        families means two families were drawn from the same randomness.
        """
        both = self.events_of(0) & self.events_of(1)
        declared = set()
        for f in self.families:
            if f.shared:
                declared.update(zip(f.timeline.times.tolist(), f.timeline.streams.tolist()))
        labels = frozenset(f.label for f in self.families if f.shared)
        return StreamAudit(labels, len(both), len(declared), both == declared)


def _traj(lattice, T, res, k) -> Trajectory:
    inf = res.infected[:, k, :]
    act = res.active[:, k, :]
    return Trajectory(lattice, float(T), res.sample_times, inf.sum(axis=1), act.sum(axis=1),
                      float(res.extinction[k]), inf, act)


def _coupled_run(relation, names, lattice, plan, variants, X0, A0, T, seed, replica, sample_times,
                 act_check=0) -> CoupledPair:
    """``plan`` lists (label, site_rates, edge_rates, members)."""
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}")
    if not T > 0:
        raise ValueError("horizon T must be positive")
    st = np.linspace(0.0, T, 101) if sample_times is None else np.asarray(sample_times, dtype=np.float64)
    families = []
    for i, (label, site, edge, members) in enumerate(plan):
        gen = _rng.generator(seed, replica, _rng.STREAM_TIMELINE, i)
        tl = sample_streams(lattice, stream_rate_vector(lattice, site, edge), T, gen, seed, label)
        families.append(Family(label, tl, tuple(members)))
    membership = np.zeros((len(families), 2), bool)
    for i, f in enumerate(families):
        membership[i, list(f.members)] = True
    res = sweep([f.timeline for f in families], membership, variants, np.stack(X0), np.stack(A0), st,
                inf_check=True, act_check=act_check)
    return CoupledPair(relation, names, families, _traj(lattice, T, res, 0), _traj(lattice, T, res, 1),
                       res.violations, res.first_violation, res.checks)


def _plain_finite(rates: RateSet, what: str):
    rates.require_finite()
    rates.require_symmetric()
    if rates.variant != "plain":
        raise RateError(f"{what} needs plain-variant rates")


def couple_monotone(lattice: LatticeSpec, lower_rates: RateSet, upper_rates: RateSet, X0_lower, X0_upper, A0,
                    T: float, seed: int, replica: int = 0, sample_times=None) -> CoupledPair:
    """Lower process inside the upper one when the upper has more infection and less recovery."""
    _plain_finite(lower_rates, "couple_monotone")
    _plain_finite(upper_rates, "couple_monotone")
    if not param_dominates(lower_rates, upper_rates):
        raise RateError("upper rates do not dominate lower rates")
    x_lo, x_up = site_mask(lattice, X0_lower), site_mask(lattice, X0_upper)
    if np.any(x_lo & ~x_up):
        raise ValueError("X0_lower must be a subset of X0_upper")
    a0 = site_mask(lattice, A0)
    lo, up = lower_rates, upper_rates
    plan = [
        ("base", [up.delta_a, up.delta_d, lo.sigma, lo.rho, 0.0], list(lo.lambdas) + [0.0], (0, 1)),
        ("lower_extra_recovery", [lo.delta_a - up.delta_a, lo.delta_d - up.delta_d, 0, 0, 0], [0.0] * 5, (0,)),
        ("upper_extra_arrows", [0.0] * 5, [u - l for l, u in zip(lo.lambdas, up.lambdas)] + [0.0], (1,)),
    ]
    return _coupled_run("monotone", ("lower", "upper"), lattice, plan, ["plain", "plain"], (x_lo, x_up),
                        (a0, a0), T, seed, replica, sample_times)


@dataclass(frozen=True)
class AdditivityCheck:
    holds: bool
    first_failure: float | None
    n_times: int

    def __bool__(self):
        return self.holds


def check_additivity(timeline: EventTimeline, I1, I2, A0, sample_times=None) -> AdditivityCheck:
    """Compare X^{I1} ∪ X^{I2} with X^{I1 ∪ I2} on one timeline.

    Without ``sample_times`` the comparison is made right after every event.
    """
    lat = timeline.lattice
    i1, i2 = site_mask(lat, I1), site_mask(lat, I2)
    a0 = site_mask(lat, A0)
    if sample_times is None:
        st = np.concatenate([[0.0], np.unique(timeline.times)])
    else:
        st = np.asarray(sample_times, dtype=np.float64)
    res = sweep([timeline], np.ones((1, 3), bool), ["plain"] * 3, np.stack([i1, i2, i1 | i2]),
                np.stack([a0, a0, a0]), st)
    inf = res.infected
    ok = np.all((inf[:, 0] | inf[:, 1]) == inf[:, 2], axis=1)
    bad = np.flatnonzero(~ok)
    return AdditivityCheck(bool(ok.all()), float(st[bad[0]]) if bad.size else None, int(st.size))


def couple_trivial_dominating(lattice: LatticeSpec, cps_rates: RateSet, A0, X0, T: float, seed: int,
                              replica: int = 0, sample_times=None) -> CoupledPair:
    """CPS inside a CP with infection rate max λ and recovery rate min(δ_a, δ_d).

    The CP heals on shared unconditional marks at rate min δ; the CPS also
    heals on private type-matched marks for the remainder. Typed arrows are
    shared, and the CP gets private typed arrows topping every type up to
    max λ, so it infects along every edge at that rate whatever the types.
    """
    _plain_finite(cps_rates, "couple_trivial_dominating")
    r = cps_rates
    dmin = min(r.delta_a, r.delta_d)
    lmax = max(r.lambdas)
    plan = [
        ("shared_recovery", [0, 0, 0, 0, dmin], [0.0] * 5, (0, 1)),
        ("cps_recovery", [r.delta_a - dmin, r.delta_d - dmin, 0, 0, 0], [0.0] * 5, (0,)),
        ("switching", [0, 0, r.sigma, r.rho, 0], [0.0] * 5, (0, 1)),
        ("shared_arrows", [0.0] * 5, list(r.lambdas) + [0.0], (0, 1)),
        ("cp_arrows", [0.0] * 5, [lmax - l for l in r.lambdas] + [0.0], (1,)),
    ]
    x0, a0 = site_mask(lattice, X0), site_mask(lattice, A0)
    return _coupled_run("dominating_cp", ("cps", "cp"), lattice, plan, ["plain", "plain"], (x0, x0), (a0, a0),
                        T, seed, replica, sample_times)


def couple_cps_over_cpb(lattice: LatticeSpec, cps_rates: RateSet, A0, X0, T: float, seed: int,
                        replica: int = 0, sample_times=None) -> CoupledPair:
    """CPB (infection λ_aa, healed by switching off) inside the CPS.

    The CPB starts from the infected active sites of X0.
    """
    _plain_finite(cps_rates, "couple_cps_over_cpb")
    r = cps_rates
    if r.delta_a != 1:
        raise RateError("the CPB comparison needs delta_a = 1")
    plan = [
        ("shared", [r.delta_a, 0, r.sigma, r.rho, 0], [r.lam_aa, 0, 0, 0, 0], (0, 1)),
        ("cps_only", [0, r.delta_d, 0, 0, 0], [0, r.lam_ad, r.lam_da, r.lam_dd, 0], (1,)),
    ]
    x0, a0 = site_mask(lattice, X0), site_mask(lattice, A0)
    return _coupled_run("cps_over_cpb", ("cpb", "cps"), lattice, plan, ["cpb", "plain"], (x0 & a0, x0),
                        (a0, a0), T, seed, replica, sample_times)


def couple_cpid_over_cpd(lattice: LatticeSpec, cpid_rates: RateSet, A0, X0, T: float, seed: int,
                         replica: int = 0, sample_times=None) -> CoupledPair:
    """CPD inside the CPID with the same aa rate, recovery and switching.

    The CPID's diagonal arrows (active source, dormant target) are private;
    they can only add activity, so both the infected and the active set of
    the CPD stay inside those of the CPID.
    """
    r = cpid_rates
    r.require_finite()
    r.require_symmetric()
    if r.variant != "cpid":
        raise RateError("couple_cpid_over_cpd needs cpid-variant rates")
    plan = [
        ("shared", [r.delta_a, r.delta_d, r.sigma, r.rho, 0], [r.lam_aa, 0, 0, 0, 0], (0, 1)),
        ("cpid_diagonal", [0.0] * 5, [0, r.lam_ad, 0, 0, 0], (1,)),
    ]
    x0, a0 = site_mask(lattice, X0), site_mask(lattice, A0)
    return _coupled_run("cpid_over_cpd", ("cpd", "cpid"), lattice, plan, ["plain", "cpid"], (x0, x0), (a0, a0),
                        T, seed, replica, sample_times, act_check=1)


def couple_cpree_switch_monotone(lattice: LatticeSpec, switch1: tuple[float, float], switch2: tuple[float, float],
                                 delta_a: float, delta_d: float, lam: float, X0, A0, T: float, seed: int,
                                 replica: int = 0, sample_times=None) -> CoupledPair:
    """Two CPREE processes where process 1 (rates switch1) is the more active one.

    Process 0 here is the first process: its infected set must stay inside
    the second's, while its active set contains the second's.
    """
    (s1, r1), (s2, r2) = switch1, switch2
    if not (s1 <= s2 and r1 >= r2 and delta_d <= delta_a):
        raise RateError("need sigma1 <= sigma2, rho1 >= rho2 and delta_d <= delta_a")
    for v in (s1, r1, s2, r2, delta_a, delta_d, lam):
        if not (math.isfinite(v) and v >= 0):
            raise RateError("rates must be finite and non-negative")
    plan = [
        ("shared", [delta_a - delta_d, 0, s1, r2, delta_d], [0, 0, 0, 0, lam], (0, 1)),
        ("first_extra_on", [0, 0, 0, r1 - r2, 0], [0.0] * 5, (0,)),
        ("second_extra_off", [0, 0, s2 - s1, 0, 0], [0.0] * 5, (1,)),
    ]
    x0, a0 = site_mask(lattice, X0), site_mask(lattice, A0)
    return _coupled_run("cpree_switch_monotone", ("first", "second"), lattice, plan, ["plain", "plain"],
                        (x0, x0), (a0, a0), T, seed, replica, sample_times, act_check=-1)


# ---------------------------------------------------------------------------
# distributional domination


FUNCTIONALS = ("extinction_prob", "infected_count_at_t")


@dataclass(frozen=True)
class ProcessSpec:
    """A process to sample: A0 None means product-Bernoulli(alpha) initial types."""

    lattice: LatticeSpec
    rates: RateSet
    X0: object
    t: float
    A0: object = None
    label: str = ""


@dataclass(frozen=True)
class DominationReport:
    scenario: str
    functional: str
    estimate_A: float
    estimate_B: float
    ci: float  # one-sided half-width on the difference
    verdict: str
    replicas: int
    confidence: float

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def min_replicas(confidence: float) -> int:
    """Smallest replica count accepted at a confidence level (ten expected tail events)."""
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    return int(math.ceil(10.0 / (1.0 - confidence) - 1e-9))


def _functional_samples(spec: ProcessSpec, functional: str, replicas: int, seed: int, offset: int,
                        n_jobs: int) -> np.ndarray:
    stationary = spec.A0 is None
    ens = run_ensemble(spec.lattice, spec.rates, spec.X0, spec.A0, spec.t, replicas, seed, sample_times=[spec.t],
                       initial_activity="stationary" if stationary else "fixed", n_jobs=n_jobs,
                       replica_offset=offset)
    if functional == "infected_count_at_t":
        return ens.infected_count[:, 0, 0].astype(np.float64)
    return (ens.extinction[:, 0] <= spec.t).astype(np.float64)


def test_domination_stat(spec_A: ProcessSpec, spec_B: ProcessSpec, functional: str, replicas: int,
                         confidence: float = 0.99, seed: int = 0, scenario: str = "", n_jobs: int = 1
                         ) -> DominationReport:
    """One-sided check that B stochastically dominates A on a monotone functional.

    For the infected count domination means E_B ≥ E_A; for the extinction
    probability it means P_B ≤ P_A. The verdict is 'pass' unless the observed
    difference goes the wrong way by more than the one-sided normal bound.
    """
    if functional not in FUNCTIONALS:
        raise ValueError(f"functional must be one of {FUNCTIONALS}")
    need = min_replicas(confidence)
    if replicas < need:
        raise ValueError(f"{replicas} replicas are too few for confidence {confidence}; need at least {need}")
    a = _functional_samples(spec_A, functional, replicas, seed, 0, n_jobs)
    b = _functional_samples(spec_B, functional, replicas, seed, replicas, n_jobs)
    se = math.sqrt(a.var(ddof=1) / replicas + b.var(ddof=1) / replicas)
    z = float(norm.ppf(confidence))
    diff = b.mean() - a.mean()
    if functional == "extinction_prob":
        diff = -diff
    half = z * se
    verdict = "pass" if diff >= -half else "fail"
    return DominationReport(scenario or f"{spec_A.label} <= {spec_B.label}", functional, float(a.mean()),
                            float(b.mean()), half, verdict, replicas, confidence)


test_domination_stat.__test__ = False  # not a pytest test despite the name


def domination_csv(reports: Sequence[DominationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "functional", "estimate_A", "estimate_B", "CI", "verdict"])
    for r in reports:
        w.writerow([r.scenario, r.functional, repr(r.estimate_A), repr(r.estimate_B), repr(r.ci), r.verdict])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# switching limits


MAX_WINDOW = 6
MARGINALS = ("joint", "infection", "activity")


@dataclass
class ConvergenceReport:
    relation: str
    k: np.ndarray
    distance: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    boot: np.ndarray  # (B, len(k)) bootstrap distances
    replicas: int
    window: np.ndarray
    marginal: str
    noise_floor: np.ndarray | None = None  # 99% quantile of the estimator when the laws are equal
    coupling_bound: np.ndarray | None = None  # P(window differs) under the thinning coupling

    def within_noise(self) -> np.ndarray:
        """Per k, whether the distance is indistinguishable from zero."""
        return self.distance <= self.noise_floor

    def significant_decrease(self, i: int, j: int, level: float = 0.95) -> bool:
        """Whether distance[i] > distance[j] at the given bootstrap level."""
        d = self.boot[:, i] - self.boot[:, j]
        return bool(np.quantile(d, 1.0 - level) > 0)


def _check_window(lattice: LatticeSpec, window) -> np.ndarray:
    w = np.asarray(window, dtype=np.int64).reshape(-1)
    if w.size == 0 or w.size > MAX_WINDOW:
        raise ValueError(f"window must hold between 1 and {MAX_WINDOW} sites")
    if np.any(w < 0) or np.any(w >= lattice.n_sites) or np.unique(w).size != w.size:
        raise ValueError("window sites must be distinct sites of the lattice")
    return w


def _cell_index(codes: np.ndarray, marginal: str) -> tuple[np.ndarray, int]:
    """codes (R, w) with values 2*infected + dormant -> flat cell index per replica."""
    w = codes.shape[1]
    if marginal == "joint":
        digits, base = codes.astype(np.int64), 4
    elif marginal == "infection":
        digits, base = (codes >= 2).astype(np.int64), 2
    else:
        digits, base = (codes % 2).astype(np.int64), 2
    return digits @ (base ** np.arange(w, dtype=np.int64)), base ** w


def _tv(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(p - q).sum(axis=-1)


def _product_law(cp_inf_pmf: np.ndarray, alpha_: float, w: int, marginal: str) -> np.ndarray:
    """Law of (CP infections, independent Bernoulli(alpha) types) on the window cells."""
    idx = np.arange(2 ** w)
    dorm_bits = (idx[:, None] >> np.arange(w)) & 1
    act_pmf = np.where(dorm_bits == 0, alpha_, 1.0 - alpha_).prod(axis=1)
    if marginal == "infection":
        return cp_inf_pmf
    if marginal == "activity":
        return np.broadcast_to(act_pmf, cp_inf_pmf.shape[:-1] + act_pmf.shape).copy()
    out = np.zeros(cp_inf_pmf.shape[:-1] + (4 ** w,))
    pw4 = 4 ** np.arange(w)
    for i in range(2 ** w):
        ib = (i >> np.arange(w)) & 1
        for d in range(2 ** w):
            cell = int(((2 * ib + dorm_bits[d]) * pw4).sum())
            out[..., cell] = cp_inf_pmf[..., i] * act_pmf[d]
    return out


def fast_switch_convergence(lattice: LatticeSpec, rates: RateSet, k_list, window, t: float, replicas: int,
                            X0=None, seed: int = 0, marginal: str = "joint", n_boot: int = 400,
                            n_jobs: int = 1) -> ConvergenceReport:
    """TV distance between the CPS with switching (kσ, kρ) and CP(λ*, δ*) ⊗ Bernoulli(α) on a window.

    Initial infections are X0 (all sites by default) and initial types are
    drawn from the stationary product law.
    """
    _plain_finite(rates, "fast_switch_convergence")
    if marginal not in MARGINALS:
        raise ValueError(f"marginal must be one of {MARGINALS}")
    w = _check_window(lattice, window)
    x0 = np.ones(lattice.n_sites, bool) if X0 is None else site_mask(lattice, X0)
    a = alpha(rates)
    lam_s, del_s = effective_fast_rates(rates)
    cp = RateSet.symmetric(lam_s, lam_s, lam_s, lam_s, del_s, del_s, rates.sigma, rates.rho)
    ks = np.asarray(k_list, dtype=np.float64)
    if np.any(ks <= 0):
        raise ValueError("scaling factors must be positive")

    def window_cells(r, stream_offset, mg):
        ens = run_ensemble(lattice, r, x0, None, t, replicas, seed, sample_times=[t], window=w,
                           initial_activity="stationary", n_jobs=n_jobs, replica_offset=stream_offset)
        return _cell_index(ens.codes[:, 0, 0, :], mg)

    cp_cells, n_cp = window_cells(cp, 0, "infection")
    gen = _rng.generator(seed, 0, _rng.STREAM_BOOTSTRAP)
    cp_pmf = np.bincount(cp_cells, minlength=n_cp) / replicas
    cp_boot = gen.multinomial(replicas, cp_pmf, size=n_boot) / replicas
    target = _product_law(cp_pmf, a, w.size, marginal)
    # the plug-in distance is biased upwards; calibrate it under equal laws
    null = _tv(gen.multinomial(replicas, target, size=n_boot) / replicas, _product_law(cp_boot, a, w.size, marginal))
    dist, boot = [], []
    for i, k in enumerate(ks):
        cells, ncell = window_cells(rates.scaled_switching(float(k)), (i + 1) * replicas, marginal)
        pmf = np.bincount(cells, minlength=ncell) / replicas
        dist.append(float(_tv(pmf, target)))
        pb = gen.multinomial(replicas, pmf, size=n_boot) / replicas
        boot.append(_tv(pb, _product_law(cp_boot, a, w.size, marginal)))
    boot = np.stack(boot, axis=1)
    floor = np.full(ks.size, float(np.quantile(null, 0.99)))
    return ConvergenceReport("fast_limit", ks, np.array(dist), np.quantile(boot, 0.025, axis=0),
                             np.quantile(boot, 0.975, axis=0), boot, replicas, w, marginal, floor)


def slow_switch_convergence(lattice: LatticeSpec, rates: RateSet, k_list, window, t: float, replicas: int,
                            X0=None, seed: int = 0, marginal: str = "joint", p_active: float | None = None,
                            n_boot: int = 400) -> ConvergenceReport:
    """TV distance between the CPS with switching (σ/k, ρ/k) and the static-environment process.

    All processes of one replica share a single timeline sampled at the
    unscaled rates; every switching event carries a uniform mark and the
    process with factor k keeps it iff mark < 1/k. The static process keeps
    none. Initial types are product-Bernoulli(p_active), alpha by default.
    """
    _plain_finite(rates, "slow_switch_convergence")
    if marginal not in MARGINALS:
        raise ValueError(f"marginal must be one of {MARGINALS}")
    w = _check_window(lattice, window)
    ks = np.sort(np.asarray(k_list, dtype=np.float64))
    if np.any(ks < 1):
        raise ValueError("slow-switching factors must be at least 1")
    if p_active is None:
        p_active = alpha(rates) if rates.sigma + rates.rho > 0 else 1.0
    n = lattice.n_sites
    x0 = np.ones(n, bool) if X0 is None else site_mask(lattice, X0)
    L = ks.size
    thresholds = np.concatenate([1.0 / ks, [0.0]])  # decreasing
    base_rates = timeline_rates(lattice, rates)
    cells = np.zeros((replicas, L + 1), np.int64)
    for rep in range(replicas):
        gen = _rng.generator(seed, rep, _rng.STREAM_TIMELINE)
        tl = sample_streams(lattice, base_rates, t, gen, seed)
        a0 = _rng.generator(seed, rep, _rng.STREAM_INITIAL).random(n) < p_active
        marks = _rng.generator(seed, rep, _rng.STREAM_THINNING).random(len(tl))
        switch = (tl.kinds == TO_D) | (tl.kinds == TO_A)
        fams = [EventTimeline(lattice, t, tl.times[~switch], tl.streams[~switch])]
        member = [np.ones(L + 1, bool)]
        for b in range(L):
            sel = switch & (marks < thresholds[b]) & (marks >= thresholds[b + 1])
            fams.append(EventTimeline(lattice, t, tl.times[sel], tl.streams[sel]))
            m = np.zeros(L + 1, bool)
            m[: b + 1] = True
            member.append(m)
        res = sweep(fams, np.stack(member), ["plain"] * (L + 1), np.repeat(x0[None], L + 1, 0),
                    np.repeat(a0[None], L + 1, 0), [t])
        codes = 2 * res.infected[0][:, w].astype(np.int64) + (~res.active[0][:, w]).astype(np.int64)
        cells[rep], ncell = _cell_index(codes, marginal)
    ncell = _cell_index(np.zeros((1, w.size), np.int64), marginal)[1]
    static = np.bincount(cells[:, L], minlength=ncell) / replicas
    dist = np.array([_tv(np.bincount(cells[:, j], minlength=ncell) / replicas, static) for j in range(L)])
    differ = np.array([(cells[:, j] != cells[:, L]).mean() for j in range(L)])
    gen = _rng.generator(seed, 0, _rng.STREAM_BOOTSTRAP)
    boot = np.zeros((n_boot, L))
    for b in range(n_boot):
        idx = gen.integers(0, replicas, replicas)
        c = cells[idx]
        s = np.bincount(c[:, L], minlength=ncell) / replicas
        for j in range(L):
            boot[b, j] = _tv(np.bincount(c[:, j], minlength=ncell) / replicas, s)
    null = _tv(gen.multinomial(replicas, static, size=n_boot) / replicas,
               gen.multinomial(replicas, static, size=n_boot) / replicas)
    floor = np.full(L, float(np.quantile(null, 0.99)))
    return ConvergenceReport("slow_limit", ks, dist, np.quantile(boot, 0.025, axis=0),
                             np.quantile(boot, 0.975, axis=0), boot, replicas, w, marginal, floor, differ)
