"""Direct continuous-time simulation from the flip rates.

The scheduler only keeps clocks for infected sites. A healthy site's type is
an autonomous two-state chain, so it is stored lazily (value plus the time it
was last observed) and resampled from the exact transition probability
whenever an infection attempt or a snapshot needs it. Infected sites are
grouped by type; every infected site of one type carries the same total
proposal rate, so choosing the next event is O(1). Infection attempts are
proposed at the largest rate a source of that type can have and accepted
with probability (actual rate) / (proposal rate), which is exact thinning.

Several processes that differ only in their infection rates can be run in
lockstep on shared randomness (``lam`` with K rows); the proposals come from
the union of their infected sets, which makes the processes pathwise ordered
whenever their infection rates are.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng as _rng
from .core import INSTANT, Configuration, LatticeSpec, RateError, RateSet, alpha, site_mask
from .rng import exponential, randbelow, uniform

PLAIN, CPB, CPID = 0, 1, 2
_VARIANT_CODES = {"plain": PLAIN, "cpb": CPB, "cpid": CPID}


@dataclass(frozen=True)
class Censored:
    """Extinction not observed before the horizon."""

    horizon: float

    def __repr__(self):
        return f"CENSORED({self.horizon:g})"


@dataclass
class Trajectory:
    lattice: LatticeSpec
    horizon: float
    times: np.ndarray
    infected_count: np.ndarray
    active_count: np.ndarray
    extinction: float  # inf when censored
    infected: np.ndarray | None = None  # (S, n) bool
    active: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.times) < 0) or (self.times.size and self.times[-1] > self.horizon):
            raise ValueError("sample times must be sorted and within the horizon")

    @property
    def has_snapshots(self) -> bool:
        return self.infected is not None

    def configurations(self) -> list[Configuration]:
        if not self.has_snapshots:
            raise ValueError("trajectory was recorded without full snapshots")
        return [Configuration.from_arrays(self.lattice, i, a) for i, a in zip(self.infected, self.active)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "infected_count", "active_count"])
        for t, i, a in zip(self.times.tolist(), self.infected_count.tolist(), self.active_count.tolist()):
            w.writerow([repr(float(t)), int(i), int(a)])
        return buf.getvalue()

    def state_dump(self) -> str:
        """Run-length encoded site states per snapshot, e.g. ``0.5 3A2a1D`` where
        a/d are healthy active/dormant and A/D infected active/dormant."""
        if not self.has_snapshots:
            raise ValueError("trajectory was recorded without full snapshots")
        letters = "adAD"
        lines = []
        for t, inf, act in zip(self.times.tolist(), self.infected, self.active):
            codes = 2 * inf.astype(int) + (~act).astype(int)
            parts = []
            i = 0
            while i < codes.size:
                j = i
                while j < codes.size and codes[j] == codes[i]:
                    j += 1
                parts.append(f"{j - i}{letters[codes[i]]}")
                i = j
            lines.append(f"{t!r} {''.join(parts)}")
        return "\n".join(lines) + ("\n" if lines else "")


def extinction_time(trajectory: Trajectory) -> float | Censored:
    """Exact time the infected set became empty, or CENSORED at the horizon."""
    if math.isinf(trajectory.extinction):
        return Censored(trajectory.horizon)
    return trajectory.extinction


# ---------------------------------------------------------------------------
# kernel


@njit(cache=True, nogil=True)
def _lazy_activity(x, t, act, last, sig0, rho0, state):
    s = sig0 + rho0
    dt = t - last[x]
    if s > 0.0 and dt > 0.0:
        a0 = rho0 / s
        p = a0 + (act[x] - a0) * np.exp(-s * dt)
        act[x] = 1 if uniform(state) < p else 0
    last[x] = t
    return act[x]


@njit(cache=True, nogil=True)
def _list_add(x, c, lst, cnt, pos):
    lst[c, cnt[c]] = x
    pos[x] = cnt[c]
    cnt[c] += 1


@njit(cache=True, nogil=True)
def _list_remove(x, c, lst, cnt, pos):
    i = pos[x]
    cnt[c] -= 1
    y = lst[c, cnt[c]]
    lst[c, i] = y
    pos[y] = i
    pos[x] = -1


@njit(cache=True, nogil=True)
def _record(si, t, K, n, inf, act, last, sig0, rho0, union, icount, window, state,
            out_icount, out_acount, out_codes):
    acount = 0
    for x in range(n):
        if union[x] == 0:
            _lazy_activity(x, t, act, last, sig0, rho0, state)
        acount += act[x]
    out_acount[si] = acount
    for k in range(K):
        out_icount[si, k] = icount[k]
        for w in range(window.size):
            x = window[w]
            out_codes[si, k, w] = 2 * inf[k, x] + (1 - act[x])


@njit(cache=True, nogil=True)
def _run(nbr, lam, delta_a, delta_d, variant, sig0, sig1, rho0, rho1,
         inf, act, T, sample_times, window, state, out_icount, out_acount, out_codes, ext):
    """Simulate K coupled processes from (inf, act) up to T. Mutates inf/act."""
    K = inf.shape[0]
    n = inf.shape[1]
    m = nbr.shape[1]
    S = sample_times.size
    last = np.zeros(n)
    union = np.zeros(n, dtype=np.int64)
    icount = np.zeros(K, dtype=np.int64)
    lst = np.empty((2, n), dtype=np.int64)
    cnt = np.zeros(2, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    for k in range(K):
        ext[k] = np.inf
        for x in range(n):
            if inf[k, x]:
                union[x] += 1
                icount[k] += 1
    for k in range(K):
        if icount[k] == 0:
            ext[k] = 0.0
    for x in range(n):
        if union[x] > 0:
            _list_add(x, act[x], lst, cnt, pos)

    # per-type proposal rates of an infected site; index 1 active, 0 dormant
    rec = np.zeros(2)
    sw = np.zeros(2)
    top = np.zeros(2)
    rec[1] = delta_a
    rec[0] = delta_d if variant != CPB else 0.0
    sw[1] = sig1
    sw[0] = rho1
    for k in range(K):
        top[1] = max(top[1], lam[k, 0], lam[k, 1])
        top[0] = max(top[0], lam[k, 2], lam[k, 3])
    tot = np.zeros(2)
    for c in range(2):
        tot[c] = rec[c] + sw[c] + m * top[c]

    t = 0.0
    si = 0
    events = 0
    while True:
        R = cnt[1] * tot[1] + cnt[0] * tot[0]
        t_next = t + exponential(state, R) if R > 0.0 else np.inf
        while si < S and sample_times[si] < t_next:
            _record(si, sample_times[si], K, n, inf, act, last, sig0, rho0, union, icount, window, state,
                    out_icount, out_acount, out_codes)
            si += 1
        if t_next > T:
            break
        t = t_next
        events += 1
        c = 1 if uniform(state) * R < cnt[1] * tot[1] else 0
        x = lst[c, randbelow(state, cnt[c])]
        u = uniform(state) * tot[c]
        if u < rec[c]:
            for k in range(K):
                if inf[k, x]:
                    inf[k, x] = 0
                    icount[k] -= 1
                    if icount[k] == 0:
                        ext[k] = t
            union[x] = 0
            _list_remove(x, c, lst, cnt, pos)
            last[x] = t
        elif u < rec[c] + sw[c]:
            _list_remove(x, c, lst, cnt, pos)
            act[x] = 1 - c
            if variant == CPB and c == 1:
                for k in range(K):
                    if inf[k, x]:
                        inf[k, x] = 0
                        icount[k] -= 1
                        if icount[k] == 0:
                            ext[k] = t
                union[x] = 0
                last[x] = t
            else:
                _list_add(x, 1 - c, lst, cnt, pos)
        else:
            y = nbr[x, randbelow(state, m)]
            if y < 0:
                continue
            ay = act[y] if union[y] > 0 else _lazy_activity(y, t, act, last, sig0, rho0, state)
            v = uniform(state) * top[c]
            idx = 2 * (1 - c) + (1 - ay)  # aa, ad, da, dd
            was_union = union[y]
            for k in range(K):
                if inf[k, x] and not inf[k, y]:
                    r = lam[k, idx]
                    if variant == CPB and ay == 0:
                        r = 0.0
                    if v < r:
                        inf[k, y] = 1
                        icount[k] += 1
                        union[y] += 1
            if was_union == 0 and union[y] > 0:
                if variant == CPID:
                    act[y] = 1
                _list_add(y, act[y], lst, cnt, pos)
    return events


# ---------------------------------------------------------------------------
# python front end


def _validate(rates: RateSet, lattice: LatticeSpec, X0: np.ndarray, A0: np.ndarray | None):
    if rates.variant == "cpb" and A0 is not None and np.any(X0 & ~A0):
        raise ValueError("CPB initial configuration has infected dormant sites")


def _rate_args(rates: RateSet):
    dd = 0.0 if rates.delta_d is INSTANT else float(rates.delta_d)
    return (float(rates.delta_a), dd, _VARIANT_CODES[rates.variant],
            float(rates.sigma0), float(rates.sigma1), float(rates.rho0), float(rates.rho1))


def _lam_matrix(rate_list) -> np.ndarray:
    return np.array([r.lambdas for r in rate_list], dtype=np.float64).reshape(-1, 4)


def _check_shared(rate_list):
    base = rate_list[0]
    for r in rate_list[1:]:
        if (r.delta_a, r.delta_d, r.sigma0, r.sigma1, r.rho0, r.rho1, r.variant) != (
                base.delta_a, base.delta_d, base.sigma0, base.sigma1, base.rho0, base.rho1, base.variant):
            raise RateError("lockstep processes must share recovery and switching rates and the variant")
    if len(rate_list) > 1:
        base.require_symmetric()
        if base.variant == "cpid":
            raise RateError("lockstep runs are not available for the cpid variant")


def simulate_direct(lattice: LatticeSpec, rates: RateSet, X0, A0, T: float, seed: int,
                    sample_times=None, replica: int = 0, snapshots: bool = True) -> Trajectory:
    """One exact sample path of the switching contact process."""
    if not T > 0:
        raise ValueError("horizon T must be positive")
    st = np.asarray([] if sample_times is None else sample_times, dtype=np.float64).reshape(-1)
    if st.size and (np.any(np.diff(st) < 0) or st[0] < 0 or st[-1] > T):
        raise ValueError("sample times must be sorted and within [0, T]")
    x0 = site_mask(lattice, X0)
    a0 = site_mask(lattice, A0)
    _validate(rates, lattice, x0, a0)
    n = lattice.n_sites
    window = np.arange(n, dtype=np.int64) if snapshots else np.zeros(0, np.int64)
    S = st.size
    out_icount = np.zeros((S, 1), np.int64)
    out_acount = np.zeros(S, np.int64)
    out_codes = np.zeros((S, 1, window.size), np.uint8)
    ext = np.zeros(1)
    inf = x0.astype(np.uint8)[None].copy()
    act = a0.astype(np.uint8).copy()
    state = _rng.kernel_state(seed, replica, _rng.STREAM_DIRECT)
    _run(lattice.neighbor_table(), _lam_matrix([rates]), *_rate_args(rates), inf, act, float(T), st,
         window, state, out_icount, out_acount, out_codes, ext)
    infected = active = None
    if snapshots:
        codes = out_codes[:, 0, :]
        infected = codes >= 2
        active = codes % 2 == 0
    return Trajectory(lattice, float(T), st, out_icount[:, 0], out_acount, float(ext[0]), infected, active)


@njit(cache=True, nogil=True)
def _batch(nbr, lam, delta_a, delta_d, variant, sig0, sig1, rho0, rho1, inf0, act0, p_active,
           T, sample_times, window, states, out_icount, out_acount, out_codes, out_ext):
    R = states.shape[0]
    K, n = inf0.shape
    total = 0
    for r in range(R):
        st = states[r].copy()
        inf = inf0.copy()
        act = np.empty(n, dtype=np.uint8)
        if p_active < 0.0:
            for x in range(n):
                act[x] = act0[x]
        else:
            for x in range(n):
                act[x] = 1 if uniform(st) < p_active else 0
            if variant == CPB:
                for k in range(K):
                    for x in range(n):
                        if inf[k, x] and not act[x]:
                            inf[k, x] = 0
        total += _run(nbr, lam, delta_a, delta_d, variant, sig0, sig1, rho0, rho1, inf, act, T, sample_times,
                      window, st, out_icount[r], out_acount[r], out_codes[r], out_ext[r])
    return total


@dataclass
class Ensemble:
    """Summary of many independent replicas (optionally K lockstep processes each)."""

    lattice: LatticeSpec
    horizon: float
    times: np.ndarray
    infected_count: np.ndarray  # (R, S, K)
    active_count: np.ndarray  # (R, S)
    extinction: np.ndarray  # (R, K), inf when censored
    window: np.ndarray
    codes: np.ndarray  # (R, S, K, w) site-state codes 2*infected + dormant
    events: int

    def survived(self, T: float) -> np.ndarray:
        """(R, K) indicator of X_T nonempty."""
        return self.extinction > T


def run_ensemble(lattice: LatticeSpec, rates, X0, A0, T: float, replicas: int, seed: int,
                 sample_times=None, window=None, initial_activity: str = "fixed", n_jobs: int = 1,
                 replica_offset: int = 0) -> Ensemble:
    """Independent replicas of :func:`simulate_direct`, summarised.

    ``rates`` may be a list of rate sets that differ only in infection rates;
    they are then simulated in lockstep on shared randomness.
    ``initial_activity`` is 'fixed' (use A0) or 'stationary' (product Bernoulli(alpha)).
    Results depend only on (seed, replica index), not on ``n_jobs``.
    """
    rate_list = list(rates) if isinstance(rates, (list, tuple)) else [rates]
    _check_shared(rate_list)
    base = rate_list[0]
    if not T > 0:
        raise ValueError("horizon T must be positive")
    st = np.asarray([] if sample_times is None else sample_times, dtype=np.float64).reshape(-1)
    if st.size and (np.any(np.diff(st) < 0) or st[0] < 0 or st[-1] > T):
        raise ValueError("sample times must be sorted and within [0, T]")
    n = lattice.n_sites
    K = len(rate_list)
    x0 = site_mask(lattice, X0)
    if initial_activity == "fixed":
        a0 = site_mask(lattice, A0)
        _validate(base, lattice, x0, a0)
        p = -1.0
    elif initial_activity == "stationary":
        a0 = np.zeros(n, bool)
        p = alpha(base)
    else:
        raise ValueError("initial_activity must be 'fixed' or 'stationary'")
    win = np.zeros(0, np.int64) if window is None else np.asarray(window, dtype=np.int64)
    S = st.size
    out_icount = np.zeros((replicas, S, K), np.int64)
    out_acount = np.zeros((replicas, S), np.int64)
    out_codes = np.zeros((replicas, S, K, win.size), np.uint8)
    out_ext = np.zeros((replicas, K))
    states = _rng.kernel_states(seed, range(replica_offset, replica_offset + replicas), _rng.STREAM_DIRECT)
    inf0 = np.repeat(x0.astype(np.uint8)[None], K, axis=0)
    args = (lattice.neighbor_table(), _lam_matrix(rate_list), *_rate_args(base), inf0, a0.astype(np.uint8), p,
            float(T), st, win)

    def work(lo, hi):
        return _batch(*args, states[lo:hi], out_icount[lo:hi], out_acount[lo:hi], out_codes[lo:hi], out_ext[lo:hi])

    if n_jobs <= 1 or replicas < 2:
        events = work(0, replicas)
    else:
        bounds = np.linspace(0, replicas, n_jobs + 1).astype(int)
        with ThreadPoolExecutor(n_jobs) as pool:
            events = sum(pool.map(work, bounds[:-1], bounds[1:]))
    return Ensemble(lattice, float(T), st, out_icount, out_acount, out_ext, win, out_codes, int(events))
