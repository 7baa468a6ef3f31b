"""Poisson event substrate and the infection sweep over it.

A timeline holds the realised events of every stream on ``(0, T]``. Site
streams carry recovery marks and type switches, edge streams carry typed
infection arrows. Each stream has an integer id; events are stored in one
array sorted by ``(time, stream id)``, which is the tie-break order used by
every sweep.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from . import rng as _rng
from .core import Configuration, LatticeSpec, RateError, RateSet, site_mask

# event kinds; site kinds come first, then edge kinds
REC_A, REC_D, TO_D, TO_A, REC_ANY = 0, 1, 2, 3, 4
ARROW_AA, ARROW_AD, ARROW_DA, ARROW_DD, ARROW_ANY = 5, 6, 7, 8, 9
N_SITE_KINDS = 5
N_EDGE_KINDS = 5
KIND_NAMES = ("delta_a", "delta_d", "a->d", "d->a", "delta_any", "aa", "ad", "da", "dd", "any")
ARROW_TYPES = ("aa", "ad", "da", "dd")

# per-process semantics inside a sweep
PLAIN, CPB, CPID = 0, 1, 2
_VARIANT_CODES = {"plain": PLAIN, "cpb": CPB, "cpid": CPID}


def site_stream(x: int, kind: int) -> int:
    return N_SITE_KINDS * x + kind


def edge_stream(lattice: LatticeSpec, edge: int, kind: int) -> int:
    return N_SITE_KINDS * lattice.n_sites + N_EDGE_KINDS * edge + (kind - N_SITE_KINDS)


def n_streams(lattice: LatticeSpec) -> int:
    return N_SITE_KINDS * lattice.n_sites + N_EDGE_KINDS * len(lattice.edges())


@dataclass(frozen=True, eq=False)
class EventTimeline:
    """Realised Poisson events on ``(0, horizon]``, immutable once built."""

    lattice: LatticeSpec
    horizon: float
    times: np.ndarray
    streams: np.ndarray
    seed: int | None = None
    label: str = "timeline"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        times = np.asarray(self.times, dtype=np.float64)
        streams = np.asarray(self.streams, dtype=np.int64)
        if times.shape != streams.shape:
            raise ValueError("times and streams must have equal length")
        order = np.lexsort((streams, times))
        times, streams = times[order], streams[order]
        times.setflags(write=False)
        streams.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "streams", streams)

    def __len__(self):
        return int(self.times.size)

    @cached_property
    def _decoded(self):
        n = self.lattice.n_sites
        edges = self.lattice.edges()
        s = self.streams
        site_part = s < N_SITE_KINDS * n
        kind = np.where(site_part, s % N_SITE_KINDS, N_SITE_KINDS + (s - N_SITE_KINDS * n) % N_EDGE_KINDS)
        edge = np.where(site_part, -1, (s - N_SITE_KINDS * n) // N_EDGE_KINDS)
        a = np.where(site_part, s // N_SITE_KINDS, edges[np.maximum(edge, 0), 0] if len(edges) else -1)
        b = np.where(site_part, -1, edges[np.maximum(edge, 0), 1] if len(edges) else -1)
        out = (kind.astype(np.int64), a.astype(np.int64), b.astype(np.int64))
        for arr in out:
            arr.setflags(write=False)
        return out

    @property
    def kinds(self) -> np.ndarray:
        return self._decoded[0]

    @property
    def sources(self) -> np.ndarray:
        """Site of a site event, source of an arrow."""
        return self._decoded[1]

    @property
    def targets(self) -> np.ndarray:
        """Target of an arrow, -1 for site events."""
        return self._decoded[2]

    def stream_times(self, stream: int) -> np.ndarray:
        return self.times[self.streams == stream]

    def stream_ids(self) -> set[int]:
        return set(np.unique(self.streams).tolist())

    def restricted(self, t: float) -> "EventTimeline":
        keep = self.times <= t
        return EventTimeline(self.lattice, t, self.times[keep], self.streams[keep], self.seed, self.label)

    def export_text(self) -> str:
        """One event per line: ``time site_or_edge kind`` with round-trip exact times."""
        lines = []
        for t, k, a, b in zip(self.times.tolist(), self.kinds.tolist(), self.sources.tolist(), self.targets.tolist()):
            where = str(a) if b < 0 else f"{a}->{b}"
            lines.append(f"{t!r} {where} {KIND_NAMES[k]}")
        return "\n".join(lines) + ("\n" if lines else "")

    def event_multiset(self) -> list[tuple[float, int, int, int]]:
        return sorted(zip(self.times.tolist(), self.kinds.tolist(), self.sources.tolist(), self.targets.tolist()))


def stream_rate_vector(lattice: LatticeSpec, site_rates, edge_rates) -> np.ndarray:
    """Per-stream rates from per-kind rates.

    ``site_rates`` has 5 entries (or shape (n, 5)) for kinds REC_A..REC_ANY;
    ``edge_rates`` has 5 entries (or shape (E, 5)) for ARROW_AA..ARROW_ANY.
    """
    n = lattice.n_sites
    E = len(lattice.edges())
    sr = np.broadcast_to(np.asarray(site_rates, dtype=np.float64), (n, N_SITE_KINDS))
    er = np.broadcast_to(np.asarray(edge_rates, dtype=np.float64), (E, N_EDGE_KINDS))
    r = np.concatenate([sr.ravel(), er.ravel()])
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise RateError("stream rates must be finite and non-negative")
    return r


def sample_streams(lattice: LatticeSpec, rate_vector: np.ndarray, T: float, gen: np.random.Generator,
                   seed: int | None = None, label: str = "timeline") -> EventTimeline:
    if not T > 0:
        raise ValueError("horizon T must be positive")
    counts = gen.poisson(rate_vector * T)
    total = int(counts.sum())
    u = gen.random(total)
    times = T * (1.0 - u)  # (0, T]
    streams = np.repeat(np.arange(rate_vector.size, dtype=np.int64), counts)
    return EventTimeline(lattice, float(T), times, streams, seed, label)


def timeline_rates(lattice: LatticeSpec, rates: RateSet) -> np.ndarray:
    rates.require_finite()
    rates.require_symmetric()
    if rates.variant != "plain":
        raise RateError("the graphical backend covers the plain variant; use dynamics for cpb/cpid")
    site = [rates.delta_a, rates.delta_d, rates.sigma0, rates.rho0, 0.0]
    edge = [rates.lam_aa, rates.lam_ad, rates.lam_da, rates.lam_dd, 0.0]
    return stream_rate_vector(lattice, site, edge)


def sample_timeline(lattice: LatticeSpec, rates: RateSet, T: float, seed: int, replica: int = 0) -> EventTimeline:
    """Independent Poisson streams at the model rates; a pure function of its arguments."""
    if not T > 0:
        raise ValueError("horizon T must be positive")
    r = timeline_rates(lattice, rates)
    gen = _rng.generator(seed, replica, _rng.STREAM_TIMELINE)
    return sample_streams(lattice, r, T, gen, seed)


def activity_at(timeline: EventTimeline, A0, x: int, t: float) -> str:
    """'a' or 'd': the type of the last switch of ``x`` in (0, t], else the initial type."""
    if t < 0 or t > timeline.horizon:
        raise ValueError("t outside the timeline window")
    mask = (timeline.sources == x) & ((timeline.kinds == TO_D) | (timeline.kinds == TO_A)) & (timeline.times <= t)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return "a" if site_mask(timeline.lattice, A0)[x] else "d"
    return "a" if timeline.kinds[idx[-1]] == TO_A else "d"


# ---------------------------------------------------------------------------
# sweep kernel


@njit(cache=True)
def _apply(k, variant, kind, a, b, inf, act):
    """Apply one event to process k.

    Returns 0 if nothing changed, 1 if a site got infected, -1 if a site
    healed, 2 if only a type changed.
    """
    if kind == REC_A:
        if inf[k, a] and act[k, a]:
            inf[k, a] = 0
            return -1
        return 0
    if kind == REC_D:
        if inf[k, a] and not act[k, a]:
            inf[k, a] = 0
            return -1
        return 0
    if kind == REC_ANY:
        if inf[k, a]:
            inf[k, a] = 0
            return -1
        return 0
    if kind == TO_D:
        if act[k, a]:
            act[k, a] = 0
            if variant == CPB and inf[k, a]:
                inf[k, a] = 0
                return -1
            return 2
        return 0
    if kind == TO_A:
        if not act[k, a]:
            act[k, a] = 1
            return 2
        return 0
    # arrows
    if not inf[k, a] or inf[k, b]:
        return 0
    if kind == ARROW_ANY:
        if variant == CPB and not (act[k, a] and act[k, b]):
            return 0
        if variant == CPID and not act[k, a]:
            return 0
        inf[k, b] = 1
        if variant == CPID:
            act[k, b] = 1
        return 1
    src_active = kind == ARROW_AA or kind == ARROW_AD
    dst_active = kind == ARROW_AA or kind == ARROW_DA
    if (act[k, a] == 1) != src_active or (act[k, b] == 1) != dst_active:
        return 0
    if variant == PLAIN:
        inf[k, b] = 1
        return 1
    if variant == CPB:
        if kind == ARROW_AA:
            inf[k, b] = 1
            return 1
        return 0
    # CPID: active infections only; a dormant target is infected and made active
    if kind == ARROW_AA:
        inf[k, b] = 1
        return 1
    if kind == ARROW_AD:
        inf[k, b] = 1
        act[k, b] = 1
        return 1
    return 0


@njit(cache=True)
def _violates(x, inf, act, inf_check, act_check):
    if x < 0:
        return False
    if inf_check == 1 and inf[0, x] and not inf[1, x]:
        return True
    if act_check == 1 and act[0, x] and not act[1, x]:
        return True
    if act_check == -1 and act[1, x] and not act[0, x]:
        return True
    return False


@njit(cache=True)
def _sweep(times, kind, src, dst, mask, variants, inf, act, sample_times, inf_check, act_check,
           out_inf, out_act, ext):
    """Run K processes over one merged event list.

    ``mask[e, k]`` says whether event e belongs to process k. Containment
    (process 0 inside process 1) is checked after every event that changes a
    state; an event only touches its own site(s), so checking those suffices.
    Returns (violations, first violation time, number of checks).
    """
    K = inf.shape[0]
    n = inf.shape[1]
    S = sample_times.size
    viol = 0
    checks = 0
    first = -1.0
    icount = np.zeros(K, dtype=np.int64)
    for k in range(K):
        for x in range(n):
            icount[k] += inf[k, x]
        ext[k] = 0.0 if icount[k] == 0 else np.inf
    if inf_check != 0 or act_check != 0:
        checks += 1
        for x in range(n):
            if _violates(x, inf, act, inf_check, act_check):
                viol += 1
                first = 0.0
                break
    si = 0
    E = times.size
    for e in range(E + 1):
        t = times[e] if e < E else np.inf
        while si < S and sample_times[si] < t:
            for k in range(K):
                for x in range(n):
                    out_inf[si, k, x] = inf[k, x]
                    out_act[si, k, x] = act[k, x]
            si += 1
        if e == E:
            break
        changed = False
        for k in range(K):
            if mask[e, k]:
                r = _apply(k, variants[k], kind[e], src[e], dst[e], inf, act)
                if r != 0:
                    changed = True
                    if r == 1:
                        icount[k] += 1
                    elif r == -1:
                        icount[k] -= 1
                        if icount[k] == 0:
                            ext[k] = t
        if changed and (inf_check != 0 or act_check != 0):
            checks += 1
            if _violates(src[e], inf, act, inf_check, act_check) or _violates(dst[e], inf, act, inf_check, act_check):
                viol += 1
                if first < 0:
                    first = t
    return viol, first, checks


@dataclass
class SweepResult:
    """Snapshots of K processes driven by one merged event list."""

    sample_times: np.ndarray
    infected: np.ndarray  # (S, K, n) bool
    active: np.ndarray  # (S, K, n) bool
    extinction: np.ndarray  # (K,), inf if infection never died out
    violations: int = 0
    first_violation: float | None = None
    checks: int = 0
    n_events: int = 0


def merged_events(timelines: Sequence[EventTimeline]):
    """Concatenate timelines; order by (time, stream id, family index)."""
    if not timelines:
        raise ValueError("need at least one timeline")
    fam = np.concatenate([np.full(len(tl), i, dtype=np.int64) for i, tl in enumerate(timelines)])
    times = np.concatenate([tl.times for tl in timelines])
    streams = np.concatenate([tl.streams for tl in timelines])
    kind = np.concatenate([tl.kinds for tl in timelines])
    src = np.concatenate([tl.sources for tl in timelines])
    dst = np.concatenate([tl.targets for tl in timelines])
    order = np.lexsort((fam, streams, times))
    return times[order], kind[order], src[order], dst[order], fam[order]


def sweep(timelines: Sequence[EventTimeline], membership: np.ndarray, variants: Sequence[str],
          X0: np.ndarray, A0: np.ndarray, sample_times, inf_check: bool = False,
          act_check: int = 0) -> SweepResult:
    """Evolve K processes on a family of timelines.

    ``membership[f, k]`` is True when timeline ``f`` drives process ``k``.
    ``X0`` and ``A0`` have shape (K, n). With ``inf_check`` the infected set
    of process 0 must stay inside that of process 1; ``act_check`` = 1 (or
    -1) asks the same of the active sets (or the reverse inclusion).
    """
    lattice = timelines[0].lattice
    membership = np.asarray(membership, dtype=bool)
    K = membership.shape[1]
    times, kind, src, dst, fam = merged_events(timelines)
    mask = membership[fam].astype(np.uint8)
    st = np.asarray(sample_times, dtype=np.float64).reshape(-1)
    if st.size and (np.any(np.diff(st) < 0) or st[0] < 0 or st[-1] > min(tl.horizon for tl in timelines)):
        raise ValueError("sample times must be sorted and inside [0, T]")
    inf = np.ascontiguousarray(X0, dtype=np.uint8).reshape(K, lattice.n_sites).copy()
    act = np.ascontiguousarray(A0, dtype=np.uint8).reshape(K, lattice.n_sites).copy()
    codes = np.array([_VARIANT_CODES[v] for v in variants], dtype=np.int64)
    out_inf = np.zeros((st.size, K, lattice.n_sites), dtype=np.uint8)
    out_act = np.zeros_like(out_inf)
    ext = np.zeros(K)
    viol, first, checks = _sweep(times, kind, src, dst, mask, codes, inf, act, st,
                                 1 if inf_check else 0, int(act_check), out_inf, out_act, ext)
    return SweepResult(st, out_inf.astype(bool), out_act.astype(bool), ext, int(viol),
                       None if first < 0 else float(first), int(checks), int(times.size))


def evolve_arrays(timeline: EventTimeline, X0, A0, sample_times, variant: str = "plain"):
    """(S, n) boolean arrays of infected and active sites at each sample time."""
    lat = timeline.lattice
    res = sweep([timeline], np.ones((1, 1), bool), [variant], site_mask(lat, X0)[None], site_mask(lat, A0)[None],
                sample_times)
    return res.infected[:, 0, :], res.active[:, 0, :]


def evolve(timeline: EventTimeline, X0, A0, sample_times) -> list[Configuration]:
    """Configurations (post-event convention) at the requested sorted times."""
    inf, act = evolve_arrays(timeline, X0, A0, sample_times)
    return [Configuration.from_arrays(timeline.lattice, i, a) for i, a in zip(inf, act)]


# ---------------------------------------------------------------------------
# infection paths, searched directly from the path definition


@dataclass
class _SiteIndex:
    switch_t: list = field(default_factory=list)
    switch_to_active: list = field(default_factory=list)
    rec_t: list = field(default_factory=list)
    rec_kind: list = field(default_factory=list)
    out_t: list = field(default_factory=list)
    out_dst: list = field(default_factory=list)
    out_kind: list = field(default_factory=list)
    out_id: list = field(default_factory=list)


def _index_timeline(timeline: EventTimeline) -> list[_SiteIndex]:
    idx = [_SiteIndex() for _ in range(timeline.lattice.n_sites)]
    for e, (t, k, a, b) in enumerate(zip(timeline.times.tolist(), timeline.kinds.tolist(),
                                         timeline.sources.tolist(), timeline.targets.tolist())):
        s = idx[a]
        if k in (TO_D, TO_A):
            s.switch_t.append(t)
            s.switch_to_active.append(k == TO_A)
        elif k in (REC_A, REC_D, REC_ANY):
            s.rec_t.append(t)
            s.rec_kind.append(k)
        else:
            s.out_t.append(t)
            s.out_dst.append(b)
            s.out_kind.append(k)
            s.out_id.append(e)
    return idx


@dataclass(frozen=True)
class PathQuery:
    source: int
    target: int
    t: float


def infection_path_exists(timeline: EventTimeline, A0, query: PathQuery) -> bool:
    """Whether an infection path leads from (source, 0) to (target, t).

    Walks the space-time graph: from an entry point the infection persists on
    a site until the first recovery mark that matches the site's type, and it
    can jump along any arrow whose type matches both endpoints' types.
    """
    source, target, t = query.source, query.target, query.t
    if t < 0 or t > timeline.horizon:
        raise ValueError("query time outside the timeline window")
    if t == 0:
        return source == target
    active0 = site_mask(timeline.lattice, A0)
    index = _index_timeline(timeline)

    def active(x, s):
        si = index[x]
        j = bisect.bisect_right(si.switch_t, s)
        return bool(active0[x]) if j == 0 else si.switch_to_active[j - 1]

    def death(x, s):
        si = index[x]
        j = bisect.bisect_right(si.rec_t, s)
        for tt, k in zip(si.rec_t[j:], si.rec_kind[j:]):
            if k == REC_ANY or (k == REC_A) == active(x, tt):
                return tt
        return np.inf

    seen = set()
    stack = [(source, 0.0)]
    while stack:
        x, s = stack.pop()
        end = death(x, s)
        if x == target and t < end:
            return True
        si = index[x]
        j = bisect.bisect_right(si.out_t, s)
        limit = min(end, t)
        for pos in range(j, len(si.out_t)):
            tt = si.out_t[pos]
            if tt >= limit:
                break
            eid = si.out_id[pos]
            if eid in seen:
                continue
            k = si.out_kind[pos]
            y = si.out_dst[pos]
            if k != ARROW_ANY:
                want_src = k in (ARROW_AA, ARROW_AD)
                want_dst = k in (ARROW_AA, ARROW_DA)
                if active(x, tt) != want_src or active(y, tt) != want_dst:
                    continue
            seen.add(eid)
            stack.append((y, tt))
    return False
