"""Time reversal of timelines and the duality relation.

Reversing a timeline on [0, t] maps an event at time s to t - s. An arrow
x -> y of type (τ1, τ2) becomes y -> x of type (τ2, τ1), so ad and da swap
while aa and dd stay. Recovery marks keep their kind. A switch at time s
becomes a switch at t - s towards the type the site had just before s, so
the reversed activity process started from A_t reads A_{t-u} at time u; for
a switch that changed the type this is the inverted direction, and a switch
that found the site already in its target type stays a no-op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LatticeSpec, RateSet, alpha, site_mask
from .graphical import (ARROW_AA, ARROW_AD, ARROW_ANY, ARROW_DA, ARROW_DD, N_EDGE_KINDS, N_SITE_KINDS,
                        TO_A, TO_D, EventTimeline, edge_stream, evolve_arrays, site_stream)
from .oracle import exact_marginal, generator_matrix, product_initial

_EDGE_SWAP = {ARROW_AA: ARROW_AA, ARROW_AD: ARROW_DA, ARROW_DA: ARROW_AD, ARROW_DD: ARROW_DD,
              ARROW_ANY: ARROW_ANY}


@dataclass(frozen=True)
class ReversedTimeline:
    """Reversed events on [0, t] with the activity the dual process starts from."""

    timeline: EventTimeline
    t: float
    initial_activity: np.ndarray  # A_t of the forward realisation
    forward_initial: np.ndarray  # A_0 of the forward realisation

    @property
    def lattice(self) -> LatticeSpec:
        return self.timeline.lattice


def _edge_index(lat: LatticeSpec) -> np.ndarray:
    """(n, |N|) edge index of (site, offset), -1 where the offset leaves the box."""
    table = lat.neighbor_table()
    ok = (table >= 0).ravel()
    idx = np.full(ok.size, -1, dtype=np.int64)
    idx[ok] = np.arange(int(ok.sum()))
    return idx.reshape(table.shape)


def _reversed_lattice(lat: LatticeSpec) -> tuple[LatticeSpec, np.ndarray]:
    """Lattice carrying the reversed arrows and, per offset j, the offset index of -z_j there."""
    neg = [tuple(-c for c in z) for z in lat.offsets]
    if set(neg) == set(lat.offsets):
        return lat, np.array([lat.offsets.index(z) for z in neg], dtype=np.int64)
    rev = lat.reversed()
    return rev, np.arange(len(lat.offsets), dtype=np.int64)


def reverse_timeline(timeline: EventTimeline, t: float, A0) -> ReversedTimeline:
    """Reverse the events in (0, t]; the dual's initial activity is recomputed as A_t.

    An event exactly at time t would land at reversed time 0 and is dropped
    (a probability-zero coincidence).
    """
    if not 0 < t <= timeline.horizon:
        raise ValueError("t must lie in (0, horizon]")
    lat = timeline.lattice
    a0 = site_mask(lat, A0)
    keep = timeline.times < t
    kinds = timeline.kinds[keep]
    src = timeline.sources[keep]
    times = t - timeline.times[keep]
    rlat, neg_j = _reversed_lattice(lat)
    fwd_edges = _edge_index(lat)
    rev_edges = _edge_index(rlat)
    edge_of = {}
    table = lat.neighbor_table()
    for x in range(lat.n_sites):
        for j in range(table.shape[1]):
            if fwd_edges[x, j] >= 0:
                edge_of[int(fwd_edges[x, j])] = (int(table[x, j]), int(neg_j[j]))
    n = lat.n_sites
    streams = np.empty(kinds.size, dtype=np.int64)
    fwd_streams = timeline.streams[keep]
    current = a0.copy()
    for i, (k, a) in enumerate(zip(kinds.tolist(), src.tolist())):
        if k in (TO_A, TO_D):
            streams[i] = site_stream(a, TO_A if current[a] else TO_D)
            current[a] = k == TO_A
        elif k < N_SITE_KINDS:
            streams[i] = site_stream(a, k)
        else:
            e = (int(fwd_streams[i]) - N_SITE_KINDS * n) // N_EDGE_KINDS
            y, jr = edge_of[e]
            streams[i] = edge_stream(rlat, int(rev_edges[y, jr]), _EDGE_SWAP[k])
    rtl = EventTimeline(rlat, float(t), times, streams, timeline.seed, timeline.label + ":reversed")
    return ReversedTimeline(rtl, float(t), current, a0.copy())


@dataclass(frozen=True)
class DualityCheck:
    holds: bool
    forward_hits: bool  # X_t ∩ J ≠ ∅
    dual_hits: bool  # I ∩ dual_t ≠ ∅
    middle: np.ndarray  # X_s ∩ dual_{t-s} ≠ ∅ per s

    def __bool__(self):
        return self.holds


def check_duality_relation(timeline: EventTimeline, I, A0, J, t: float, s_grid) -> DualityCheck:
    """Evaluate the three events of the duality relation on one timeline."""
    lat = timeline.lattice
    s = np.sort(np.asarray(s_grid, dtype=np.float64).reshape(-1))
    if s.size and (s[0] < 0 or s[-1] > t):
        raise ValueError("s_grid must lie in [0, t]")
    i0, j0 = site_mask(lat, I), site_mask(lat, J)
    rev = reverse_timeline(timeline, t, A0)
    fwd_times = np.concatenate([s, [t]])
    order = np.argsort(fwd_times, kind="stable")
    fx, _ = evolve_arrays(timeline, i0, A0, fwd_times[order])
    fwd = np.empty_like(fx)
    fwd[order] = fx
    dual_times = np.concatenate([t - s, [t]])
    order = np.argsort(dual_times, kind="stable")
    dx, _ = evolve_arrays(rev.timeline, j0, rev.initial_activity, dual_times[order])
    dual = np.empty_like(dx)
    dual[order] = dx
    forward_hits = bool(np.any(fwd[-1] & j0))
    dual_hits = bool(np.any(i0 & dual[-1]))
    middle = np.any(fwd[:-1] & dual[:-1], axis=1)
    holds = forward_hits == dual_hits and bool(np.all(middle == forward_hits))
    return DualityCheck(holds, forward_hits, dual_hits, middle)


def hitting_probability(lattice: LatticeSpec, rates: RateSet, I, J, t: float) -> float:
    """Exact P(X_t ∩ J ≠ ∅) from infections I and product-Bernoulli(alpha) types."""
    G = generator_matrix(lattice, rates)
    j0 = site_mask(lattice, J)
    p0 = product_initial(G, I, alpha(rates))
    return exact_marginal(G, p0, t, lambda inf, act: np.any(inf & j0[None, :], axis=1))


def dual_law_gap(lattice: LatticeSpec, rates: RateSet, I, J, t: float) -> float:
    """|P(X_t^I ∩ J ≠ ∅) - P(dual_t^J ∩ I ≠ ∅)|, the dual run with ad and da swapped
    on the reversed lattice; zero by duality."""
    fwd = hitting_probability(lattice, rates, I, J, t)
    rlat, _ = _reversed_lattice(lattice)
    back = hitting_probability(rlat, rates.swapped_mixed(), J, I, t)
    return abs(fwd - back)
