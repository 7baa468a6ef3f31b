"""Hand-built event timelines for tests."""

import numpy as np

from cpswitch.core import LatticeSpec
from cpswitch.graphical import KIND_NAMES, N_SITE_KINDS, EventTimeline, edge_stream, site_stream


def edge_index(lattice: LatticeSpec, a: int, b: int) -> int:
    edges = lattice.edges()
    hit = np.flatnonzero((edges[:, 0] == a) & (edges[:, 1] == b))
    if hit.size == 0:
        raise ValueError(f"no edge {a}->{b}")
    return int(hit[0])


def timeline(lattice: LatticeSpec, T: float, events) -> EventTimeline:
    """``events`` holds (time, kind name, site) or (time, kind name, (a, b)) tuples."""
    times, streams = [], []
    for t, name, where in events:
        k = KIND_NAMES.index(name)
        if k < N_SITE_KINDS:
            streams.append(site_stream(where, k))
        else:
            streams.append(edge_stream(lattice, edge_index(lattice, *where), k))
        times.append(t)
    return EventTimeline(lattice, T, np.array(times, float), np.array(streams, np.int64))
