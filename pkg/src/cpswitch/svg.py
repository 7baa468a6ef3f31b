"""Static space-time diagrams of one-dimensional trajectories.

One vertical line per site, time running upwards. Each site's line is cut
into segments of constant state, drawn as

    (0,a) gray solid    (0,d) gray dotted
    (1,a) black solid   (1,d) black dashed

Output bytes depend only on the input, so diagrams can be diffed.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .dynamics import Trajectory

# code = 2 * infected + dormant
STROKES = {
    0: ('#999999', None),
    1: ('#999999', '1,3'),
    2: ('#000000', None),
    3: ('#000000', '6,4'),
}
MARGIN = 40.0


def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _header(width: float, height: float, title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
        f'viewBox="0 0 {_num(width)} {_num(height)}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="#ffffff"/>',
    ]


def _axes(width: float, height: float, horizon: float, n_sites: int, xlabel: str) -> list[str]:
    x0, y0 = MARGIN, height - MARGIN
    return [
        f'<g stroke="#000000" stroke-width="1" fill="none">',
        f'<line x1="{_num(x0)}" y1="{_num(y0)}" x2="{_num(width - MARGIN / 2)}" y2="{_num(y0)}"/>',
        f'<line x1="{_num(x0)}" y1="{_num(y0)}" x2="{_num(x0)}" y2="{_num(MARGIN / 2)}"/>',
        '</g>',
        f'<g font-family="sans-serif" font-size="10" fill="#000000">',
        f'<text x="{_num(x0 - 4)}" y="{_num(y0 + 4)}" text-anchor="end">0</text>',
        f'<text x="{_num(x0 - 4)}" y="{_num(MARGIN / 2 + 4)}" text-anchor="end">{_num(horizon)}</text>',
        f'<text x="{_num(width / 2)}" y="{_num(height - 8)}" text-anchor="middle">{escape(xlabel)} ({n_sites})</text>',
        f'<text x="12" y="{_num(height / 2)}" text-anchor="middle" transform="rotate(-90 12 {_num(height / 2)})">time</text>',
        '</g>',
    ]


def render_spacetime_svg(trajectory: Trajectory, style: str = "lines", site_spacing: float = 8.0,
                         height: float = 400.0, title: str = "space-time diagram") -> str:
    """SVG document for a trajectory recorded with full snapshots.

    The state seen at sample time t_i is drawn on [t_i, t_{i+1}); the last one
    extends to the horizon. ``style='heat'`` draws a strip of the infected
    fraction over time instead, which also works for d >= 2.
    """
    if style not in ("lines", "heat"):
        raise ValueError("style must be 'lines' or 'heat'")
    if not trajectory.has_snapshots:
        raise ValueError("rendering needs a trajectory with full snapshots")
    lat = trajectory.lattice
    if style == "lines" and lat.dimension != 1:
        raise ValueError("space-time lines need a one-dimensional lattice; use style='heat'")
    n = lat.n_sites
    times = np.asarray(trajectory.times, dtype=np.float64)
    T = float(trajectory.horizon)
    width = 2 * MARGIN + (n * site_spacing if style == "lines" else 60.0)
    plot_h = height - 1.5 * MARGIN

    def y_of(t):
        return height - MARGIN - plot_h * (t / T if T > 0 else 0.0)

    out = _header(width, height, title)
    out += _axes(width, height, T, n, "sites" if style == "lines" else "infected fraction")
    if times.size == 0:
        out.append("</svg>")
        return "\n".join(out) + "\n"
    ends = np.append(times[1:], T)
    if style == "heat":
        frac = trajectory.infected.mean(axis=1)
        out.append('<g stroke="none">')
        for t0, t1, f in zip(times.tolist(), ends.tolist(), frac.tolist()):
            level = int(round(255 * (1.0 - f)))
            colour = f"#{level:02x}{level:02x}{level:02x}"
            out.append(f'<rect x="{_num(MARGIN + 10)}" y="{_num(y_of(t1))}" width="40" '
                       f'height="{_num(y_of(t0) - y_of(t1))}" fill="{colour}"/>')
        out.append("</g>")
        out.append("</svg>")
        return "\n".join(out) + "\n"
    codes = 2 * trajectory.infected.astype(np.int64) + (~trajectory.active).astype(np.int64)
    out.append('<g fill="none" stroke-width="1.5">')
    for x in range(n):
        xpos = MARGIN + (x + 0.5) * site_spacing
        i = 0
        while i < times.size:
            j = i
            while j + 1 < times.size and codes[j + 1, x] == codes[i, x]:
                j += 1
            colour, dash = STROKES[int(codes[i, x])]
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{_num(xpos)}" y1="{_num(y_of(times[i]))}" x2="{_num(xpos)}" '
                       f'y2="{_num(y_of(ends[j]))}" stroke="{colour}"{dash_attr}/>')
            i = j + 1
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
