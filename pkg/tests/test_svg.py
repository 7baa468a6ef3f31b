import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cpswitch.core import LatticeSpec, preset
from cpswitch.dynamics import Trajectory, simulate_direct
from cpswitch.svg import render_spacetime_svg

NS = "{http://www.w3.org/2000/svg}"


def traj(infected, active, T=2.0, lattice=None):
    inf = np.asarray(infected, bool)
    act = np.asarray(active, bool)
    lat = lattice or LatticeSpec.ring(inf.shape[1])
    times = np.linspace(0, T, inf.shape[0], endpoint=False)
    return Trajectory(lat, T, times, inf.sum(1), act.sum(1), np.inf, inf, act)


def segments(svg):
    root = ET.fromstring(svg)
    return [e.attrib for e in root.iter(NS + "line") if "stroke" in e.attrib]


def test_four_state_styles():
    t = traj([[0, 0, 1, 1]], [[1, 0, 1, 0]])
    segs = segments(render_spacetime_svg(t))
    assert [(s["stroke"], s.get("stroke-dasharray")) for s in segs] == [
        ("#999999", None), ("#999999", "1,3"), ("#000000", None), ("#000000", "6,4")]


def test_constant_runs_are_merged():
    t = traj([[1], [1], [0], [0]], [[1], [1], [1], [1]], T=4.0)
    segs = segments(render_spacetime_svg(t))
    assert len(segs) == 2
    assert segs[0]["y2"] == segs[1]["y1"]


def test_output_is_deterministic_and_valid_xml():
    lat = LatticeSpec.ring(12)
    tr = simulate_direct(lat, preset("cpree", 2.0, delta_a=1.0, delta_d=0.2), range(12), range(0, 12, 2), 3.0,
                         seed=5, sample_times=np.linspace(0, 3, 31))
    a, b = render_spacetime_svg(tr), render_spacetime_svg(tr)
    assert a == b
    assert ET.fromstring(a).tag == NS + "svg"


def test_empty_sample_list_gives_axes_only():
    lat = LatticeSpec.ring(3)
    tr = Trajectory(lat, 1.0, np.zeros(0), np.zeros(0), np.zeros(0), np.inf, np.zeros((0, 3), bool),
                    np.zeros((0, 3), bool))
    assert segments(render_spacetime_svg(tr)) == []


def test_two_dimensions_need_heat_style():
    lat = LatticeSpec((3, 3))
    t = traj(np.ones((2, 9)), np.ones((2, 9)), lattice=lat)
    with pytest.raises(ValueError):
        render_spacetime_svg(t)
    assert "<rect" in render_spacetime_svg(t, style="heat")


def test_rejects_trajectory_without_snapshots():
    tr = simulate_direct(LatticeSpec.ring(4), preset("cp", 1.0), [0], range(4), 1.0, seed=0, snapshots=False,
                         sample_times=[0.5])
    with pytest.raises(ValueError):
        render_spacetime_svg(tr)
