import math
import types

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import line_network
from wdnopt import objectives as obj
from wdnopt.hydraulics import solve_eps
from wdnopt.network import build_scenario


def two_pipes():
    """Source -> J1 -> J2 with equal lengths; areas 1 m^2 so flows equal velocities."""
    m = line_network(2, diameter=math.sqrt(4 / math.pi))
    return m


def state(q=None, h=None):
    return types.SimpleNamespace(q=None if q is None else np.atleast_2d(q), h=None if h is None else np.atleast_2d(h))


def test_indicator_half():
    m = two_pipes()
    assert obj.scc(m, state(q=[0.3, 0.1])) == pytest.approx(0.5)


def test_sigmoid_midpoint_and_shoulder():
    m = two_pipes()
    # the negative half contributes expit(-rho (u + u_min)) ~ 0
    g = obj.scc_per_step(m, state(q=[0.2, 0.2]), smooth=True, rho=50.0)[0]
    assert g == pytest.approx(0.5 + 1 / (1 + math.exp(20)), abs=1e-12)
    g = obj.scc_per_step(m, state(q=[0.3, 0.3]), smooth=True, rho=50.0)[0]
    assert g == pytest.approx(1 / (1 + math.exp(-5)) + 1 / (1 + math.exp(25)), abs=1e-12)
    assert 1 / (1 + math.exp(-5)) == pytest.approx(0.9933, abs=1e-4)


def test_azp_examples():
    m = line_network(1, elevation=5.0)
    assert obj.azp(m, state(h=[[25.0], [25.0]])) == pytest.approx(20.0)
    m3 = line_network(3, elevation=5.0)
    assert obj.azp(m3, state(h=np.full((2, 3), 5.0))) == pytest.approx(0.0)


def test_pressure_variation_examples():
    assert obj.pressure_variation(state(h=[[10.0], [12.0]])) == pytest.approx(8.0)
    assert obj.pressure_variation(state(h=np.full((4, 3), 7.0))) == 0.0
    assert obj.pressure_variation(state(h=[[10.0, 3.0]])) == 0.0


def test_pressure_ranges_and_cdf():
    m = line_network(1, elevation=0.0)
    ranges, cdf = obj.nodal_pressure_ranges(m, state(h=[[20.0], [35.0]]))
    assert ranges.tolist() == [15.0]
    assert cdf.tolist() == [[15.0, 1.0]]
    m3 = line_network(3, elevation=0.0)
    ranges, cdf = obj.nodal_pressure_ranges(m3, state(h=np.full((3, 3), 30.0)))
    assert np.all(ranges == 0) and cdf[:, 1].tolist() == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_evaluate_ranges(toys):
    for m, sc in toys.values():
        v = obj.evaluate(m, solve_eps(m, sc))
        assert 0 <= v.scc_indicator <= 1 and 0 <= v.scc_sigmoid <= 1
        assert v.azp >= 0 and v.pv >= 0
        assert len(v.azp_per_step) == sc.n_t


def test_degenerate_sigmoid_flag():
    m = line_network(2)
    assert not obj.degenerate_sigmoid(m, 50.0)
    assert obj.degenerate_sigmoid(m, 10.0)
    assert "sigmoid-overlap" in obj.evaluate(m, solve_eps(m, build_scenario(m, n_steps=1)), rho=10.0).flags


velocities = hnp.arrays(float, st.integers(1, 12), elements=st.floats(-2.0, 2.0))


@given(velocities)
def test_sigmoid_agrees_away_from_threshold(u):
    u_min, rho = 0.2, 50.0
    keep = np.abs(np.abs(u) - u_min) >= 0.1
    u = u[keep]
    if not len(u):
        return
    area = np.ones_like(u)
    m = types.SimpleNamespace(area=area, u_min=np.full_like(u, u_min), scc_weight=np.eye(len(u)))
    smooth = obj.scc_per_step(m, state(q=u), smooth=True, rho=rho)[0]
    ind = obj.scc_per_step(m, state(q=u))[0]
    # one half is off by at most expit(-5); the mirrored half adds at most expit(-15)
    bound = 1 / (1 + math.exp(5)) + 1 / (1 + math.exp(15))
    assert np.all(np.abs(smooth - ind) <= bound + 1e-15)
    assert bound < 0.0067


@given(velocities, st.floats(0.0, 1.0))
def test_scc_monotone_in_speed(u, extra):
    n = len(u)
    m = types.SimpleNamespace(area=np.ones(n), u_min=np.full(n, 0.2), scc_weight=np.full(n, 1 / n))
    faster = u + np.sign(u) * extra
    for smooth in (False, True):
        assert obj.scc(m, state(q=faster), smooth) >= obj.scc(m, state(q=u), smooth) - 1e-12


@given(hnp.arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=st.integers(-200, 200).map(lambda k: 0.25 * k)))
def test_pv_nonnegative_zero_iff_constant(h):
    pv = obj.pressure_variation(state(h=h))
    assert pv >= 0
    assert (pv == 0) == bool(np.all(h == h[0]))
