import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import dominated_mask
from wdnopt import kernels

flows = hnp.arrays(float, st.integers(1, 50), elements=st.floats(-1.0, 1.0))


def test_selected_backend_listed():
    assert kernels.BACKEND in kernels.backends()


@given(flows)
def test_hw_phi(q):
    r = np.linspace(10.0, 1e5, len(q))
    n = np.full(len(q), 1.852)
    outs = [b.hw_phi(q, r, n, 1e-6) for b in kernels.backends().values()]
    for phi, dphi in outs:
        assert phi == pytest.approx(r * np.abs(q) ** 0.852 * q, rel=1e-12, abs=1e-300)
        assert np.all(dphi >= r * 1e-6**0.852 * (1 - 1e-12))
    for phi, dphi in outs[1:]:
        assert phi == pytest.approx(outs[0][0], rel=1e-12, abs=1e-300)
        assert dphi == pytest.approx(outs[0][1], rel=1e-12, abs=1e-300)


@given(flows)
def test_qa_phi(q):
    a, b = np.full(len(q), 3.0), np.full(len(q), 0.5)
    for mod in kernels.backends().values():
        phi, dphi = mod.qa_phi(q, a, b)
        assert phi == pytest.approx(q * (3.0 * np.abs(q) + 0.5), rel=1e-12, abs=1e-300)
        assert dphi == pytest.approx(6.0 * np.abs(q) + 0.5, rel=1e-12)


@given(hnp.arrays(float, st.integers(1, 40), elements=st.floats(-3.0, 3.0)))
def test_sigmoid_pair_backends_agree(u):
    umin = np.full(len(u), 0.2)
    outs = [mod.sigmoid_pair(u, umin, 50.0) for mod in kernels.backends().values()]
    g0, dg0 = outs[0]
    eps = 1e-6
    gp, _ = kernels.sigmoid_pair(u + eps, umin, 50.0)
    gm, _ = kernels.sigmoid_pair(u - eps, umin, 50.0)
    assert dg0 == pytest.approx((gp - gm) / (2 * eps), abs=1e-4)
    for g, dg in outs[1:]:
        assert g == pytest.approx(g0, rel=1e-12, abs=1e-15)
        assert dg == pytest.approx(dg0, rel=1e-9, abs=1e-12)


def test_nondominated_example(backend):
    f1, f2 = np.array([1.0, 2.0, 3.0, 2.5]), np.array([3.0, 2.0, 1.0, 2.5])
    assert backend.nondominated_2d(f1, f2).tolist() == [True, True, True, False]
    assert backend.nondominated_2d(np.array([4.0]), np.array([1.0])).tolist() == [True]
    assert backend.nondominated_2d(np.array([]), np.array([])).tolist() == []


@given(hnp.arrays(float, st.tuples(st.integers(1, 60), st.just(2)), elements=st.integers(0, 6).map(float)))
def test_nondominated_matches_oracle_with_ties(pts):
    expect = ~dominated_mask(pts[:, 0], pts[:, 1])
    for mod in kernels.backends().values():
        assert mod.nondominated_2d(pts[:, 0].copy(), pts[:, 1].copy()).tolist() == expect.tolist()
