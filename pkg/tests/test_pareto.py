import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import dominated_mask
from wdnopt.control import ValveConfig
from wdnopt.errors import ValidationError
from wdnopt.pareto import (
    Design,
    ParetoPoint,
    compute_anchors,
    default_weights,
    hierarchical_stages,
    pareto_filter,
    weighted_sum_front,
)
from wdnopt.placement import PlacementOptions

FIXED_A = Design.fixed(ValveConfig(("P2", "P7"), (), ("J5",)))
FAST = PlacementOptions(trials=4, local_search=0, search_starts=1)


def test_filter_example():
    pts = [(1, 3), (2, 2), (3, 1), (2.5, 2.5)]
    kept, _ = pareto_filter(pts)
    assert kept == [(1, 3), (2, 2), (3, 1)]
    assert pareto_filter([(4, 4)])[0] == [(4, 4)]
    assert pareto_filter([]) == ([], [])


def test_filter_duplicates_keep_first():
    a = ParetoPoint(0.0, 20.0, 0.7, (0, 1), None)
    b = ParetoPoint(0.5, 20.0, 0.7, (0, 1), None)
    kept, marked = pareto_filter([a, b])
    assert kept == [marked[0]] and kept[0].weight == 0.0
    assert [p.dominated for p in marked] == [False, True]


def test_filter_ignores_failed_points():
    ok = ParetoPoint(0.0, 20.0, 0.7, (0, 1), None)
    bad = ParetoPoint(0.5, math.nan, math.nan, (math.nan,) * 2, None, error="infeasible")
    kept, marked = pareto_filter([ok, bad])
    assert kept == [marked[0]]
    assert marked[1] is bad and not marked[1].dominated


def test_filter_maximizes_scc():
    lo = ParetoPoint(0.0, 20.0, 0.6, (0, 1), None)
    hi = ParetoPoint(1.0, 20.0, 0.8, (0, 0), None)
    kept, _ = pareto_filter([lo, hi])
    assert [p.weight for p in kept] == [1.0]


@given(hnp.arrays(float, st.tuples(st.integers(1, 80), st.just(2)), elements=st.floats(-5, 5, width=16)))
def test_filter_matches_oracle(pts):
    kept_mask = ~dominated_mask(pts[:, 0], pts[:, 1])
    kept, marked = pareto_filter([tuple(p) for p in pts])
    assert kept == [tuple(p) for p, k in zip(pts, kept_mask) if k]


@given(hnp.arrays(float, st.tuples(st.integers(2, 40), st.just(2)), elements=st.integers(0, 5).map(float)))
def test_filter_correctness(pts):
    rows = [tuple(p) for p in pts]
    kept, _ = pareto_filter(rows)
    for k in kept:
        assert not any(o != k and o[0] <= k[0] and o[1] <= k[1] for o in rows)
    for r in rows:
        if r not in kept:
            assert any(k[0] <= r[0] and k[1] <= r[1] for k in kept)


def test_default_weights():
    w = default_weights()
    assert len(w) == 10 and w[0] == 0.0 and w[-1] == 1.0
    assert np.diff(w) == pytest.approx(np.full(9, 1 / 9))
    with pytest.raises(ValidationError):
        default_weights(0)


def test_no_control_anchors_identical(toys):
    m, sc = toys["toy_a"]
    a = compute_anchors(m, sc, Design.fixed(ValveConfig()))
    assert a.azp_anchor == a.scc_anchor
    assert a.degenerate
    pts = weighted_sum_front(m, sc, Design.fixed(ValveConfig()), [0.0, 0.5, 1.0], a)
    assert len({(p.azp, p.scc) for p in pts}) == 1
    assert [p.dominated for p in pts] == [False, True, True]


@pytest.fixture(scope="module")
def sweep(toys):
    m, sc = toys["toy_a"]
    anchors = compute_anchors(m, sc, FIXED_A)
    return anchors, weighted_sum_front(m, sc, FIXED_A, default_weights(5), anchors)


def test_anchor_normalization(sweep):
    a, _ = sweep
    assert not a.degenerate
    assert a.normalize(*a.azp_anchor) == pytest.approx((0.0, 1.0))
    assert a.normalize(*a.scc_anchor) == pytest.approx((1.0, 0.0))
    u = a.utopia
    for anchor in (a.azp_anchor, a.scc_anchor):
        assert u[0] <= anchor[0] and u[1] >= anchor[1]
    o = a.objective(0.5)
    assert o.azp_worst > o.azp_best and o.scc_best > o.scc_worst


def test_sweep_endpoints_are_anchors(sweep):
    a, pts = sweep
    assert len(pts) == 5
    assert (pts[0].azp, pts[0].scc) == a.azp_anchor
    assert (pts[-1].azp, pts[-1].scc) == a.scc_anchor
    assert all(p.ok for p in pts)


def test_sweep_flags_match_oracle(sweep):
    _, pts = sweep
    f1 = np.array([p.azp for p in pts])
    f2 = -np.array([p.scc for p in pts])
    assert [p.dominated for p in pts] == dominated_mask(f1, f2).tolist()


def test_sweep_deterministic(toys, sweep):
    m, sc = toys["toy_a"]
    a, pts = sweep
    again = weighted_sum_front(m, sc, FIXED_A, default_weights(5), a)
    assert [(p.azp, p.scc) for p in again] == [(p.azp, p.scc) for p in pts]


def test_sweep_rejects_bad_weights(toys, sweep):
    m, sc = toys["toy_a"]
    with pytest.raises(ValidationError):
        weighted_sum_front(m, sc, FIXED_A, [-0.1, 0.5], sweep[0])


def test_design_validation():
    with pytest.raises(ValidationError):
        Design("fixed")
    with pytest.raises(ValidationError):
        Design("bogus")
    with pytest.raises(ValidationError):
        Design.joint(-1, 0)


def test_hierarchical_without_afvs(toys):
    m, sc = toys["toy_a"]
    res = hierarchical_stages(m, sc, 2, 0, FAST)
    assert res.stage2 is None
    assert res.config == res.stage1.config and res.config.n_f == 0


def test_hierarchical_keeps_stage1_pcvs(toys):
    m, sc = toys["toy_a"]
    res = hierarchical_stages(m, sc, 2, 1, FAST)
    assert res.config.pcv_links == res.stage1.config.pcv_links
    assert res.config.n_f == 1


@pytest.mark.slow
def test_hierarchical_front_not_better_than_joint(toys):
    m, sc = toys["toy_a"]
    weights = [0.0, 0.5, 1.0]
    cfg = hierarchical_stages(m, sc, 2, 1).config
    hier = pareto_filter(weighted_sum_front(m, sc, Design.fixed(cfg), weights))[0]
    joint = weighted_sum_front(m, sc, Design.joint(2, 1), weights)
    for h in hier:
        assert any(j.ok and j.azp <= h.azp + 1e-6 and j.scc >= h.scc - 1e-6 for j in joint), (h.azp, h.scc)
