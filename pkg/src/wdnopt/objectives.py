"""Average zone pressure, self-cleaning capacity and pressure-variation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_RHO = 50.0


@dataclass(frozen=True, eq=False)
class ObjectiveValue:
    """Objective values of one hydraulic state; per-step arrays have length ``n_t``."""

    azp: float
    scc_indicator: float
    scc_sigmoid: float
    pv: float
    azp_per_step: np.ndarray = field(repr=False)
    scc_indicator_per_step: np.ndarray = field(repr=False)
    scc_sigmoid_per_step: np.ndarray = field(repr=False)
    flags: tuple = ()

    def as_dict(self):
        return {
            "azp_m": self.azp,
            "scc_indicator": self.scc_indicator,
            "scc_sigmoid": self.scc_sigmoid,
            "pv_m2": self.pv,
            "flags": list(self.flags),
        }


def _heads(state):
    return np.atleast_2d(np.asarray(state.h if hasattr(state, "h") else state, dtype=float))


def _flows(state):
    return np.atleast_2d(np.asarray(state.q if hasattr(state, "q") else state, dtype=float))


def azp_per_step(model, state):
    """Weighted mean pressure ``sum_i w_i (h_it - z_i)`` for every step."""
    h = _heads(state)
    return (h - model.elevation) @ model.azp_weight


def azp(model, state):
    """Average zone pressure [m] over the horizon."""
    return float(np.mean(azp_per_step(model, state)))


def scc_per_step(model, state, smooth=False, rho=DEFAULT_RHO, u_min=None):
    """Length-weighted self-cleaning fraction for every step."""
    q = _flows(state)
    u = q / model.area
    umin = model.u_min if u_min is None else np.broadcast_to(np.asarray(u_min, dtype=float), (model.n_links,))
    if smooth:
        if rho <= 0:
            raise ValueError("rho must be positive")
        g, _ = kernels.sigmoid_pair(u, umin, rho)
    else:
        g = (np.abs(u) > umin).astype(float)
    return g @ model.scc_weight


def scc(model, state, smooth=False, rho=DEFAULT_RHO, u_min=None):
    """Self-cleaning capacity as a fraction: indicator form, or the two-sided sigmoid when ``smooth``."""
    return float(np.mean(scc_per_step(model, state, smooth, rho, u_min)))


def scc_sigmoid_gradient(model, q, rho=DEFAULT_RHO):
    """Sigmoid SCC of one step and its gradient with respect to the link flows."""
    u = np.asarray(q, dtype=float) / model.area
    g, dg = kernels.sigmoid_pair(u, model.u_min, rho)
    return float(g @ model.scc_weight), model.scc_weight * dg / model.area


def pressure_variation(state):
    """Sum of squared step-to-step head changes, including the wrap from the last step to the first."""
    h = _heads(state)
    if h.shape[0] < 2:
        return 0.0
    wrap = h[0] - h[-1]
    diffs = np.diff(h, axis=0)
    return float(wrap @ wrap + np.sum(diffs * diffs))


def nodal_pressure_ranges(model, state):
    """Per-node ``max - min`` pressure over the horizon and its empirical CDF.

    Returns ``(ranges, cdf)`` where ``cdf`` is an ``(n_nodes, 2)`` array of
    sorted ranges and cumulative node fractions.
    """
    p = _heads(state) - model.elevation
    ranges = p.max(axis=0) - p.min(axis=0)
    srt = np.sort(ranges)
    frac = np.arange(1, len(srt) + 1) / len(srt)
    return ranges, np.column_stack([srt, frac])


def degenerate_sigmoid(model, rho=DEFAULT_RHO):
    """True when some threshold is small enough for the two sigmoid halves to overlap."""
    return bool(np.any(model.u_min < 3.0 / rho))


def evaluate(model, state, rho=DEFAULT_RHO):
    """All objective values of a state in one :class:`ObjectiveValue`."""
    a = azp_per_step(model, state)
    si = scc_per_step(model, state)
    ss = scc_per_step(model, state, smooth=True, rho=rho)
    flags = ("sigmoid-overlap",) if degenerate_sigmoid(model, rho) else ()
    return ObjectiveValue(
        azp=float(a.mean()), scc_indicator=float(si.mean()), scc_sigmoid=float(ss.mean()),
        pv=pressure_variation(state), azp_per_step=a, scc_indicator_per_step=si,
        scc_sigmoid_per_step=ss, flags=flags,
    )
