"""Adaptive control: AZP settings everywhere except an SCC window.

The AZP problem is solved over the whole horizon and the SCC problem only
over the window steps; since steps are independent given the placement,
the window solve leaves the other steps at their AZP settings. The spliced
settings are re-simulated on the Hazen-Williams model.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import objectives as obj
from .control import Objective, SCPOptions, solve_vc_nlp
from .errors import ValidationError
from .hydraulics import ControlSettings, solve_eps

AZP, SCC = "AZP", "SCC"
_CLOCK = re.compile(r"^\s*(\d{1,2}):(\d{2})\s*-\s*(\d{1,2}):(\d{2})\s*$")


@dataclass(frozen=True)
class _Slice:
    h: np.ndarray
    q: np.ndarray


def parse_window(text, step_minutes, n_t):
    """``"HH:MM-HH:MM"`` to a 1-based inclusive ``(first, last)`` step range, rounding partial steps outward."""
    m = _CLOCK.match(text)
    if not m:
        raise ValidationError(f"window {text!r} is not of the form HH:MM-HH:MM")
    h0, m0, h1, m1 = (int(g) for g in m.groups())
    if m0 >= 60 or m1 >= 60 or h0 > 24 or h1 > 24:
        raise ValidationError(f"invalid clock time in window {text!r}")
    a, b = 60 * h0 + m0, 60 * h1 + m1
    if b <= a:
        raise ValidationError(f"window {text!r} must end after it starts (no wrap past midnight)")
    first = int(math.floor(a / step_minutes))
    last = int(math.ceil(b / step_minutes)) - 1
    window = (first + 1, last + 1)
    check_window(window, n_t)
    return window


def check_window(window, n_t):
    if window is None:
        return
    first, last = window
    if last < first:
        return
    if first < 1 or last > n_t:
        raise ValidationError(f"window {window} outside steps [1, {n_t}]")


def window_steps(window, n_t):
    """0-based step indices of a 1-based inclusive window (empty for ``None``)."""
    check_window(window, n_t)
    if window is None or window[1] < window[0]:
        return np.zeros(0, dtype=int)
    return np.arange(window[0] - 1, window[1])


def demand_window(scenario, hours=1.0, peak=True):
    """Contiguous window of ``hours`` with the largest (``peak``) or smallest total demand."""
    n = max(1, int(math.ceil(hours * 60.0 / scenario.step_minutes)))
    n = min(n, scenario.n_t)
    tot = scenario.demands.sum(axis=1)
    sums = np.convolve(tot, np.ones(n), mode="valid")
    k = int(np.argmax(sums) if peak else np.argmin(sums))
    return (k + 1, k + n)


@dataclass(frozen=True, eq=False)
class AdaptivePlan:
    window: tuple | None
    mode_per_step: tuple
    settings: ControlSettings = field(repr=False)
    state: object = field(repr=False)
    metrics: dict = field(repr=False)
    pv_stats: tuple = field(repr=False)
    azp_solution: object = field(default=None, repr=False)
    scc_solution: object = field(default=None, repr=False)

    def rows(self, model):
        """Per-step time series: mode, AZP [m], SCC [%], total flushing [L/s], largest setting change [m]."""
        azp = obj.azp_per_step(model, self.state)
        scc = obj.scc_per_step(model, self.state)
        flush = self.settings.alpha.sum(axis=1) * 1000.0
        eta = self.settings.eta
        delta = np.abs(eta - np.roll(eta, 1, axis=0)).max(axis=1) if eta.shape[1] else np.zeros(len(azp))
        return [
            {
                "step": t + 1, "mode": self.mode_per_step[t], "azp_m": float(azp[t]), "scc_pct": 100.0 * float(scc[t]),
                "flushing_total_lps": float(flush[t]), "max_setting_change_m": float(delta[t]),
            }
            for t in range(len(azp))
        ]


def _segment(model, state, steps):
    if not len(steps):
        return None
    return obj.evaluate(model, _Slice(state.h[steps], state.q[steps]))


def build_plan(model, scenario, config, scc_window, options=None, azp_solution=None, rho=None):
    """AZP control over the horizon with SCC control inside ``scc_window`` (1-based inclusive steps)."""
    options = options or SCPOptions()
    n_t = scenario.n_t
    steps = window_steps(scc_window, n_t)
    kw = {} if rho is None else {"rho": rho}
    if azp_solution is None:
        azp_solution = solve_vc_nlp(model, scenario, config, Objective("azp", **kw), options=options)
    eta = azp_solution.settings.eta.copy()
    alpha = azp_solution.settings.alpha.copy()
    scc_solution = None
    if len(steps):
        sub = scenario.subset(steps)
        scc_solution = solve_vc_nlp(
            model, sub, config, Objective("scc", **kw), start=azp_solution.settings.subset(steps), options=options
        )
        eta[steps] = scc_solution.settings.eta
        alpha[steps] = scc_solution.settings.alpha
    settings = ControlSettings(eta, alpha)
    state = solve_eps(model, scenario, settings, mode="hw")
    modes = np.full(n_t, AZP, dtype=object)
    modes[steps] = SCC
    rest = np.setdiff1d(np.arange(n_t), steps)
    metrics = {
        "horizon": obj.evaluate(model, state, **({} if rho is None else {"rho": rho})),
        "azp_segment": _segment(model, state, rest),
        "scc_segment": _segment(model, state, steps),
    }
    return AdaptivePlan(
        scc_window if len(steps) else None, tuple(modes), settings, state, metrics,
        obj.nodal_pressure_ranges(model, state), azp_solution, scc_solution,
    )


@dataclass(frozen=True, eq=False)
class Comparison:
    rows: list
    plans: dict = field(repr=False)

    def cdfs(self):
        """Nodal pressure-range CDF per plan: ``{name: (n_nodes, 2) array}``."""
        return {name: plan.pv_stats[1] for name, plan in self.plans.items()}


def compare_scenarios(model, scenario, config, windows=None, options=None, rho=None, extra_range_m=5.0):
    """AZP-only baseline against plans with SCC windows.

    ``windows`` maps plan names to windows; by default a 1-hour window at
    peak demand and one at minimum demand. Each row reports horizon and
    in-window objectives plus the share of nodes whose pressure range grows
    by at least ``extra_range_m`` over the baseline.
    """
    options = options or SCPOptions()
    if windows is None:
        windows = {"peak": demand_window(scenario, 1.0, True), "min_demand": demand_window(scenario, 1.0, False)}
    for w in windows.values():
        check_window(w, scenario.n_t)
    base = build_plan(model, scenario, config, None, options, rho=rho)
    plans = {"azp_only": base}
    for name, w in windows.items():
        plans[name] = build_plan(model, scenario, config, w, options, azp_solution=base.azp_solution, rho=rho)
    base_ranges = base.pv_stats[0]
    rows = []
    for name, plan in plans.items():
        w = plan.window if name != "azp_only" else None
        ref = windows.get(name) if name != "azp_only" else None
        steps = window_steps(ref, scenario.n_t) if ref else np.zeros(0, dtype=int)
        h = plan.metrics["horizon"]
        row = {
            "plan": name,
            "window": "" if not w else f"{w[0]}-{w[1]}",
            "azp_m": h.azp,
            "scc_pct": 100.0 * h.scc_indicator,
            "pv_m2": h.pv,
            "azp_window_m": float("nan"),
            "azp_window_baseline_m": float("nan"),
            "scc_window_pct": float("nan"),
            "scc_window_baseline_pct": float("nan"),
            "share_nodes_extra_range": float(np.mean(plan.pv_stats[0] - base_ranges >= extra_range_m)),
        }
        if len(steps):
            pa = obj.azp_per_step(model, plan.state)[steps]
            ba = obj.azp_per_step(model, base.state)[steps]
            ps = obj.scc_per_step(model, plan.state)[steps]
            bs = obj.scc_per_step(model, base.state)[steps]
            row.update(
                azp_window_m=float(pa.mean()), azp_window_baseline_m=float(ba.mean()),
                scc_window_pct=100.0 * float(ps.mean()), scc_window_baseline_pct=100.0 * float(bs.mean()),
            )
        rows.append(row)
    return Comparison(rows, plans)
