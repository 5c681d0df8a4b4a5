"""AZP-SCC trade-off: anchors, weighted-sum sweeps, Pareto filtering and the hierarchical design.

SCC is maximized, so every internal comparison uses ``(AZP, -SCC)`` with
both minimized. Reported SCC values are the indicator form evaluated on
the Hazen-Williams model; the solvers optimize the sigmoid form.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .control import ControlSolution, Objective, ValveConfig, enumerate_directions, solve_vc_nlp
from .errors import SolverError, ValidationError, WdnoptError
from .placement import PlacementOptions, solve_vp_minlp

DEFAULT_WEIGHTS = 10


@dataclass(frozen=True)
class Design:
    """How valves are placed during a sweep: ``joint`` placement per solve, or a ``fixed`` config."""

    kind: str = "joint"
    n_v: int = 0
    n_f: int = 0
    config: ValveConfig | None = None
    enumerate_directions: bool = True

    def __post_init__(self):
        if self.kind not in ("joint", "fixed"):
            raise ValidationError(f"unknown design {self.kind!r}")
        if self.kind == "fixed" and self.config is None:
            raise ValidationError("a fixed design needs a config")
        if self.n_v < 0 or self.n_f < 0:
            raise ValidationError("valve counts must be nonnegative")

    @classmethod
    def joint(cls, n_v, n_f):
        return cls("joint", n_v, n_f)

    @classmethod
    def fixed(cls, config, enumerate_directions=True):
        return cls("fixed", config.n_v, config.n_f, config, enumerate_directions)


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Both single-objective optima, each evaluated on both objectives."""

    azp_anchor: tuple
    scc_anchor: tuple
    azp_solution: ControlSolution = field(repr=False)
    scc_solution: ControlSolution = field(repr=False)

    @property
    def utopia(self):
        return (min(self.azp_anchor[0], self.scc_anchor[0]), max(self.azp_anchor[1], self.scc_anchor[1]))

    @property
    def nadir(self):
        return (max(self.azp_anchor[0], self.scc_anchor[0]), min(self.azp_anchor[1], self.scc_anchor[1]))

    @property
    def degenerate(self):
        """True when the anchors coincide in either solver objective (AZP or sigmoid SCC), leaving no trade-off."""
        a, s = self.azp_solution.objective, self.scc_solution.objective
        return not (abs(a.azp - s.azp) > 1e-9 and abs(a.scc_sigmoid - s.scc_sigmoid) > 1e-9)

    def normalize(self, azp, scc):
        """``(f1_bar, f2_bar)``: 0 at the utopia value and 1 at the opposite anchor (0 when that range is empty)."""
        u, n = self.utopia, self.nadir
        da, ds = n[0] - u[0], u[1] - n[1]
        return ((azp - u[0]) / da if da > 1e-12 else 0.0, (u[1] - scc) / ds if ds > 1e-12 else 0.0)

    def objective(self, omega, rho=None):
        """Weighted-sum objective normalized with the anchors' sigmoid SCC values (the ones the solver sees)."""
        a, s = self.azp_solution.objective, self.scc_solution.objective
        kw = {} if rho is None else {"rho": rho}
        return Objective(
            "weighted", omega, azp_best=min(a.azp, s.azp), azp_worst=max(a.azp, s.azp),
            scc_best=max(a.scc_sigmoid, s.scc_sigmoid), scc_worst=min(a.scc_sigmoid, s.scc_sigmoid), **kw,
        )


@dataclass(frozen=True, eq=False)
class ParetoPoint:
    weight: float
    azp: float
    scc: float
    normalized: tuple
    config: ValveConfig | None
    solution: ControlSolution | None = field(default=None, repr=False)
    dominated: bool = False
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def _solve(model, scenario, design, objective, options, start=None):
    opts = options or PlacementOptions()
    if design.kind == "joint":
        return solve_vp_minlp(model, scenario, design.n_v, design.n_f, objective, opts).control
    if design.enumerate_directions:
        return enumerate_directions(design.config, model, scenario, objective, start, opts.scp, opts.enum_cap)
    return solve_vc_nlp(model, scenario, design.config, objective, start, opts.scp)


def _pair(sol):
    return (sol.objective.azp, sol.objective.scc_indicator)


def compute_anchors(model, scenario, design, options=None, rho=None):
    """Solve the AZP-minimizing and SCC-maximizing problems for a design."""
    kw = {} if rho is None else {"rho": rho}
    a = _solve(model, scenario, design, Objective("azp", **kw), options)
    s = _solve(model, scenario, design, Objective("scc", **kw), options)
    return AnchorSet(_pair(a), _pair(s), a, s)


def _point(anchors, omega, sol):
    azp, scc = _pair(sol)
    return ParetoPoint(omega, azp, scc, anchors.normalize(azp, scc), sol.config, sol)


def default_weights(n=DEFAULT_WEIGHTS):
    """``n`` evenly spaced weights over ``[0, 1]``, endpoints included."""
    if n < 1:
        raise ValidationError("at least one weight is needed")
    return [0.0] if n == 1 else [float(w) for w in np.linspace(0.0, 1.0, n)]


def weighted_sum_front(model, scenario, design, weights=None, anchors=None, options=None, rho=None):
    """Weighted-sum sweep; the anchors serve as the ``omega = 0`` and ``omega = 1`` points.

    Fixed-design solves start from the settings of the nearer anchor. A
    failed weight yields a point with ``error`` set and the sweep goes on.
    """
    weights = default_weights() if weights is None else [float(w) for w in weights]
    if any(not 0.0 <= w <= 1.0 for w in weights):
        raise ValidationError("weights must lie in [0, 1]")
    anchors = anchors or compute_anchors(model, scenario, design, options, rho)
    points = []
    for w in weights:
        near = anchors.azp_solution if w < 0.5 else anchors.scc_solution
        if w in (0.0, 1.0) or anchors.degenerate:
            points.append(_point(anchors, w, near))
            continue
        start = near.settings if design.kind == "fixed" else None
        try:
            sol = _solve(model, scenario, design, anchors.objective(w, rho), options, start)
        except SolverError as exc:
            points.append(ParetoPoint(w, float("nan"), float("nan"), (float("nan"),) * 2, None, error=str(exc)))
            continue
        points.append(_point(anchors, w, sol))
    return pareto_filter(points)[1]


def nondominated_mask(f1, f2):
    """Points not weakly dominated with both columns minimized; exact duplicates keep the first."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if f1.shape != f2.shape or f1.ndim != 1:
        raise ValidationError("objective columns must be 1-D and of equal length")
    out = np.zeros(len(f1), dtype=bool)
    ok = np.isfinite(f1) & np.isfinite(f2)
    idx = np.flatnonzero(ok)
    if len(idx):
        out[idx] = kernels.nondominated_2d(f1[idx], f2[idx])
    return out


def _minimized(p):
    if isinstance(p, ParetoPoint):
        return (p.azp, -p.scc) if p.ok else (np.nan, np.nan)
    return tuple(p)


def pareto_filter(points, key=None):
    """Non-dominated subset of ``points`` and the full list with ``dominated`` marked.

    ``key`` maps a point to its two minimized objectives; the default is
    ``(AZP, -SCC)`` for :class:`ParetoPoint` and the tuple itself otherwise.
    Failed points are neither kept nor marked.
    """
    points = list(points)
    if not points:
        return [], []
    key = key or _minimized
    vals = np.array([key(p) for p in points], dtype=float).reshape(len(points), 2)
    mask = nondominated_mask(vals[:, 0], vals[:, 1])
    marked = [
        dataclasses.replace(p, dominated=not m) if isinstance(p, ParetoPoint) and p.ok else p
        for p, m in zip(points, mask)
    ]
    return [p for p, m in zip(marked, mask) if m], marked


@dataclass(frozen=True, eq=False)
class HierarchicalResult:
    config: ValveConfig
    stage1: object = field(repr=False)
    stage2: object = field(default=None, repr=False)


def hierarchical_stages(model, scenario, n_v, n_f, options=None, rho=None):
    """PCVs placed for AZP first, then AFVs placed for SCC with those PCVs fixed."""
    if n_v < 0 or n_f < 0:
        raise ValidationError("valve counts must be nonnegative")
    kw = {} if rho is None else {"rho": rho}
    try:
        s1 = solve_vp_minlp(model, scenario, n_v, 0, Objective("azp", **kw), options)
    except WdnoptError as exc:
        _label(exc, "hierarchical stage 1 (AZP placement)")
        raise
    if n_f == 0:
        return HierarchicalResult(s1.config, s1)
    try:
        s2 = solve_vp_minlp(model, scenario, n_v, n_f, Objective("scc", **kw), options, fixed_pcvs=s1.config.pcv_links)
    except WdnoptError as exc:
        _label(exc, "hierarchical stage 2 (SCC flushing placement)")
        raise
    return HierarchicalResult(s2.config, s1, s2)


def _label(exc, stage):
    exc.args = (f"{stage}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
    report = getattr(exc, "report", None)
    if isinstance(report, dict):
        report.setdefault("stage", stage)


def hierarchical_design(model, scenario, n_v, n_f, options=None, rho=None):
    """Combined config of the two-stage design, for fixed-placement sweeps."""
    return hierarchical_stages(model, scenario, n_v, n_f, options, rho).config
