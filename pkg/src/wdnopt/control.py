"""Valve settings for a fixed placement by sequential linear programming.

Each iterate is an exact hydraulic solve (QA head losses by default); flow and
head sensitivities give a linear model of the objective and constraints that
is minimized inside a box trust region with an exact l1 penalty. The time
steps are independent once the placement and directions are fixed, so the
problem is solved step by step.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import objectives as obj
from .errors import ConvergenceError, InfeasibleError, StructuralError, ValidationError
from .hydraulics import ControlSettings, HydraulicState, solve_eps, solver_for

DIRECTION_ENUM_CAP = 10


@dataclass(frozen=True)
class ValveConfig:
    """PCV links with their fixed flow direction (+1/-1) and AFV nodes, by id."""

    pcv_links: tuple = ()
    directions: tuple = ()
    afv_nodes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pcv_links", tuple(self.pcv_links))
        object.__setattr__(self, "afv_nodes", tuple(self.afv_nodes))
        dirs = tuple(int(d) for d in self.directions) if self.directions else (1,) * len(self.pcv_links)
        object.__setattr__(self, "directions", dirs)
        if len(dirs) != len(self.pcv_links):
            raise ValidationError("one direction is needed per PCV link")
        if any(d not in (1, -1) for d in dirs):
            raise ValidationError("PCV directions must be +1 or -1")
        if len(set(self.pcv_links)) != len(self.pcv_links) or len(set(self.afv_nodes)) != len(self.afv_nodes):
            raise ValidationError("duplicate valve location in config")

    @property
    def n_v(self):
        return len(self.pcv_links)

    @property
    def n_f(self):
        return len(self.afv_nodes)

    def with_directions(self, directions):
        return dataclasses.replace(self, directions=tuple(directions))

    def canonical(self, model):
        """Same config with valves listed in model order."""
        order = sorted(range(self.n_v), key=lambda k: model.link_index[self.pcv_links[k]])
        nodes = sorted(self.afv_nodes, key=lambda i: model.node_index[i])
        return ValveConfig(
            tuple(self.pcv_links[k] for k in order), tuple(self.directions[k] for k in order), tuple(nodes)
        )

    def validate(self, model):
        for j in self.pcv_links:
            if j not in model.link_index:
                raise ValidationError(f"unknown PCV link {j!r}", j)
            if not model.links[model.link_index[j]].is_pcv_candidate:
                raise ValidationError(f"link {j!r} is not a PCV candidate", j)
        for i in self.afv_nodes:
            if i not in model.node_index:
                raise ValidationError(f"unknown AFV node {i!r}", i)
            if not model.nodes[model.node_index[i]].is_afv_candidate:
                raise ValidationError(f"node {i!r} is not an AFV candidate", i)

    def to_dict(self):
        return {
            "pcv_links": list(self.pcv_links),
            "directions": ["+" if d > 0 else "-" for d in self.directions],
            "afv_nodes": list(self.afv_nodes),
        }

    @classmethod
    def from_dict(cls, data):
        dirs = [1 if str(d) in ("+", "1", "+1") else -1 for d in data.get("directions", [])]
        return cls(tuple(data.get("pcv_links", ())), tuple(dirs), tuple(data.get("afv_nodes", ())))

    @property
    def config_id(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:10]


@dataclass(frozen=True)
class Objective:
    """Scalar objective ``c_azp * AZP + c_scc * SCC + offset`` (minimized).

    ``kind`` is ``"azp"``, ``"scc"`` (maximized via its negative) or
    ``"weighted"``, which blends the two after normalizing with the utopia
    point (``azp_best``, ``scc_best``) and the opposite anchors
    (``azp_worst``, ``scc_worst``).
    """

    kind: str = "azp"
    omega: float = 0.5
    azp_best: float = 0.0
    azp_worst: float = 1.0
    scc_best: float = 1.0
    scc_worst: float = 0.0
    rho: float = obj.DEFAULT_RHO

    def __post_init__(self):
        if self.kind not in ("azp", "scc", "weighted"):
            raise ValidationError(f"unknown objective {self.kind!r}")
        if not 0.0 <= self.omega <= 1.0:
            raise ValidationError("omega must lie in [0, 1]")
        if self.kind == "weighted" and (self.azp_worst <= self.azp_best or self.scc_best <= self.scc_worst):
            raise ValidationError("weighted objective needs nonzero normalization ranges")

    @property
    def coefficients(self):
        if self.kind == "azp":
            return 1.0, 0.0, 0.0
        if self.kind == "scc":
            return 0.0, -1.0, 0.0
        da = self.azp_worst - self.azp_best
        ds = self.scc_best - self.scc_worst
        w = self.omega
        return (1 - w) / da, -w / ds, -(1 - w) * self.azp_best / da + w * self.scc_best / ds

    def value(self, azp, scc):
        ca, cs, c0 = self.coefficients
        return ca * azp + cs * scc + c0

    def normalized(self, azp, scc):
        """``(f1_bar, f2_bar)``: 0 at the utopia value, 1 at the opposite anchor."""
        return (
            (azp - self.azp_best) / (self.azp_worst - self.azp_best),
            (self.scc_best - scc) / (self.scc_best - self.scc_worst),
        )

    def uses_scc(self):
        return self.coefficients[1] != 0.0


@dataclass(frozen=True)
class SCPOptions:
    max_iter: int = 100
    rtol: float = 1e-6
    penalty: float = 1e3
    initial_radius: float = 0.2
    feas_tol: float = 1e-5
    mode: str = "qa"
    refine_hw: bool = True
    refine_iter: int = 30


@dataclass(frozen=True, eq=False)
class ControlSolution:
    config: ValveConfig
    settings: ControlSettings
    state: HydraulicState
    objective: obj.ObjectiveValue
    scalar: float
    qa_scalar: float
    qa_gap: float
    converged: bool
    iterations: int
    step_norm: float
    max_violation: float
    feasible: bool
    assignments: tuple = field(default=())

    @property
    def azp(self):
        return self.objective.azp

    @property
    def scc(self):
        return self.objective.scc_indicator


class _StepProblem:
    """Reduced problem of one time step: controls are ``[eta at PCVs, alpha at AFVs]``."""

    def __init__(self, model, scenario, t, pcv_idx, dirs, afv_idx, objective, options, mode):
        self.model = model
        self.solver = solver_for(model)
        self.demand = scenario.demands[t]
        self.h0 = scenario.source_heads[t]
        b = scenario.bounds
        self.h_lo, self.h_hi = b.h_lo[t], b.h_hi[t]
        self.q_hi = np.maximum(np.abs(b.q_lo[t]), np.abs(b.q_hi[t]))
        self.pcv_idx = np.asarray(pcv_idx, dtype=int)
        self.dirs = np.asarray(dirs, dtype=float)
        self.afv_idx = np.asarray(afv_idx, dtype=int)
        lo_e = np.where(self.dirs > 0, 0.0, b.eta_lo[t, self.pcv_idx]) if len(self.pcv_idx) else np.zeros(0)
        hi_e = np.where(self.dirs > 0, b.eta_hi[t, self.pcv_idx], 0.0) if len(self.pcv_idx) else np.zeros(0)
        self.lo = np.concatenate([lo_e, np.zeros(len(self.afv_idx))])
        self.hi = np.concatenate([hi_e, b.alpha_hi[t, self.afv_idx]])
        self.ca, self.cs, _ = objective.coefficients
        self.rho = objective.rho
        self.mu = options.penalty
        self.mode = mode
        self.m = len(self.lo)
        self._q_last = None

    def controls(self, x):
        eta = np.zeros(self.model.n_links)
        alpha = np.zeros(self.model.n_nodes)
        nv = len(self.pcv_idx)
        eta[self.pcv_idx] = x[:nv]
        alpha[self.afv_idx] = x[nv:]
        return eta, alpha

    def simulate(self, x):
        eta, alpha = self.controls(x)
        try:
            st = self.solver.solve(self.demand, self.h0, eta, alpha, mode=self.mode, q_start=self._q_last)
        except (ConvergenceError, StructuralError):
            return None
        if st.residual_energy > 1e-6 or st.residual_mass > 1e-8:
            return None
        self._q_last = st.q
        return st

    def violations(self, st):
        """Componentwise constraint violations (heads in m, velocities in m/s)."""
        area = self.model.area
        v_lo = np.maximum(self.h_lo - st.h, 0.0)
        v_hi = np.maximum(st.h - self.h_hi, 0.0)
        v_q = np.maximum(np.abs(st.q) - self.q_hi, 0.0) / area
        v_d = np.maximum(-self.dirs * st.q[self.pcv_idx], 0.0) / area[self.pcv_idx]
        return v_lo, v_hi, v_q, v_d

    def f(self, st):
        val = self.ca * float((st.h - self.model.elevation) @ self.model.azp_weight)
        if self.cs:
            s, _ = obj.scc_sigmoid_gradient(self.model, st.q, self.rho)
            val += self.cs * s
        return val

    def merit(self, st):
        return self.f(st) + self.mu * sum(float(v.sum()) for v in self.violations(st))

    def max_violation(self, st):
        return max((float(v.max()) if v.size else 0.0) for v in self.violations(st))

    def linearize(self, st):
        """Flow/head sensitivities and the objective gradient at a state."""
        model = self.model
        dq, dh = self.solver.sensitivities(st, self.pcv_idx, self.afv_idx)
        grad = self.ca * (model.azp_weight @ dh)
        if self.cs:
            _, gq = obj.scc_sigmoid_gradient(model, st.q, self.rho)
            grad = grad + self.cs * (gq @ dq)
        return dq, dh, grad

    def lp_step(self, st, lin, x, radius, shift=None):
        """Minimize the linearized penalty model over the trust region.

        ``shift`` adds a fixed ``(dh, dq)`` offset to the linearized heads and
        flows (second-order correction). Returns ``(step, predicted merit
        reduction)``.
        """
        model = self.model
        dq, dh, grad = lin
        h = st.h if shift is None else st.h + shift[0]
        q = st.q if shift is None else st.q + shift[1]
        s_lo = np.minimum(np.maximum(self.lo - x, -radius), 0.0)
        s_hi = np.maximum(np.minimum(self.hi - x, radius), 0.0)
        span = np.maximum(self.hi - self.lo, 1e-12)

        rows, rhs = [], []
        area = model.area
        reach = np.maximum(-s_lo, s_hi)
        reach_h = np.abs(dh) @ reach
        reach_q = np.abs(dq) @ reach
        # only constraints the step can reach are modelled
        for i in np.flatnonzero(h - self.h_lo <= reach_h + 1e-9):
            rows.append(-dh[i])
            rhs.append(h[i] - self.h_lo[i])
        for i in np.flatnonzero(self.h_hi - h <= reach_h + 1e-9):
            rows.append(dh[i])
            rhs.append(self.h_hi[i] - h[i])
        for j in np.flatnonzero(self.q_hi - np.abs(q) <= reach_q + 1e-12):
            rows.append(dq[j] / area[j])
            rhs.append((self.q_hi[j] - q[j]) / area[j])
            rows.append(-dq[j] / area[j])
            rhs.append((self.q_hi[j] + q[j]) / area[j])
        for k, j in enumerate(self.pcv_idx):
            rows.append(-self.dirs[k] * dq[j] / area[j])
            rhs.append(self.dirs[k] * q[j] / area[j])
        n_r = len(rows)
        m = self.m
        # variables: s+ (m), s- (m), slack (n_r); the tiny l1 term picks the
        # shortest step among equally good ones
        reg = 1e-9 * self.mu / span
        c = np.concatenate([grad + reg, -grad + reg, np.full(n_r, self.mu)])
        a_ub = b_ub = None
        if n_r:
            a = np.asarray(rows)
            a_ub = np.hstack([a, -a, -np.eye(n_r)])
            b_ub = np.asarray(rhs)
        bnds = [(0.0, float(u)) for u in s_hi] + [(0.0, float(-l)) for l in s_lo] + [(0.0, None)] * n_r
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bnds, method="highs")
        if res.status != 0:
            return np.zeros(m), 0.0
        s = res.x[:m] - res.x[m : 2 * m]
        penalty = self.mu * sum(float(v.sum()) for v in self.violations(st))
        pred = penalty - float(grad @ s) - self.mu * float(res.x[2 * m :].sum())
        return s, pred

    def run(self, x0, max_iter, rtol, initial_radius):
        x = np.clip(np.asarray(x0, dtype=float), self.lo, self.hi)
        st = self.simulate(x)
        if st is None:
            x = np.zeros(self.m)
            st = self.simulate(x)
            if st is None:
                raise ConvergenceError("hydraulic solve failed at the starting point")
        span = self.hi - self.lo
        if self.m == 0:
            return x, st, 0, True, 0.0
        radius = initial_radius * span
        merit = self.merit(st)
        it = 0
        converged = False
        step_norm = np.inf
        lin = self.linearize(st)
        prev = np.zeros(self.m)
        while it < max_iter:
            it += 1
            s, pred = self.lp_step(st, lin, x, radius)
            step_norm = float(np.max(np.abs(s))) if s.size else 0.0
            if pred <= 1e-12 * max(1.0, abs(merit)) or step_norm <= 1e-12:
                converged = True
                break
            cand = self.simulate(x + s)
            new = self.merit(cand) if cand is not None else np.inf
            ratio = (merit - new) / pred
            if ratio < 0.05 and cand is not None:
                # second-order correction for constraint curvature
                shift = (cand.h - st.h - lin[1] @ s, cand.q - st.q - lin[0] @ s)
                s2, _ = self.lp_step(st, lin, x, radius, shift)
                cand2 = self.simulate(x + s2)
                new2 = self.merit(cand2) if cand2 is not None else np.inf
                if (merit - new2) / pred >= 0.05:
                    s, cand, new, ratio = s2, cand2, new2, (merit - new2) / pred
            if ratio < 0.05:
                radius = radius * 0.5
                if np.all(radius <= 1e-10 * np.maximum(span, 1e-12)):
                    converged = True
                    break
                continue
            improvement = merit - new
            x, st, old, merit = x + s, cand, merit, new
            lin = self.linearize(st)
            if ratio > 0.75:
                radius = np.minimum(radius * 2.0, span)
            elif ratio < 0.25:
                radius = radius * 0.5
            # damp variables whose accepted steps flip sign (SLP zigzag)
            flip = s * prev < 0
            radius = np.where(flip, radius * 0.5, radius)
            prev = s
            if improvement <= rtol * max(abs(old), 1e-8):
                converged = True
                s2, _ = self.lp_step(st, lin, x, radius)
                step_norm = float(np.max(np.abs(s2))) if s2.size else 0.0
                break
        return x, st, it, converged, step_norm


def _indices(model, config):
    config.validate(model)
    pcv_idx = [model.link_index[j] for j in config.pcv_links]
    afv_idx = [model.node_index[i] for i in config.afv_nodes]
    return pcv_idx, afv_idx


def feasibility_report(model, scenario, config, settings, state):
    """Largest violation of the placement-and-bounds constraints and where it occurs."""
    pcv_idx, afv_idx = _indices(model, config)
    b = scenario.bounds
    worst = {"violation": 0.0, "constraint": None, "step": None, "element": None}

    def consider(values, name, ids):
        if values.size == 0:
            return
        t, k = np.unravel_index(int(np.argmax(values)), values.shape)
        if values[t, k] > worst["violation"]:
            worst.update(violation=float(values[t, k]), constraint=name, step=int(t), element=ids[k])

    node_ids = [n.id for n in model.nodes]
    link_ids = [l.id for l in model.links]
    consider(b.h_lo - state.h, "pressure floor", node_ids)
    consider(state.h - b.h_hi, "head ceiling", node_ids)
    consider((np.abs(state.q) - np.maximum(-b.q_lo, b.q_hi)) / model.area, "velocity limit", link_ids)
    if pcv_idx:
        d = np.asarray(config.directions, dtype=float)
        consider(-d * state.q[:, pcv_idx] / model.area[pcv_idx], "PCV flow direction", list(config.pcv_links))
        eta = settings.eta[:, pcv_idx]
        lo = np.where(d > 0, 0.0, b.eta_lo[:, pcv_idx])
        hi = np.where(d > 0, b.eta_hi[:, pcv_idx], 0.0)
        consider(np.maximum(lo - eta, eta - hi), "PCV setting bounds", list(config.pcv_links))
    mask_e = np.ones(model.n_links, dtype=bool)
    mask_e[pcv_idx] = False
    consider(np.abs(settings.eta[:, mask_e]), "setting at non-PCV link", [l for l, m in zip(link_ids, mask_e) if m])
    if afv_idx:
        a = settings.alpha[:, afv_idx]
        consider(np.maximum(-a, a - b.alpha_hi[:, afv_idx]), "flushing bounds", list(config.afv_nodes))
    mask_a = np.ones(model.n_nodes, dtype=bool)
    mask_a[afv_idx] = False
    consider(np.abs(settings.alpha[:, mask_a]), "flushing at non-AFV node", [n for n, m in zip(node_ids, mask_a) if m])
    return worst


def _run_steps(model, scenario, config, objective, x0, options, mode, max_iter, radius):
    pcv_idx, afv_idx = _indices(model, config)
    n_t = scenario.n_t
    xs, fvals, iters, conv, norms = [], [], 0, True, 0.0
    for t in range(n_t):
        prob = _StepProblem(model, scenario, t, pcv_idx, config.directions, afv_idx, objective, options, mode)
        try:
            x, st, it, ok, sn = prob.run(x0[t], max_iter, options.rtol, radius)
        except ConvergenceError as exc:
            exc.step = t
            raise
        xs.append(x)
        fvals.append(prob.f(st))
        iters += it
        conv &= ok
        norms = max(norms, sn)
    return np.array(xs), np.array(fvals), iters, conv, norms


def _settings_from(model, config, xs):
    pcv_idx, afv_idx = _indices(model, config)
    n_t = xs.shape[0]
    eta = np.zeros((n_t, model.n_links))
    alpha = np.zeros((n_t, model.n_nodes))
    nv = len(pcv_idx)
    if nv:
        eta[:, pcv_idx] = xs[:, :nv]
    if afv_idx:
        alpha[:, afv_idx] = xs[:, nv:]
    return ControlSettings(eta, alpha)


def _start_vector(model, config, start, n_t):
    pcv_idx, afv_idx = _indices(model, config)
    m = len(pcv_idx) + len(afv_idx)
    if start is None:
        return np.zeros((n_t, m))
    return np.hstack([np.asarray(start.eta)[:, pcv_idx], np.asarray(start.alpha)[:, afv_idx]]).reshape(n_t, m)


def solve_vc_nlp(model, scenario, config, objective=None, start=None, options=None):
    """Optimal settings for a fixed valve placement and direction assignment.

    Returns a :class:`ControlSolution` whose objective values come from a
    Hazen-Williams simulation of the final settings. Raises
    :class:`InfeasibleError` (with the incumbent attached) when the
    constraints cannot be met.
    """
    objective = objective or Objective("azp")
    options = options or SCPOptions()
    config = config.canonical(model)
    n_t = scenario.n_t
    x0 = _start_vector(model, config, start, n_t)
    xs, fvals, iters, conv, norm = _run_steps(
        model, scenario, config, objective, x0, options, options.mode, options.max_iter, options.initial_radius
    )
    qa_value = float(fvals.mean()) + objective.coefficients[2]
    if options.mode != "hw" and options.refine_hw and config.n_v + config.n_f > 0:
        xs, _, it2, conv2, norm2 = _run_steps(
            model, scenario, config, objective, xs, options, "hw", options.refine_iter, 0.05
        )
        iters += it2
        norm = max(norm, norm2)
    settings = _settings_from(model, config, xs)
    state = solve_eps(model, scenario, settings, mode="hw")
    value = obj.evaluate(model, state, rho=objective.rho)
    scalar = objective.value(value.azp, value.scc_sigmoid)
    gap = abs(qa_value - scalar) / max(abs(scalar), 1e-12)
    report = feasibility_report(model, scenario, config, settings, state)
    feasible = report["violation"] <= options.feas_tol
    sol = ControlSolution(
        config=config, settings=settings, state=state, objective=value, scalar=scalar, qa_scalar=qa_value,
        qa_gap=gap, converged=conv, iterations=iters, step_norm=norm, max_violation=report["violation"],
        feasible=feasible,
    )
    if not feasible:
        raise InfeasibleError(
            f"no feasible settings found: {report['constraint']} violated by {report['violation']:.3g} "
            f"at {report['element']!r}, step {report['step']}",
            report=report, solution=sol,
        )
    return sol


def direction_assignments(n_v):
    """All time-invariant direction tuples in lexicographic order (+ before -)."""
    return list(itertools.product((1, -1), repeat=n_v))


def enumerate_directions(config, model, scenario, objective=None, start=None, options=None, cap=DIRECTION_ENUM_CAP):
    """Solve for every direction assignment of the config's PCVs and keep the best.

    The returned solution's ``assignments`` lists ``(directions, scalar)`` for
    each assignment (``nan`` when infeasible). Ties keep the earlier
    assignment.
    """
    if config.n_v > cap:
        raise ValidationError(
            f"{config.n_v} PCVs exceed the direction enumeration cap ({cap}); pass explicit directions instead"
        )
    config = config.canonical(model)
    best = None
    log = []
    failures = []
    for dirs in direction_assignments(config.n_v):
        cfg = config.with_directions(dirs)
        try:
            sol = solve_vc_nlp(model, scenario, cfg, objective, start, options)
        except InfeasibleError as exc:
            log.append((dirs, float("nan")))
            failures.append(exc.report)
            continue
        except ConvergenceError as exc:
            log.append((dirs, float("nan")))
            failures.append({"constraint": "hydraulic convergence", "violation": exc.residual_energy, "step": exc.step})
            continue
        log.append((dirs, sol.scalar))
        if best is None or sol.scalar < best.scalar - 1e-12:
            best = sol
    if best is None:
        worst = min(failures, key=lambda r: r.get("violation") or np.inf) if failures else {}
        raise InfeasibleError(
            f"all {len(log)} direction assignments are infeasible", report={"assignments": failures, "closest": worst}
        )
    return dataclasses.replace(best, assignments=tuple(log))
