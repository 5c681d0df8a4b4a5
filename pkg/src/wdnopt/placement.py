"""Joint valve placement and control by relaxation, rounding and local polish.

The relaxation keeps the linear conservation and big-M constraints, relaxes
the placement and direction binaries to ``[0, 1]``, replaces each QA
head-loss equality by an outer approximation of its convex hull and bounds
the sigmoid SCC terms by concave piecewise-linear over-estimators. Its
optimum is a lower bound for the QA-model problem; its placement fractions
drive the randomized rounding.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import envelopes
from .control import (
    DIRECTION_ENUM_CAP,
    ControlSolution,
    Objective,
    SCPOptions,
    ValveConfig,
    enumerate_directions,
    solve_vc_nlp,
)
from .errors import ConvergenceError, InfeasibleError, SolverError, ValidationError
from .hydraulics import ControlSettings

QA_CUTS = 6
SIGMOID_PIECES = 4


class _Layout:
    """Column bookkeeping for the relaxation LP."""

    def __init__(self):
        self.n = 0
        self.lo = []
        self.hi = []

    def add(self, size, lo, hi):
        sl = slice(self.n, self.n + size)
        self.n += size
        self.lo.append(np.broadcast_to(np.asarray(lo, dtype=float), (size,)).copy())
        self.hi.append(np.broadcast_to(np.asarray(hi, dtype=float), (size,)).copy())
        return sl

    def bounds(self):
        return np.concatenate(self.lo), np.concatenate(self.hi)


class _Rows:
    """Sparse row accumulator (COO triplets plus right-hand sides)."""

    def __init__(self):
        self.r, self.c, self.v, self.rhs = [], [], [], []
        self.m = 0

    def add(self, terms, rhs):
        """Add ``len(rhs)`` rows; each term is ``(columns, coefficients)`` with one entry per row."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = len(rhs)
        idx = np.arange(self.m, self.m + k)
        for cols, vals in terms:
            self.r.append(idx)
            self.c.append(np.broadcast_to(np.asarray(cols), (k,)))
            self.v.append(np.broadcast_to(np.asarray(vals, dtype=float), (k,)))
        self.rhs.append(rhs)
        self.m += k

    def add_block(self, blocks, rhs):
        """Add rows ``sum_k M_k x[cols_k]``; ``blocks`` is a list of ``(sparse M_k, first column)``."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        for mat, first in blocks:
            coo = sp.coo_matrix(mat)
            self.r.append(coo.row + self.m)
            self.c.append(coo.col + first)
            self.v.append(coo.data.astype(float))
        self.rhs.append(rhs)
        self.m += len(rhs)

    def matrix(self, n):
        if not self.m:
            return None, None
        rows = np.concatenate(self.r)
        cols = np.concatenate(self.c)
        vals = np.concatenate(self.v)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(self.m, n))
        mat.eliminate_zeros()
        return mat, np.concatenate(self.rhs)


@dataclass(frozen=True, eq=False)
class RelaxedSolution:
    bound: float
    z: np.ndarray
    y: np.ndarray
    q: np.ndarray
    h: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray
    vp: np.ndarray
    vm: np.ndarray

    def settings(self):
        return ControlSettings(self.eta.copy(), self.alpha.copy())


@dataclass(eq=False)
class RelaxedProblem:
    """LP relaxation of joint placement and control over a scenario."""

    model: object
    scenario: object
    n_v: int
    n_f: int
    objective: Objective
    c: np.ndarray
    offset: float
    a_ub: object
    b_ub: np.ndarray
    a_eq: object
    b_eq: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    cols: dict = field(repr=False)

    def _solve(self, c):
        args = dict(
            A_ub=self.a_ub, b_ub=self.b_ub, A_eq=self.a_eq, b_eq=self.b_eq,
            bounds=np.column_stack([self.lo, self.hi]), method="highs",
        )
        res = linprog(c, **args)
        if res.status == 2:
            # presolve can misjudge nearly degenerate rows; confirm without it
            res = linprog(c, options={"presolve": False}, **args)
        if res.status == 2:
            raise InfeasibleError("relaxation is infeasible: the scenario bounds admit no hydraulic solution",
                                  report={"stage": "relaxation"})
        if res.status != 0:
            raise SolverError(f"relaxation LP failed: {res.message}")
        return res

    def solve(self):
        res = self._solve(self.c)
        x = res.x
        cols = self.cols
        n_t = self.scenario.n_t

        def steps(name):
            return np.array([x[cols[name][t]] for t in range(n_t)])

        return RelaxedSolution(
            bound=float(res.fun) + self.offset,
            z=x[cols["z"]].copy(), y=x[cols["y"]].copy(),
            q=steps("q"), h=steps("h"), eta=steps("eta"), alpha=steps("alpha"),
            vp=steps("vp"), vm=steps("vm"),
        )

    def embed(self, config, settings, state):
        """LP column vector of an MINLP point (placement, settings and QA-model state)."""
        model, cols = self.model, self.cols
        x = np.zeros(len(self.c))
        pcv = [model.link_index[j] for j in config.pcv_links]
        afv = [model.node_index[i] for i in config.afv_nodes]
        x[cols["z"].start + np.asarray(pcv, dtype=int)] = 1.0
        x[cols["y"].start + np.asarray(afv, dtype=int)] = 1.0
        for t in range(self.scenario.n_t):
            q = state.q[t]
            x[cols["q"][t]] = q
            x[cols["h"][t]] = state.h[t]
            x[cols["eta"][t]] = settings.eta[t]
            x[cols["theta"][t]] = envelopes.qa_value(q, model.qa_a, model.qa_b)
            x[cols["alpha"][t]] = settings.alpha[t]
            for j, d in zip(pcv, config.directions):
                x[(cols["vp"] if d > 0 else cols["vm"])[t].start + j] = 1.0
            if cols["sp"]:
                u = q / model.area
                x[cols["sp"][t]] = envelopes.logistic(u, model.u_min, self.objective.rho)
                x[cols["sm"][t]] = envelopes.logistic(-u, model.u_min, self.objective.rho)
        return x

    def violations(self, x):
        """``(inequality excess, equality residual, bound excess)`` of a column vector."""
        ub = np.maximum(self.a_ub @ x - self.b_ub, 0.0) if self.a_ub is not None else np.zeros(0)
        eq = np.abs(self.a_eq @ x - self.b_eq) if self.a_eq is not None else np.zeros(0)
        bnd = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        return ub, eq, bnd

    def extreme(self, name, t, j, sense):
        """Minimize (``sense=1``) or maximize (``sense=-1``) one per-step variable."""
        c = np.zeros_like(self.c)
        c[self.cols[name][t].start + j] = sense
        res = self._solve(c)
        return float(res.x[self.cols[name][t].start + j])


def build_relaxation(model, scenario, n_v, n_f, objective=None, n_cuts=QA_CUTS, n_pieces=SIGMOID_PIECES):
    """Assemble the LP relaxation for ``n_v`` PCVs and ``n_f`` AFVs."""
    objective = objective or Objective("azp")
    if np.all(model.qa_a == 0) and np.all(model.qa_b == 0):
        raise ValidationError("model has no fitted QA coefficients")
    n_p, n_n, n_t = model.n_links, model.n_nodes, scenario.n_t
    n_pc = int(model.pcv_candidates.sum())
    n_ac = int(model.afv_candidates.sum())
    if not 0 <= n_v <= n_pc:
        raise ValidationError(f"n_v={n_v} outside [0, {n_pc}] PCV candidates")
    if not 0 <= n_f <= n_ac:
        raise ValidationError(f"n_f={n_f} outside [0, {n_ac}] AFV candidates")
    ca, cs, c0 = objective.coefficients
    b = scenario.bounds
    lay = _Layout()
    cols = {"q": [], "h": [], "eta": [], "theta": [], "alpha": [], "vp": [], "vm": [], "sp": [], "sm": []}
    cols["z"] = lay.add(n_p, 0.0, model.pcv_candidates.astype(float))
    cols["y"] = lay.add(n_n, 0.0, model.afv_candidates.astype(float))
    for t in range(n_t):
        cols["q"].append(lay.add(n_p, b.q_lo[t], b.q_hi[t]))
        cols["h"].append(lay.add(n_n, b.h_lo[t], b.h_hi[t]))
        cols["eta"].append(lay.add(n_p, np.minimum(b.eta_lo[t], 0.0), np.maximum(b.eta_hi[t], 0.0)))
        cols["theta"].append(lay.add(n_p, b.theta_lo[t], b.theta_hi[t]))
        cols["alpha"].append(lay.add(n_n, 0.0, b.alpha_hi[t]))
        cols["vp"].append(lay.add(n_p, 0.0, model.pcv_candidates.astype(float)))
        cols["vm"].append(lay.add(n_p, 0.0, model.pcv_candidates.astype(float)))
        if cs:
            cols["sp"].append(lay.add(n_p, 0.0, 1.0))
            cols["sm"].append(lay.add(n_p, 0.0, 1.0))
    n = lay.n
    lo, hi = lay.bounds()

    eq = _Rows()
    ub = _Rows()
    a12 = model.a12.tocsr()
    a10 = model.a10.tocsr()
    eye_p = sp.identity(n_p, format="csr")
    eye_n = sp.identity(n_n, format="csr")
    jp = np.arange(n_p)
    jn = np.arange(n_n)
    zc, yc = cols["z"].start, cols["y"].start
    for t in range(n_t):
        q, h, eta, th, al = (cols[k][t].start for k in ("q", "h", "eta", "theta", "alpha"))
        vp, vm = cols["vp"][t].start, cols["vm"][t].start
        # energy A12 h + theta + eta = -A10 h0 and mass A12^T q - alpha = d
        eq.add_block([(a12, h), (eye_p, th), (eye_p, eta)], -(a10 @ scenario.source_heads[t]))
        eq.add_block([(a12.T, q), (-eye_n, al)], scenario.demands[t])

        # head-loss hull cuts
        lj, ls, lc, uj, us, uc = [], [], [], [], [], []
        for j in range(n_p):
            lower, upper = envelopes.qa_hull(model.qa_a[j], model.qa_b[j], b.q_lo[t, j], b.q_hi[t, j], n_cuts)
            for s_, c_ in lower:
                lj.append(j), ls.append(s_), lc.append(c_)
            for s_, c_ in upper:
                uj.append(j), us.append(s_), uc.append(c_)
        lj, uj = np.array(lj), np.array(uj)
        ub.add([(q + lj, ls), (th + lj, -1.0)], -np.array(lc))  # theta >= s q + c
        ub.add([(th + uj, 1.0), (q + uj, -np.array(us))], uc)  # theta <= s q + c

        # big-M activation of PCV settings and flow directions
        ub.add([(eta + jp, 1.0), (vp + jp, -b.eta_hi[t])], np.zeros(n_p))
        ub.add([(eta + jp, -1.0), (vm + jp, b.eta_lo[t])], np.zeros(n_p))
        ub.add([(q + jp, -1.0), (vp + jp, -b.q_lo[t])], -b.q_lo[t])
        ub.add([(q + jp, 1.0), (vm + jp, b.q_hi[t])], b.q_hi[t])
        ub.add([(th + jp, -1.0), (vp + jp, -b.theta_lo[t])], -b.theta_lo[t])
        ub.add([(th + jp, 1.0), (vm + jp, b.theta_hi[t])], b.theta_hi[t])
        ub.add([(vp + jp, 1.0), (vm + jp, 1.0), (zc + jp, -1.0)], np.zeros(n_p))
        ub.add([(al + jn, 1.0), (yc + jn, -b.alpha_hi[t])], np.zeros(n_n))

        # sigmoid over-estimators: s <= slope * q / A + intercept
        if cs:
            spc, smc = cols["sp"][t].start, cols["sm"][t].start
            for first, half in ((spc, 0), (smc, 1)):
                rj, rs, rc = [], [], []
                for j in range(n_p):
                    a_j = model.area[j]
                    lines = envelopes.sigmoid_pair_upper(
                        b.q_lo[t, j] / a_j, b.q_hi[t, j] / a_j, model.u_min[j], objective.rho, n_pieces
                    )[half]
                    for s_, c_ in lines:
                        rj.append(j), rs.append(s_ / a_j), rc.append(c_)
                rj = np.array(rj)
                ub.add([(first + rj, 1.0), (q + rj, -np.array(rs))], rc)
            # psi(u) + psi(-u) grows with |u|, so its value at the widest bound caps the pair
            u_far = np.maximum(np.abs(b.q_lo[t]), np.abs(b.q_hi[t])) / model.area
            g_far = envelopes.logistic(u_far, model.u_min, objective.rho) + envelopes.logistic(
                -u_far, model.u_min, objective.rho
            )
            ub.add([(spc + jp, 1.0), (smc + jp, 1.0)], g_far)
    # valve counts
    eq.add_block([(sp.csr_matrix(np.ones((1, n_p))), zc)], [float(n_v)])
    eq.add_block([(sp.csr_matrix(np.ones((1, n_n))), yc)], [float(n_f)])

    c = np.zeros(n)
    for t in range(n_t):
        if ca:
            c[cols["h"][t]] += ca * model.azp_weight / n_t
        if cs:
            c[cols["sp"][t]] += cs * model.scc_weight / n_t
            c[cols["sm"][t]] += cs * model.scc_weight / n_t
    offset = c0 - ca * float(model.azp_weight @ model.elevation)
    a_eq, b_eq = eq.matrix(n)
    a_ub, b_ub = ub.matrix(n)
    return RelaxedProblem(model, scenario, n_v, n_f, objective, c, offset, a_ub, b_ub, a_eq, b_eq, lo, hi, cols)


def _selected_links(model, z, fraction):
    cand = np.flatnonzero(model.pcv_candidates)
    if not len(cand) or fraction <= 0:
        return np.zeros(0, dtype=int)
    k = max(1, int(np.ceil(fraction * len(cand))))
    order = cand[np.lexsort((cand, -z[cand]))]
    return np.sort(order[:k])


def obbt(relaxed, max_rounds=1, fraction=0.1, solution=None, tol=0.01, links=None):
    """Tighten flow and PCV-setting bounds by minimizing and maximizing them over the relaxation.

    Each step is tightened on its own single-step relaxation (same valve
    counts), which every MINLP point restricted to that step satisfies.
    Variables at the ``fraction`` of PCV candidates with the largest relaxed
    ``z`` are selected unless ``links`` is given. Flow bounds feed the head
    loss bounds through the (monotone) QA curve. Returns a :class:`BoundsSet`
    never wider than the input.
    """
    model, scenario = relaxed.model, relaxed.scenario
    bounds = scenario.bounds
    if max_rounds < 1:
        return bounds
    if links is None:
        if solution is None:
            solution = relaxed.solve()
        links = _selected_links(model, solution.z, fraction)
    links = np.asarray(links, dtype=int)
    if not len(links):
        return bounds
    pad = 1e-7
    for _ in range(max_rounds):
        new = {k: getattr(bounds, k).copy() for k in ("q_lo", "q_hi", "eta_lo", "eta_hi")}
        for t in range(scenario.n_t):
            sub = build_relaxation(
                model, scenario.with_bounds(bounds).subset([t]), relaxed.n_v, relaxed.n_f, relaxed.objective
            )
            for j in links:
                for name, lo_key, hi_key in (("q", "q_lo", "q_hi"), ("eta", "eta_lo", "eta_hi")):
                    lo = sub.extreme(name, 0, j, 1.0) - pad
                    hi = sub.extreme(name, 0, j, -1.0) + pad
                    new[lo_key][t, j] = max(new[lo_key][t, j], lo)
                    new[hi_key][t, j] = min(new[hi_key][t, j], hi)
        # settings keep zero inside their range (valve absent or open)
        new["eta_lo"] = np.minimum(new["eta_lo"], 0.0)
        new["eta_hi"] = np.maximum(new["eta_hi"], 0.0)
        rel = 0.0
        for lo_key, hi_key in (("q_lo", "q_hi"), ("eta_lo", "eta_hi")):
            width = np.maximum(getattr(bounds, hi_key) - getattr(bounds, lo_key), 1e-12)
            moved = np.abs(new[hi_key] - getattr(bounds, hi_key)) + np.abs(new[lo_key] - getattr(bounds, lo_key))
            rel = max(rel, float(np.max(moved / width)))
        theta_lo = envelopes.qa_value(new["q_lo"], model.qa_a, model.qa_b)
        theta_hi = envelopes.qa_value(new["q_hi"], model.qa_a, model.qa_b)
        bounds = bounds.replace(
            theta_lo=np.maximum(bounds.theta_lo, theta_lo), theta_hi=np.minimum(bounds.theta_hi, theta_hi), **new
        )
        if rel < tol:
            break
    return bounds


def _inclusion(weights, k, mask):
    """Inclusion probabilities in ``[0, 1]`` summing to ``k``, proportional to ``weights`` where possible."""
    p = np.where(mask, np.clip(np.asarray(weights, dtype=float), 0.0, 1.0), 0.0)
    if k == 0:
        return np.zeros_like(p)
    if p.sum() <= 1e-12:
        p = mask * (k / max(int(mask.sum()), 1))
    p = p + np.where(mask, 1e-12, 0.0)
    if k >= int(mask.sum()):
        return mask.astype(float)
    # scale the free entries to the remaining budget; entries pushed past 1 are fixed at 1
    fixed = np.zeros(len(p), dtype=bool)
    for _ in range(len(p) + 1):
        free = mask & ~fixed
        scaled = p * (k - fixed.sum()) / float(p[free].sum())
        over = free & (scaled > 1.0)
        if not over.any():
            return np.where(fixed, 1.0, np.where(free, scaled, 0.0))
        fixed |= over
    return np.where(fixed, 1.0, 0.0)


def _systematic_sample(p, k, rng):
    """Madow systematic sampling: ``k`` distinct indices, index ``i`` included with probability ``p[i]``."""
    if k == 0:
        return np.zeros(0, dtype=int)
    perm = rng.permutation(len(p))
    cum = np.cumsum(p[perm])
    cum[-1] = max(cum[-1], float(k))
    points = rng.uniform() + np.arange(k)
    return np.sort(perm[np.searchsorted(cum, points, side="right")])


def _config_from(model, links, nodes):
    return ValveConfig(
        tuple(model.links[j].id for j in links), (), tuple(model.nodes[i].id for i in nodes)
    ).canonical(model)


def top_config(model, z, y, n_v, n_f):
    """Config made of the ``n_v`` links and ``n_f`` nodes with the largest relaxed placement values."""
    lc = np.flatnonzero(model.pcv_candidates)
    nc = np.flatnonzero(model.afv_candidates)
    links = lc[np.lexsort((lc, -np.asarray(z)[lc]))][:n_v]
    nodes = nc[np.lexsort((nc, -np.asarray(y)[nc]))][:n_f]
    return _config_from(model, np.sort(links), np.sort(nodes))


def randomized_rounding(model, relaxed_solution, n_v, n_f, trials=20, seed=0, max_draws=None):
    """Sample placements with inclusion probabilities given by the relaxed ``z`` and ``y``.

    Returns the distinct configs in order of first appearance; the result
    depends only on the inputs and ``seed``. With ``max_draws`` sampling
    continues past ``trials`` draws until ``trials`` distinct configs are
    found or ``max_draws`` draws are spent.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    pz = _inclusion(relaxed_solution.z, n_v, model.pcv_candidates)
    py = _inclusion(relaxed_solution.y, n_f, model.afv_candidates)
    seen, out = set(), []
    # draw until ``trials`` distinct configs or the draw budget runs out
    for _ in range(max_draws if max_draws is not None else trials):
        cfg = _config_from(model, _systematic_sample(pz, n_v, rng), _systematic_sample(py, n_f, rng))
        if cfg not in seen:
            seen.add(cfg)
            out.append(cfg)
            if len(out) == trials:
                break
    return out


@dataclass(frozen=True)
class PlacementOptions:
    trials: int = 20
    seed: int = 0
    obbt_rounds: int = 1
    obbt_fraction: float = 0.1
    enum_cap: int = DIRECTION_ENUM_CAP
    n_cuts: int = QA_CUTS
    n_pieces: int = SIGMOID_PIECES
    include_top: bool = True
    draw_factor: int = 10
    local_search: int = 5
    search_starts: int = 3
    workers: int = 1
    scp: SCPOptions = field(default_factory=SCPOptions)


@dataclass(frozen=True, eq=False)
class PlacementSolution:
    config: ValveConfig
    control: ControlSolution
    relaxation_bound: float
    gap: float
    candidates: tuple = ()
    relaxed: RelaxedSolution = field(default=None, repr=False)
    bounds: object = field(default=None, repr=False)

    @property
    def scalar(self):
        return self.control.scalar


def _config_key(cfg):
    return (cfg.pcv_links, cfg.directions, cfg.afv_nodes)


def _evaluate(args):
    cfg, model, scenario, objective, start, opts = args
    try:
        return cfg, enumerate_directions(cfg, model, scenario, objective, start, opts.scp, opts.enum_cap), None
    except InfeasibleError as exc:
        return cfg, None, exc.report
    except ConvergenceError as exc:
        return cfg, None, {"constraint": "hydraulic convergence", "step": exc.step}


def evaluate_candidates(model, scenario, configs, objective=None, start=None, options=None):
    """Polish every candidate placement; returns ``[(config, ControlSolution or None, failure report)]``."""
    opts = options or PlacementOptions()
    objective = objective or Objective("azp")
    jobs = [(cfg, model, scenario, objective, start, opts) for cfg in configs]
    if opts.workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            return list(pool.map(_evaluate, jobs))
    return [_evaluate(job) for job in jobs]


def best_feasible(results):
    """Lowest scalar objective; ties go to the lexicographically smaller config."""
    best = None
    for cfg, sol, _ in results:
        if sol is None:
            continue
        if best is None or sol.scalar < best.scalar - 1e-12 or (
            abs(sol.scalar - best.scalar) <= 1e-12 and _config_key(sol.config) < _config_key(best.config)
        ):
            best = sol
    return best


def _neighbors(model):
    """Links sharing an endpoint with each link, and nodes joined to each node."""
    at = {}
    for j in range(model.n_links):
        for end in model.endpoints(j):
            at.setdefault(end, []).append(j)
    link_nb = [sorted({k for end in model.endpoints(j) for k in at[end]} - {j}) for j in range(model.n_links)]
    node_nb = [set() for _ in range(model.n_nodes)]
    for j in range(model.n_links):
        (ka, ia), (kb, ib) = model.endpoints(j)
        if ka == kb == "node":
            node_nb[ia].add(ib)
            node_nb[ib].add(ia)
    return link_nb, [sorted(s) for s in node_nb]


def _swap_moves(work, config):
    """Configs that move one valve to an adjacent candidate location (both directions for a moved PCV)."""
    link_nb, node_nb = _neighbors(work)
    links = [work.link_index[j] for j in config.pcv_links]
    nodes = [work.node_index[i] for i in config.afv_nodes]
    out = []
    for k, j in enumerate(links):
        for j2 in link_nb[j]:
            if j2 in links or not work.pcv_candidates[j2]:
                continue
            ids = list(config.pcv_links)
            ids[k] = work.links[j2].id
            for d in (1, -1):
                dirs = list(config.directions)
                dirs[k] = d
                out.append(ValveConfig(tuple(ids), tuple(dirs), config.afv_nodes).canonical(work))
    for k, i in enumerate(nodes):
        for i2 in node_nb[i]:
            if i2 in nodes or not work.afv_candidates[i2]:
                continue
            ids = list(config.afv_nodes)
            ids[k] = work.nodes[i2].id
            out.append(ValveConfig(config.pcv_links, config.directions, tuple(ids)).canonical(work))
    return out


def _solve_fixed(args):
    cfg, model, scenario, objective, start, opts = args
    try:
        return cfg, solve_vc_nlp(model, scenario, cfg, objective, start, opts.scp), None
    except InfeasibleError as exc:
        return cfg, None, exc.report
    except ConvergenceError as exc:
        return cfg, None, {"constraint": "hydraulic convergence", "step": exc.step}


def local_search(model, scenario, incumbent, objective=None, start=None, options=None, work=None):
    """Best-improvement search over single adjacent-location valve moves.

    ``work`` carries the candidate sets (defaults to ``model``). Returns the
    improved :class:`ControlSolution` and a log of evaluated configs.
    """
    opts = options or PlacementOptions()
    objective = objective or Objective("azp")
    work = work or model
    best = incumbent
    seen = {_config_key(best.config)}
    log = []
    for _ in range(opts.local_search):
        moves = [c for c in _swap_moves(work, best.config) if _config_key(c) not in seen]
        seen.update(_config_key(c) for c in moves)
        results = [_solve_fixed((c, model, scenario, objective, start, opts)) for c in moves]
        log.extend(results)
        cand = best_feasible(results)
        if cand is None or cand.scalar >= best.scalar - 1e-9 * max(1.0, abs(best.scalar)):
            break
        best = cand
    return best, log


def solve_vp_minlp(model, scenario, n_v, n_f, objective=None, options=None, fixed_pcvs=None):
    """Valve placement and control by relaxation, optional OBBT, randomized rounding and local polish.

    ``fixed_pcvs`` (link ids) pins the PCV locations so only the AFVs are
    placed. The gap compares the QA-model objective of the incumbent with
    the relaxation bound.
    """
    objective = objective or Objective("azp")
    opts = options or PlacementOptions()
    if opts.trials < 1:
        raise ValidationError("trials must be >= 1")
    work = model
    if fixed_pcvs is not None:
        if len(fixed_pcvs) != n_v:
            raise ValidationError("fixed_pcvs must list exactly n_v links")
        work = model.with_candidates(pcv_links=list(fixed_pcvs))
    rel = build_relaxation(work, scenario, n_v, n_f, objective, opts.n_cuts, opts.n_pieces)
    sol = rel.solve()
    bound = sol.bound
    bounds = scenario.bounds
    if opts.obbt_rounds > 0 and n_v > 0:
        bounds = obbt(rel, opts.obbt_rounds, opts.obbt_fraction, solution=sol)
        rel = build_relaxation(work, scenario.with_bounds(bounds), n_v, n_f, objective, opts.n_cuts, opts.n_pieces)
        sol = rel.solve()
        bound = max(bound, sol.bound)
    configs = randomized_rounding(work, sol, n_v, n_f, opts.trials, opts.seed, opts.trials * opts.draw_factor)
    if opts.include_top:
        top = top_config(work, sol.z, sol.y, n_v, n_f)
        configs = [top] + [c for c in configs if c != top]
    results = evaluate_candidates(model, scenario, configs, objective, sol.settings(), opts)
    best = best_feasible(results)
    if best is not None and opts.local_search > 0 and n_v + n_f > 0:
        ranked = sorted((r for r in results if r[1] is not None), key=lambda r: (r[1].scalar, _config_key(r[1].config)))
        extra = []
        for _, start_sol, _ in ranked[: opts.search_starts]:
            found, log = local_search(model, scenario, start_sol, objective, sol.settings(), opts, work)
            extra += log
            best = best_feasible([(None, best, None), (None, found, None)])
        results = results + extra
    log = tuple(
        (cfg.config_id, list(cfg.pcv_links), list(cfg.afv_nodes), float("nan") if s is None else s.scalar)
        for cfg, s, _ in results
    )
    if best is None:
        raise InfeasibleError(
            f"all {len(results)} candidate placements are infeasible",
            report={"stage": "placement", "candidates": [
                {"config": cfg.to_dict(), "report": rep} for cfg, _, rep in results
            ]},
        )
    gap = (best.qa_scalar - bound) / max(abs(bound), 1e-9)
    config = best.config
    return PlacementSolution(config, best, bound, gap, log, sol, bounds)
