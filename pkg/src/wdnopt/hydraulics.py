"""Steady-state hydraulics per time step with a null-space Newton method.

Flows are split as ``q = q0 + Z w`` where ``q0`` satisfies mass balance on a
spanning tree rooted at the sources and the columns of ``Z`` are the
fundamental loops of the cotree links. Newton's method then runs on the loop
energy equations only, and heads are recovered from the tree rows.
"""

from __future__ import annotations

import weakref
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import ConvergenceError, StructuralError, ValidationError
from .network import head_loss_values

REG_EPS = 1e-6
ENERGY_TOL = 1e-6
MASS_TOL = 1e-8
MAX_ITER = 50
MAX_HALVINGS = 10


def head_loss(model, q, mode="hw"):
    """Return ``(phi(q), dphi/dq)`` for flows shaped ``(n_links,)``."""
    if mode == "qa":
        return kernels.qa_phi(q, model.qa_a, model.qa_b)
    if mode == "hw":
        return kernels.hw_phi(q, model.resistance, model.exponent, REG_EPS)
    raise ValueError(f"unknown head-loss mode {mode!r}")


@dataclass(frozen=True, eq=False)
class ControlSettings:
    """PCV head losses ``eta`` (n_t x n_links) and AFV flushing ``alpha`` (n_t x n_nodes)."""

    eta: np.ndarray
    alpha: np.ndarray

    @classmethod
    def zeros(cls, model, n_t):
        return cls(np.zeros((n_t, model.n_links)), np.zeros((n_t, model.n_nodes)))

    @property
    def n_t(self):
        return self.eta.shape[0]

    def subset(self, steps):
        return ControlSettings(self.eta[steps], self.alpha[steps])


@dataclass(frozen=True, eq=False)
class StepState:
    q: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    dphi: np.ndarray
    residual_energy: float
    residual_mass: float
    iterations: int
    mode: str
    jac: object = None


@dataclass(frozen=True, eq=False)
class HydraulicState:
    """Flows, heads and head losses for every step of a horizon."""

    q: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    residual_energy: np.ndarray
    residual_mass: np.ndarray
    iterations: np.ndarray
    mode: str = "hw"

    @property
    def n_t(self):
        return self.q.shape[0]

    @classmethod
    def stack(cls, steps, mode):
        return cls(
            q=np.array([s.q for s in steps]),
            h=np.array([s.h for s in steps]),
            theta=np.array([s.theta for s in steps]),
            residual_energy=np.array([s.residual_energy for s in steps]),
            residual_mass=np.array([s.residual_mass for s in steps]),
            iterations=np.array([s.iterations for s in steps]),
            mode=mode,
        )


class NullSpaceSolver:
    """Loop basis and tree factorization for one network, reused across steps."""

    def __init__(self, model):
        self.model = model
        n_n, n_p = model.n_nodes, model.n_links
        tree = self._spanning_tree(model)
        if len(tree) != n_n:
            raise StructuralError("no spanning tree reaches every junction from a source")
        in_tree = np.zeros(n_p, dtype=bool)
        in_tree[tree] = True
        self.tree = np.array(tree, dtype=int)
        self.cotree = np.flatnonzero(~in_tree)
        a12 = model.a12.tocsr()
        self.a12 = a12
        self.a10 = model.a10.tocsr()
        a12_t = a12[self.tree].tocsc()
        try:
            self.lu = spla.splu(a12_t)
        except RuntimeError as exc:
            raise StructuralError(f"singular tree incidence matrix: {exc}") from exc
        n_c = len(self.cotree)
        self.n_loops = n_c
        z = np.zeros((n_p, n_c))
        if n_c:
            a12_c = a12[self.cotree].toarray()
            z[self.tree] = -self.lu.solve(a12_c.T, trans="T")
            z[self.cotree, np.arange(n_c)] = 1.0
            z[np.abs(z) < 1e-12] = 0.0
        self.z = z

    @staticmethod
    def _spanning_tree(model):
        adj = [[] for _ in range(model.n_nodes)]
        root_links = []
        for j in range(model.n_links):
            (ka, ia), (kb, ib) = model.endpoints(j)
            if ka == "node" and kb == "node":
                adj[ia].append((ib, j))
                adj[ib].append((ia, j))
            elif ka == "node":
                root_links.append((ia, j))
            elif kb == "node":
                root_links.append((ib, j))
        seen = np.zeros(model.n_nodes, dtype=bool)
        tree = []
        queue = deque()
        for i, j in root_links:
            if not seen[i]:
                seen[i] = True
                tree.append(j)
                queue.append(i)
        while queue:
            u = queue.popleft()
            for v, j in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    tree.append(j)
                    queue.append(v)
        return tree

    def particular_flow(self, nodal_outflow):
        """Tree flows meeting ``A12^T q = nodal_outflow`` with cotree flows zero."""
        q0 = np.zeros(self.model.n_links)
        q0[self.tree] = self.lu.solve(np.asarray(nodal_outflow, dtype=float), trans="T")
        return q0

    def heads(self, link_rhs):
        """Heads from the tree energy rows ``A12_T h = -link_rhs_T``."""
        return self.lu.solve(-np.asarray(link_rhs, dtype=float)[self.tree])

    def solve(self, demand, source_head, eta=None, alpha=None, mode="hw", q_start=None,
              tol=ENERGY_TOL * 1e-2, max_iter=MAX_ITER):
        model = self.model
        demand = np.asarray(demand, dtype=float)
        if demand.shape != (model.n_nodes,):
            raise ValidationError(f"demand vector must have {model.n_nodes} entries")
        if np.any(demand < 0):
            raise ValidationError("demands must be nonnegative")
        eta = np.zeros(model.n_links) if eta is None else np.asarray(eta, dtype=float)
        alpha = np.zeros(model.n_nodes) if alpha is None else np.asarray(alpha, dtype=float)
        h0 = np.atleast_1d(np.asarray(source_head, dtype=float))
        const = self.a10 @ h0 + eta
        q0 = self.particular_flow(demand + alpha)
        z = self.z
        w = np.zeros(self.n_loops) if q_start is None else np.asarray(q_start, dtype=float)[self.cotree].copy()

        def evaluate(wv):
            qv = q0 + z @ wv
            phi, dphi = head_loss(model, qv, mode)
            return qv, phi, dphi, z.T @ (phi + const)

        q, phi, dphi, f = evaluate(w)
        merit = float(f @ f)
        it = 0
        jac = None
        while self.n_loops and np.max(np.abs(f)) > tol:
            if it >= max_iter:
                raise ConvergenceError(
                    f"Newton did not converge in {max_iter} iterations (loop residual {np.max(np.abs(f)):.3e} m)",
                    residual_energy=float(np.max(np.abs(f))), residual_mass=0.0,
                )
            jac = self._factor(dphi)
            dw = -sla.cho_solve(jac, f)
            step = 1.0
            for _ in range(MAX_HALVINGS + 1):
                cand = evaluate(w + step * dw)
                cmerit = float(cand[3] @ cand[3])
                if cmerit < merit:
                    break
                step *= 0.5
            w = w + step * dw
            q, phi, dphi, f = cand
            merit = cmerit
            it += 1
        if self.n_loops:
            jac = self._factor(dphi)
        h = self.heads(phi + const)
        res_e = self.a12 @ h + const + phi
        res_m = self.a12.T @ q - demand - alpha
        return StepState(
            q=q, h=h, theta=phi, dphi=dphi, residual_energy=float(np.max(np.abs(res_e))),
            residual_mass=float(np.max(np.abs(res_m))), iterations=it, mode=mode, jac=jac,
        )

    def _factor(self, dphi):
        jm = self.z.T @ (dphi[:, None] * self.z)
        try:
            return sla.cho_factor(jm, lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise StructuralError(f"singular reduced Jacobian: {exc}") from exc

    def sensitivities(self, state, eta_links=(), alpha_nodes=()):
        """Derivatives of flows and heads w.r.t. PCV losses and AFV flushing.

        Returns ``(dq, dh)`` with one column per control, PCV columns first.
        """
        eta_links = list(eta_links)
        alpha_nodes = list(alpha_nodes)
        n_p, n_n = self.model.n_links, self.model.n_nodes
        m = len(eta_links) + len(alpha_nodes)
        dq = np.zeros((n_p, m))
        rhs_e = np.zeros((n_p, m))
        for k, j in enumerate(eta_links):
            rhs_e[j, k] = 1.0
        for k, i in enumerate(alpha_nodes):
            e = np.zeros(n_n)
            e[i] = 1.0
            dq[:, len(eta_links) + k] = self.particular_flow(e)
        if self.n_loops:
            # loop equations: Z^T (D dq + d_eta) = 0 with dq = dq0 + Z dw
            g = self.z.T @ (state.dphi[:, None] * dq + rhs_e)
            dw = -sla.cho_solve(state.jac, g)
            dq = dq + self.z @ dw
        dh = np.zeros((n_n, m))
        if m:
            rhs = state.dphi[:, None] * dq + rhs_e
            dh = -self.lu.solve(rhs[self.tree])
        return dq, dh


_SOLVERS = weakref.WeakKeyDictionary()


def solver_for(model):
    """Cached :class:`NullSpaceSolver` for a model (topology is time-invariant)."""
    s = _SOLVERS.get(model)
    if s is None:
        s = NullSpaceSolver(model)
        _SOLVERS[model] = s
    return s


def solve_timestep(model, demand, source_head, eta=None, alpha=None, mode="hw", q_start=None):
    """Solve one steady state; returns a :class:`StepState`."""
    state = solver_for(model).solve(demand, source_head, eta, alpha, mode=mode, q_start=q_start)
    if state.residual_energy > ENERGY_TOL or state.residual_mass > MASS_TOL:
        raise ConvergenceError(
            f"residuals above tolerance (energy {state.residual_energy:.2e} m, mass {state.residual_mass:.2e} m3/s)",
            state.residual_energy, state.residual_mass,
        )
    return state


def solve_steps(model, scenario, settings=None, mode="hw", q_start=None):
    """Per-step :class:`StepState` list (kept for sensitivity evaluation)."""
    n_t = scenario.n_t
    if settings is None:
        settings = ControlSettings.zeros(model, n_t)
    if settings.eta.shape != (n_t, model.n_links) or settings.alpha.shape != (n_t, model.n_nodes):
        raise ValidationError("control settings do not match the scenario dimensions")
    out = []
    for t in range(n_t):
        try:
            out.append(
                solve_timestep(
                    model, scenario.demands[t], scenario.source_heads[t], settings.eta[t], settings.alpha[t],
                    mode=mode, q_start=None if q_start is None else q_start[t],
                )
            )
        except ConvergenceError as exc:
            exc.step = t
            exc.args = (f"step {t}: {exc.args[0]}",)
            raise
    return out


def solve_eps(model, scenario, settings=None, mode="hw", q_start=None):
    """Extended-period simulation as independent per-step solves."""
    return HydraulicState.stack(solve_steps(model, scenario, settings, mode, q_start), mode)


def residual_report(model, state, scenario, settings=None):
    """Recompute energy and mass residual infinity-norms per step from scratch.

    Head losses are re-evaluated from the flows with the state's head-loss
    model, so the check does not trust ``state.theta``. Returns ``(energy [m], mass [m^3/s])`` arrays of length ``n_t``.
    """
    n_t = scenario.n_t
    if settings is None:
        settings = ControlSettings.zeros(model, n_t)
    if state.q.shape != (n_t, model.n_links) or state.h.shape != (n_t, model.n_nodes):
        raise ValidationError("state dimensions do not match the scenario")
    a12 = model.a12.toarray()
    a10 = model.a10.toarray()
    energy = np.zeros(n_t)
    mass = np.zeros(n_t)
    for t in range(n_t):
        theta = head_loss_values(model, state.q[t], state.mode)
        e = a12 @ state.h[t] + a10 @ scenario.source_heads[t] + theta + settings.eta[t]
        m = a12.T @ state.q[t] - scenario.demands[t] - settings.alpha[t]
        energy[t] = np.max(np.abs(e)) if e.size else 0.0
        mass[t] = np.max(np.abs(m)) if m.size else 0.0
    return energy, mass
