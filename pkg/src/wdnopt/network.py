"""Network graph model, head-loss coefficients and variable bounds.

All quantities are SI: flows in m^3/s, heads and lengths in m.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls

from .errors import (
    DanglingReferenceError,
    DisconnectedNetworkError,
    DomainError,
    ValidationError,
)

G = 9.81
HW_EXPONENT = 1.852
VALVE_EXPONENT = 2.0

DEFAULT_U_MAX = 2.0
DEFAULT_U_MIN = 0.2
DEFAULT_REGULATORY_HEAD = 15.0
DEFAULT_ALPHA_MAX = 0.025
QA_FIT_POINTS = 200
QA_CHECK_POINTS = 1000
QA_EPS = 1e-6


def hw_resistance(length, hw_coeff, diameter):
    """Hazen-Williams resistance ``10.67 L / (C^1.852 D^4.871)``."""
    if length <= 0 or hw_coeff <= 0 or diameter <= 0:
        raise DomainError(
            f"hw_resistance needs positive arguments, got L={length}, C={hw_coeff}, D={diameter}"
        )
    return 10.67 * length / (hw_coeff**HW_EXPONENT * diameter**4.871)


def valve_resistance(loss_coeff, diameter):
    """Local-loss resistance ``8K / (g pi^2 D^4)`` of a valve link."""
    if diameter <= 0:
        raise DomainError(f"valve_resistance needs a positive diameter, got {diameter}")
    if loss_coeff < 0:
        raise DomainError(f"valve loss coefficient must be >= 0, got {loss_coeff}")
    return 8.0 * loss_coeff / (G * math.pi**2 * diameter**4)


@dataclass(frozen=True)
class QAFit:
    """Quadratic approximation ``q (a|q| + b)`` and its error over the fit domain."""

    a: float
    b: float
    q_lo: float
    q_hi: float
    max_rel_error: float
    max_abs_error: float
    max_range_rel_error: float


def qa_fit_errors(resistance, exponent, a, b, q_lo, q_hi, n_points=QA_CHECK_POINTS, eps=QA_EPS):
    """Return ``(max pointwise relative, max absolute [m], max range-relative)`` errors.

    Pointwise relative error is ``|qa - hw| / max(|hw|, eps)`` on a uniform grid;
    range-relative error divides by the largest ``|hw|`` on the grid instead.
    """
    q = np.linspace(q_lo, q_hi, n_points)
    exact = resistance * np.abs(q) ** (exponent - 1.0) * q
    approx = q * (a * np.abs(q) + b)
    err = np.abs(approx - exact)
    rel = err / np.maximum(np.abs(exact), eps)
    scale = max(float(np.max(np.abs(exact))), eps)
    return float(rel.max()), float(err.max()), float(err.max() / scale)


def fit_quadratic(link, q_lo, q_hi, n_points=QA_FIT_POINTS):
    """Least-squares fit of ``q (a|q| + b)`` to the link's head-loss curve.

    The fit minimizes absolute head-loss error on a uniform grid with
    ``a, b >= 0`` (non-negative least squares). Links whose exponent is already
    2 are represented exactly with ``a = r, b = 0``.
    """
    if not q_hi > q_lo:
        raise DomainError(f"degenerate QA fit domain [{q_lo}, {q_hi}] for link {link.id}")
    r, n = link.resistance, link.loss_exponent
    if n == VALVE_EXPONENT:
        a, b = r, 0.0
    else:
        q = np.linspace(q_lo, q_hi, n_points)
        target = r * np.abs(q) ** (n - 1.0) * q
        design = np.column_stack([q * np.abs(q), q])
        # column scaling keeps nnls well conditioned for tiny flows
        scale = np.maximum(np.abs(design).max(axis=0), 1e-300)
        coef, _ = nnls(design / scale, target)
        a, b = (coef / scale).tolist()
    rel, abs_err, range_rel = qa_fit_errors(r, n, a, b, q_lo, q_hi)
    return QAFit(a, b, float(q_lo), float(q_hi), rel, abs_err, range_rel)


@dataclass(frozen=True)
class Node:
    id: str
    elevation: float
    base_demand: float = 0.0
    pattern: str | None = None
    azp_weight: float = 0.0
    is_afv_candidate: bool = True


@dataclass(frozen=True)
class Source:
    id: str
    head: float
    pattern: str | None = None


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length: float
    diameter: float
    hw_coeff: float = 100.0
    kind: str = "pipe"
    loss_coeff: float = 0.0
    loss_exponent: float = HW_EXPONENT
    resistance: float = 0.0
    qa_coeffs: tuple[float, float] = (0.0, 0.0)
    qa_fit: QAFit | None = None
    area: float = 0.0
    scc_weight: float = 0.0
    u_min: float = DEFAULT_U_MIN
    u_max: float = DEFAULT_U_MAX
    is_pcv_candidate: bool = True


@dataclass(frozen=True)
class Times:
    duration_s: float = 0.0
    hydraulic_step_s: float = 3600.0
    pattern_step_s: float = 3600.0


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable directed graph of junctions, links and fixed-head sources."""

    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    sources: tuple[Source, ...]
    patterns: Mapping[str, np.ndarray] = field(default_factory=dict)
    times: Times = Times()
    title: str = ""

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_sources(self):
        return len(self.sources)

    @cached_property
    def node_index(self):
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def source_index(self):
        return {s.id: i for i, s in enumerate(self.sources)}

    @cached_property
    def link_index(self):
        return {l.id: j for j, l in enumerate(self.links)}

    @cached_property
    def _incidence(self):
        rows12, cols12, vals12, rows10, cols10, vals10 = [], [], [], [], [], []
        for j, link in enumerate(self.links):
            for node_id, sign in ((link.from_node, -1.0), (link.to_node, 1.0)):
                if node_id in self.node_index:
                    rows12.append(j)
                    cols12.append(self.node_index[node_id])
                    vals12.append(sign)
                else:
                    rows10.append(j)
                    cols10.append(self.source_index[node_id])
                    vals10.append(sign)
        a12 = sp.csr_matrix((vals12, (rows12, cols12)), shape=(self.n_links, self.n_nodes))
        a10 = sp.csr_matrix((vals10, (rows10, cols10)), shape=(self.n_links, self.n_sources))
        return a12, a10

    @property
    def a12(self):
        return self._incidence[0]

    @property
    def a10(self):
        return self._incidence[1]

    @cached_property
    def total_length(self):
        return float(sum(l.length for l in self.links))

    def _link_array(self, attr):
        return np.array([getattr(l, attr) for l in self.links], dtype=float)

    @cached_property
    def length(self):
        return self._link_array("length")

    @cached_property
    def diameter(self):
        return self._link_array("diameter")

    @cached_property
    def area(self):
        return self._link_array("area")

    @cached_property
    def resistance(self):
        return self._link_array("resistance")

    @cached_property
    def exponent(self):
        return self._link_array("loss_exponent")

    @cached_property
    def qa_a(self):
        return np.array([l.qa_coeffs[0] for l in self.links])

    @cached_property
    def qa_b(self):
        return np.array([l.qa_coeffs[1] for l in self.links])

    @cached_property
    def scc_weight(self):
        return self._link_array("scc_weight")

    @cached_property
    def u_min(self):
        return self._link_array("u_min")

    @cached_property
    def u_max(self):
        return self._link_array("u_max")

    @cached_property
    def elevation(self):
        return np.array([n.elevation for n in self.nodes], dtype=float)

    @cached_property
    def azp_weight(self):
        return np.array([n.azp_weight for n in self.nodes], dtype=float)

    @cached_property
    def base_demand(self):
        return np.array([n.base_demand for n in self.nodes], dtype=float)

    @cached_property
    def pcv_candidates(self):
        return np.array([l.is_pcv_candidate for l in self.links], dtype=bool)

    @cached_property
    def afv_candidates(self):
        return np.array([n.is_afv_candidate for n in self.nodes], dtype=bool)

    def endpoints(self, j):
        """``(from, to)`` as ``("node"|"source", index)`` pairs for link ``j``."""
        out = []
        for node_id in (self.links[j].from_node, self.links[j].to_node):
            if node_id in self.node_index:
                out.append(("node", self.node_index[node_id]))
            else:
                out.append(("source", self.source_index[node_id]))
        return tuple(out)

    def with_candidates(self, pcv_links=None, afv_nodes=None):
        """Copy of the model with restricted PCV/AFV candidate sets (ids)."""
        links, nodes = self.links, self.nodes
        if pcv_links is not None:
            allowed = set(pcv_links)
            unknown = allowed - set(self.link_index)
            if unknown:
                raise DanglingReferenceError(f"unknown PCV candidate link(s): {sorted(unknown)}", sorted(unknown)[0])
            links = tuple(dataclasses.replace(l, is_pcv_candidate=l.id in allowed) for l in links)
        if afv_nodes is not None:
            allowed = set(afv_nodes)
            unknown = allowed - set(self.node_index)
            if unknown:
                raise DanglingReferenceError(f"unknown AFV candidate node(s): {sorted(unknown)}", sorted(unknown)[0])
            nodes = tuple(dataclasses.replace(n, is_afv_candidate=n.id in allowed) for n in nodes)
        return dataclasses.replace(self, links=links, nodes=nodes)

    def refit_qa(self, q_lo, q_hi):
        """Copy of the model with QA coefficients refitted over per-link domains."""
        links = []
        for j, link in enumerate(self.links):
            fit = fit_quadratic(link, float(q_lo[j]), float(q_hi[j]))
            links.append(dataclasses.replace(link, qa_coeffs=(fit.a, fit.b), qa_fit=fit))
        return dataclasses.replace(self, links=tuple(links))


def assemble_network(
    junctions: Sequence[Node],
    sources: Sequence[Source],
    links: Sequence[Link],
    patterns: Mapping[str, Iterable[float]] | None = None,
    times: Times | None = None,
    title: str = "",
    u_max: float = DEFAULT_U_MAX,
    u_min: float = DEFAULT_U_MIN,
) -> NetworkModel:
    """Validate raw elements and derive resistances, weights and QA fits.

    ``links`` carry geometry (length, diameter, hw_coeff or loss_coeff for
    valves); derived fields are overwritten.
    """
    if not junctions:
        raise ValidationError("network has no junctions")
    if not sources:
        raise ValidationError("network has no sources (reservoirs)")
    if not links:
        raise ValidationError("network has no links")
    ids = {}
    for kind, items in (("junction", junctions), ("source", sources)):
        for item in items:
            if item.id in ids:
                raise ValidationError(f"duplicate node id {item.id!r}", item.id)
            ids[item.id] = kind
    seen_links = set()
    for link in links:
        if link.id in seen_links:
            raise ValidationError(f"duplicate link id {link.id!r}", link.id)
        seen_links.add(link.id)
        for end in (link.from_node, link.to_node):
            if end not in ids:
                raise DanglingReferenceError(f"link {link.id!r} references unknown node {end!r}", end)
        if link.from_node == link.to_node:
            raise ValidationError(f"link {link.id!r} is a self-loop", link.id)
        if link.length <= 0:
            raise ValidationError(f"link {link.id!r} has nonpositive length {link.length}", link.id)
        if link.diameter <= 0:
            raise ValidationError(f"link {link.id!r} has nonpositive diameter {link.diameter}", link.id)
        if link.kind == "pipe" and link.hw_coeff <= 0:
            raise ValidationError(f"pipe {link.id!r} has nonpositive roughness {link.hw_coeff}", link.id)
        if link.kind == "valve" and link.loss_coeff <= 0:
            raise ValidationError(f"valve {link.id!r} needs a positive loss coefficient", link.id)

    _check_connected(ids, links)

    total_length = sum(l.length for l in links)
    incident = {n.id: 0.0 for n in junctions}
    for link in links:
        for end in (link.from_node, link.to_node):
            if end in incident:
                incident[end] += link.length / 2.0
    incident_total = sum(incident.values())
    nodes = tuple(dataclasses.replace(n, azp_weight=incident[n.id] / incident_total) for n in junctions)

    built = []
    for link in links:
        area = math.pi * link.diameter**2 / 4.0
        if link.kind == "valve":
            r, n = valve_resistance(link.loss_coeff, link.diameter), VALVE_EXPONENT
        else:
            r, n = hw_resistance(link.length, link.hw_coeff, link.diameter), HW_EXPONENT
        partial = dataclasses.replace(
            link, resistance=r, loss_exponent=n, area=area,
            scc_weight=link.length / total_length, u_max=u_max, u_min=u_min,
        )
        fit = fit_quadratic(partial, -u_max * area, u_max * area)
        built.append(dataclasses.replace(partial, qa_coeffs=(fit.a, fit.b), qa_fit=fit))

    pats = {k: np.asarray(list(v), dtype=float) for k, v in (patterns or {}).items()}
    return NetworkModel(
        nodes=nodes, links=tuple(built), sources=tuple(sources), patterns=pats,
        times=times or Times(), title=title,
    )


def _check_connected(ids, links):
    adj = {k: [] for k in ids}
    for link in links:
        adj[link.from_node].append(link.to_node)
        adj[link.to_node].append(link.from_node)
    start = next(iter(ids))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    missing = [k for k in ids if k not in seen]
    if missing:
        raise DisconnectedNetworkError(
            f"network is disconnected: {len(missing)} node(s) unreachable, e.g. {missing[0]!r}", missing[0]
        )


@dataclass(frozen=True, eq=False)
class BoundsSet:
    """Per-step variable bounds; arrays are shaped ``(n_t, n_links)`` or ``(n_t, n_nodes)``."""

    q_lo: np.ndarray
    q_hi: np.ndarray
    h_lo: np.ndarray
    h_hi: np.ndarray
    eta_lo: np.ndarray
    eta_hi: np.ndarray
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    alpha_hi: np.ndarray
    u_max: np.ndarray

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def step(self, t):
        return dataclasses.replace(
            self, **{f.name: getattr(self, f.name)[t : t + 1] for f in dataclasses.fields(self) if f.name != "u_max"}
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    """Demands and source heads over ``n_t`` steps plus the variable bounds."""

    demands: np.ndarray
    source_heads: np.ndarray
    bounds: BoundsSet
    step_minutes: float = 60.0
    regulatory_head: float = DEFAULT_REGULATORY_HEAD
    alpha_max: float = DEFAULT_ALPHA_MAX

    def __post_init__(self):
        if self.demands.ndim != 2 or self.demands.shape[0] < 1:
            raise ValidationError("scenario demands must be an (n_t, n_nodes) matrix with n_t >= 1")
        if np.any(self.demands < 0):
            raise ValidationError("scenario demands must be nonnegative")

    @property
    def n_t(self):
        return self.demands.shape[0]

    def subset(self, steps):
        """Scenario restricted to the given (0-based) step indices."""
        steps = np.asarray(steps, dtype=int)
        b = self.bounds
        bounds = dataclasses.replace(
            b, **{f.name: getattr(b, f.name)[steps] for f in dataclasses.fields(b) if f.name != "u_max"}
        )
        return dataclasses.replace(
            self, demands=self.demands[steps], source_heads=self.source_heads[steps], bounds=bounds
        )

    def with_bounds(self, bounds):
        return dataclasses.replace(self, bounds=bounds)


def head_loss_values(model, q, mode="hw"):
    """Head loss ``phi(q)`` for an array of flows shaped ``(..., n_links)``."""
    q = np.asarray(q, dtype=float)
    if mode == "qa":
        return q * (model.qa_a * np.abs(q) + model.qa_b)
    return model.resistance * np.abs(q) ** (model.exponent - 1.0) * q


def derive_bounds(
    model,
    demands,
    source_heads,
    u_max=None,
    alpha_max=DEFAULT_ALPHA_MAX,
    regulatory_head=DEFAULT_REGULATORY_HEAD,
    head_loss="qa",
):
    """Variable bounds for every step.

    Junctions with positive demand in any step get the regulatory pressure
    floor, the rest only their elevation. The head ceiling is the largest
    source head over the horizon.
    """
    demands = np.atleast_2d(np.asarray(demands, dtype=float))
    source_heads = np.atleast_2d(np.asarray(source_heads, dtype=float))
    n_t = demands.shape[0]
    if u_max is None:
        u_max = model.u_max
    u_max = np.broadcast_to(np.asarray(u_max, dtype=float), (model.n_links,)).copy()
    if np.any(u_max <= 0):
        raise DomainError("u_max must be positive")
    if alpha_max < 0:
        raise DomainError("alpha_max must be nonnegative")

    q_hi = np.tile(u_max * model.area, (n_t, 1))
    q_lo = -q_hi
    is_demand = np.any(demands > 0, axis=0)
    h_floor = model.elevation + np.where(is_demand, regulatory_head, 0.0)
    h_lo = np.tile(h_floor, (n_t, 1))
    h_hi = np.full((n_t, model.n_nodes), float(source_heads.max()))
    if np.any(h_lo > h_hi):
        i = int(np.argmax(h_lo[0] - h_hi[0]))
        raise ValidationError(
            f"pressure floor at node {model.nodes[i].id!r} exceeds the largest source head", model.nodes[i].id
        )

    eta_lo = np.zeros((n_t, model.n_links))
    eta_hi = np.zeros((n_t, model.n_links))
    for j in range(model.n_links):
        (ka, ia), (kb, ib) = model.endpoints(j)
        up_max = h_hi[:, ia] if ka == "node" else source_heads[:, ia]
        up_min = h_lo[:, ia] if ka == "node" else source_heads[:, ia]
        dn_max = h_hi[:, ib] if kb == "node" else source_heads[:, ib]
        dn_min = h_lo[:, ib] if kb == "node" else source_heads[:, ib]
        eta_hi[:, j] = np.maximum(up_max - dn_min, 0.0)
        eta_lo[:, j] = np.minimum(-(dn_max - up_min), 0.0)

    theta_lo = head_loss_values(model, q_lo, head_loss)
    theta_hi = head_loss_values(model, q_hi, head_loss)
    alpha_hi = np.tile(np.where(model.afv_candidates, alpha_max, 0.0), (n_t, 1))
    return BoundsSet(q_lo, q_hi, h_lo, h_hi, eta_lo, eta_hi, theta_lo, theta_hi, alpha_hi, u_max)


def pattern_multipliers(model, pattern_id, n_t, step_s):
    """Multiplier per step for a named pattern (1.0 when unnamed)."""
    if pattern_id is None:
        return np.ones(n_t)
    values = model.patterns.get(pattern_id)
    if values is None or len(values) == 0:
        raise DanglingReferenceError(f"unknown pattern {pattern_id!r}", pattern_id)
    pstep = model.times.pattern_step_s or step_s
    idx = (np.arange(n_t) * step_s // pstep).astype(int) % len(values)
    return values[idx]


def build_scenario(
    model,
    n_steps=None,
    step_minutes=None,
    multipliers=None,
    demand_scale=1.0,
    u_max=None,
    alpha_max=DEFAULT_ALPHA_MAX,
    regulatory_head=DEFAULT_REGULATORY_HEAD,
):
    """Scenario from the model's base demands, patterns and time settings.

    ``multipliers`` (one per step) override every junction pattern.
    """
    t = model.times
    step_s = step_minutes * 60.0 if step_minutes else t.hydraulic_step_s or 3600.0
    if n_steps is None:
        if multipliers is not None:
            n_steps = len(multipliers)
        else:
            n_steps = max(1, int(round(t.duration_s / step_s))) if t.duration_s > 0 else 1
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    demands = np.zeros((n_steps, model.n_nodes))
    if multipliers is not None:
        mult = np.asarray(multipliers, dtype=float)
        if mult.shape != (n_steps,):
            raise ValidationError(f"expected {n_steps} multipliers, got {mult.shape}")
        demands[:] = mult[:, None] * model.base_demand[None, :]
    else:
        default_pat = "1" if "1" in model.patterns else None
        for i, node in enumerate(model.nodes):
            pid = node.pattern if node.pattern is not None else default_pat
            demands[:, i] = node.base_demand * pattern_multipliers(model, pid, n_steps, step_s)
    demands *= demand_scale
    if np.any(demands < 0):
        raise ValidationError("negative demands are not supported")
    heads = np.zeros((n_steps, model.n_sources))
    for k, s in enumerate(model.sources):
        heads[:, k] = s.head * pattern_multipliers(model, s.pattern, n_steps, step_s)
    bounds = derive_bounds(model, demands, heads, u_max=u_max, alpha_max=alpha_max, regulatory_head=regulatory_head)
    return Scenario(
        demands=demands, source_heads=heads, bounds=bounds, step_minutes=step_s / 60.0,
        regulatory_head=regulatory_head, alpha_max=alpha_max,
    )
