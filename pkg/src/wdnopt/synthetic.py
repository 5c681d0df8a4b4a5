"""Deterministic synthetic test networks.

Networks are planar: a minimum spanning tree over a Delaunay triangulation
plus the shortest extra edges to close loops. Diameters are sized from the
tree flows, and source heads are shifted so the smallest pressure at peak
demand hits a target.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import Delaunay

from .hydraulics import solve_timestep
from .network import Link, Node, Source, Times, assemble_network

DIAMETERS_MM = (80, 100, 150, 200, 250, 300, 400, 500, 600, 800)

# hourly diurnal demand multipliers, mean 1
DIURNAL_24 = np.array([
    0.55, 0.50, 0.48, 0.48, 0.52, 0.65, 0.95, 1.35, 1.55, 1.45, 1.25, 1.15,
    1.10, 1.05, 1.00, 1.00, 1.05, 1.20, 1.40, 1.45, 1.30, 1.05, 0.80, 0.65,
])


def diurnal_pattern(n_steps):
    """Diurnal multipliers resampled to ``n_steps`` equal steps over a day."""
    if n_steps == 24:
        return DIURNAL_24.copy()
    t = (np.arange(n_steps) + 0.5) * 24.0 / n_steps
    ext = np.concatenate([DIURNAL_24, DIURNAL_24[:1]])
    return np.interp(t - 0.5, np.arange(25), ext, period=24)


def random_network(
    n_junctions,
    n_links,
    n_sources=1,
    seed=0,
    n_steps=24,
    spacing=150.0,
    design_velocity=0.35,
    min_pressure=22.0,
    total_demand=None,
    hw_range=(100.0, 130.0),
    title=None,
):
    """Build a looped network with the requested element counts.

    ``n_links`` must be at least ``n_junctions + n_sources - 1`` (a spanning
    tree); each additional link closes one loop.
    """
    rng = np.random.default_rng(seed)
    n_all = n_junctions + n_sources
    if n_links < n_all - 1:
        raise ValueError("n_links too small for a connected network")
    side = spacing * np.sqrt(n_junctions)
    pts = rng.uniform(0.0, side, size=(n_junctions, 2))
    # sources on the boundary
    angles = 2 * np.pi * (np.arange(n_sources) + rng.uniform(0, 1)) / n_sources
    src = side / 2 + 0.55 * side * np.column_stack([np.cos(angles), np.sin(angles)])
    allpts = np.vstack([pts, src])
    edges = _delaunay_edges(allpts) if n_all >= 4 else _complete_edges(n_all)
    is_src = np.arange(n_all) >= n_junctions
    edges = [(a, b) for a, b in edges if not (is_src[a] and is_src[b])]
    dist = {e: float(np.linalg.norm(allpts[e[0]] - allpts[e[1]])) for e in edges}
    rows = [a for a, _ in edges]
    cols = [b for _, b in edges]
    w = coo_matrix(([dist[e] for e in edges], (rows, cols)), shape=(n_all, n_all))
    mst = minimum_spanning_tree(w).tocoo()
    tree = sorted({(min(a, b), max(a, b)) for a, b in zip(mst.row, mst.col)})
    if len(tree) != n_all - 1:
        raise ValueError("triangulation did not yield a spanning tree")
    rest = sorted((e for e in edges if e not in set(tree)), key=lambda e: dist[e])
    n_extra = n_links - len(tree)
    if n_extra > len(rest):
        raise ValueError("not enough candidate edges for the requested loop count")
    # favour short edges but keep some spread
    pool = rest[: max(n_extra, int(1.6 * n_extra) + 1)]
    pick = rng.choice(len(pool), size=n_extra, replace=False) if n_extra else []
    extra = sorted(pool[k] for k in pick)
    chosen = tree + extra

    elev = 30.0 + 12.0 * np.sin(pts[:, 0] / side * np.pi) * np.cos(pts[:, 1] / side * 1.3) + rng.normal(0, 2.0, n_junctions)
    base = rng.lognormal(0.0, 0.6, n_junctions)
    if total_demand is None:
        total_demand = 0.0008 * n_junctions
    base *= total_demand / base.sum()
    peak = max(DIURNAL_24)

    # diameters from tree flows at peak demand
    flow = _tree_flows(n_junctions, n_sources, tree, base * peak)
    diam = {}
    share = total_demand * peak / n_sources
    for e in chosen:
        f = abs(flow.get(e, 0.0))
        if e not in flow:
            f = 0.5 * np.median([abs(v) for v in flow.values()])
        if is_src[e[0]] or is_src[e[1]]:
            # source mains carry an even share of the supply
            f = share
        diam[e] = _pick_diameter(f, design_velocity)

    names = [f"J{i + 1}" for i in range(n_junctions)] + [f"R{k + 1}" for k in range(n_sources)]
    junctions = [Node(names[i], round(float(elev[i]), 2), float(base[i]), "1") for i in range(n_junctions)]
    links = []
    for k, (a, b) in enumerate(chosen):
        if is_src[b]:
            a, b = b, a
        length = max(10.0, dist[(min(a, b), max(a, b))] * rng.uniform(1.0, 1.25))
        c = float(np.round(rng.uniform(*hw_range)))
        links.append(Link(f"P{k + 1}", names[a], names[b], round(length, 1), diam[(min(a, b), max(a, b))] / 1000.0, c))
    offsets = rng.uniform(-0.5, 0.5, n_sources)
    heads = elev.max() + 30.0 + offsets
    sources = [Source(names[n_junctions + k], float(heads[k])) for k in range(n_sources)]
    pattern = diurnal_pattern(n_steps)
    step_s = 86400.0 / n_steps
    times = Times(duration_s=step_s * n_steps, hydraulic_step_s=step_s, pattern_step_s=step_s)
    model = assemble_network(junctions, sources, links, {"1": pattern}, times, title or f"synthetic-{seed}")

    # upsize links running faster than 1.5 m/s at peak, then set heads
    for _ in range(6):
        st = solve_timestep(model, model.base_demand * pattern.max(), [s.head for s in model.sources])
        vel = np.abs(st.q) / model.area
        fast = np.flatnonzero(vel > 1.5)
        if not len(fast):
            break
        links = list(model.links)
        for j in fast:
            d = links[j].diameter * 1000
            bigger = [x for x in DIAMETERS_MM if x > d]
            if bigger:
                links[j] = Link(links[j].id, links[j].from_node, links[j].to_node, links[j].length, bigger[0] / 1000.0, links[j].hw_coeff)
        model = assemble_network(list(model.nodes), list(model.sources), [
            Link(l.id, l.from_node, l.to_node, l.length, l.diameter, l.hw_coeff) for l in links
        ], {"1": pattern}, times, model.title)
    st = solve_timestep(model, model.base_demand * pattern.max(), [s.head for s in model.sources])
    shift = min_pressure - float(np.min(st.h - model.elevation))
    sources = [Source(s.id, round(s.head + shift, 2)) for s in model.sources]
    return assemble_network(list(model.nodes), sources, [
        Link(l.id, l.from_node, l.to_node, l.length, l.diameter, l.hw_coeff) for l in model.links
    ], {"1": pattern}, times, model.title)


def _delaunay_edges(pts):
    tri = Delaunay(pts)
    edges = set()
    for s in tri.simplices:
        for i in range(3):
            a, b = int(s[i]), int(s[(i + 1) % 3])
            edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def _complete_edges(n):
    return [(a, b) for a in range(n) for b in range(a + 1, n)]


def _tree_flows(n_junctions, n_sources, tree, demand):
    """Flows on tree edges (keyed ``(min, max)``) when every junction draws from the tree."""
    n_all = n_junctions + n_sources
    adj = [[] for _ in range(n_all)]
    for a, b in tree:
        adj[a].append(b)
        adj[b].append(a)
    parent = [-1] * n_all
    order = []
    seen = [False] * n_all
    stack = list(range(n_junctions, n_all))
    for s in stack:
        seen[s] = True
    while stack:
        u = stack.pop()
        order.append(u)
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                stack.append(v)
    sub = np.zeros(n_all)
    sub[:n_junctions] = demand
    flows = {}
    for u in reversed(order):
        p = parent[u]
        if p >= 0:
            flows[(min(u, p), max(u, p))] = sub[u]
            sub[p] += sub[u]
    return flows


def _pick_diameter(flow, velocity):
    for d in DIAMETERS_MM:
        if flow <= velocity * np.pi * (d / 1000.0) ** 2 / 4.0:
            return d
    return DIAMETERS_MM[-1]


TOY_SPECS = {
    "toy_a": dict(n_junctions=5, n_links=7, n_sources=1, seed=11, n_steps=3, total_demand=0.012),
    "toy_b": dict(n_junctions=6, n_links=8, n_sources=2, seed=23, n_steps=4, total_demand=0.015),
    "toy_c": dict(n_junctions=6, n_links=8, n_sources=1, seed=37, n_steps=2, total_demand=0.010),
}


def toy_network(name):
    """One of the small enumeration-sized networks in :data:`TOY_SPECS`."""
    return random_network(**TOY_SPECS[name], title=name)


def looped_network(seed=5):
    """Medium looped network sized like a transmission benchmark (268/317/4)."""
    return random_network(268, 317, 4, seed=seed, n_steps=24, total_demand=0.40, design_velocity=0.6,
                          title="looped-268")


def branched_network(seed=9, n_steps=96):
    """Mostly branched network over 15-minute steps."""
    return random_network(150, 156, 2, seed=seed, n_steps=n_steps, total_demand=0.06, title="branched-150")
