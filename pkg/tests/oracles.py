"""Brute-force references used by the tests."""

from __future__ import annotations

import itertools

import numpy as np

from wdnopt.control import ValveConfig, enumerate_directions
from wdnopt.errors import ConvergenceError, InfeasibleError
from wdnopt.placement import best_feasible


def enumerate_placements(model, scenario, n_v, n_f, objective, options=None):
    """Best VC-NLP polish over every placement and direction assignment.

    Returns ``(best ControlSolution, list of (config, scalar or nan))``.
    """
    links = [l.id for l in model.links if l.is_pcv_candidate]
    nodes = [n.id for n in model.nodes if n.is_afv_candidate]
    results, log = [], []
    for pl in itertools.combinations(links, n_v):
        for nd in itertools.combinations(nodes, n_f):
            cfg = ValveConfig(pl, (), nd).canonical(model)
            try:
                sol = enumerate_directions(cfg, model, scenario, objective, None, options)
            except (InfeasibleError, ConvergenceError):
                sol = None
            results.append((cfg, sol, None))
            log.append((cfg, float("nan") if sol is None else sol.scalar))
    return best_feasible(results), log


def dominated_mask(f1, f2):
    """O(n^2) weak dominance with both objectives minimized; duplicates keep the first."""
    f1, f2 = np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)
    n = len(f1)
    out = np.zeros(n, dtype=bool)
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            if f1[k] <= f1[i] and f2[k] <= f2[i]:
                if f1[k] < f1[i] or f2[k] < f2[i] or k < i:
                    out[i] = True
                    break
    return out
