"""Polyhedral envelopes used by the placement relaxation.

Each envelope is a list of lines ``(slope, intercept)``. Lower envelopes
satisfy ``theta >= slope * q + intercept`` for every line, upper envelopes
``theta <= slope * q + intercept``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

SQRT2M1 = math.sqrt(2.0) - 1.0


def qa_value(q, a, b):
    return q * (a * abs(q) + b)


def qa_slope(q, a, b):
    return 2.0 * a * abs(q) + b


def _tangent(p, a, b):
    s = qa_slope(p, a, b)
    return s, qa_value(p, a, b) - s * p


def _secant(x0, x1, f):
    f0, f1 = f(x0), f(x1)
    s = (f1 - f0) / (x1 - x0)
    return s, f0 - s * x0


def qa_hull(a, b, q_lo, q_hi, n_cuts=6):
    """Outer approximation of the graph of ``q (a|q| + b)`` over ``[q_lo, q_hi]``.

    Returns ``(lower_lines, upper_lines)``. The function is concave for
    ``q < 0`` and convex for ``q > 0``; the lower boundary of the hull is the
    line from the left end tangent at ``c = -q_lo (sqrt 2 - 1)`` followed by
    the convex branch, and symmetrically for the upper boundary.
    """
    if not q_hi > q_lo:
        raise ValueError("empty flow interval")
    f = lambda x: qa_value(x, a, b)  # noqa: E731
    lower, upper = [], []
    if a == 0.0:
        line = (b, 0.0)
        return [line], [line]
    # lower boundary
    if q_lo >= 0.0:
        pts = np.linspace(q_lo, q_hi, n_cuts)
        lower = [_tangent(p, a, b) for p in pts]
    else:
        c = -q_lo * SQRT2M1
        if c >= q_hi:
            lower = [_secant(q_lo, q_hi, f)]
        else:
            lower = [_tangent(p, a, b) for p in np.linspace(c, q_hi, n_cuts)]
    # upper boundary
    if q_hi <= 0.0:
        pts = np.linspace(q_lo, q_hi, n_cuts)
        upper = [_tangent(p, a, b) for p in pts]
    else:
        c = -q_hi * SQRT2M1
        if c <= q_lo:
            upper = [_secant(q_lo, q_hi, f)]
        else:
            upper = [_tangent(p, a, b) for p in np.linspace(q_lo, c, n_cuts)]
    if q_lo >= 0.0:
        upper = [_secant(q_lo, q_hi, f)]
    if q_hi <= 0.0:
        lower = [_secant(q_lo, q_hi, f)]
    return lower, upper


def logistic(u, u_min, rho):
    return expit(rho * (u - u_min))


def sigmoid_upper(u_lo, u_hi, u_min, rho, n_pieces=4):
    """Concave piecewise-linear over-estimator of ``1 / (1 + exp(-rho (u - u_min)))`` on ``[u_lo, u_hi]``.

    The concave envelope of a sigmoid is the line from the left end tangent
    to the concave branch at some ``p >= u_min``, then the curve itself; the
    curve part is covered by tangents.
    """
    if not u_hi > u_lo:
        raise ValueError("empty velocity interval")
    f = lambda x: float(logistic(x, u_min, rho))  # noqa: E731

    def fp(x):
        s = f(x)
        return rho * s * (1.0 - s)

    if u_lo >= u_min:
        pts = np.linspace(u_lo, u_hi, n_pieces)
        return [(fp(p), f(p) - fp(p) * p) for p in pts]

    def gap(p):
        return f(p) - f(u_lo) - fp(p) * (p - u_lo)

    # gap < 0 at the inflection point and rises to a positive limit beyond
    if gap(u_hi) <= 0.0:
        return [_secant(u_lo, u_hi, f)]
    p = brentq(gap, u_min, u_hi, xtol=1e-14, rtol=1e-12)
    pts = np.linspace(p, u_hi, n_pieces)
    lines = [(fp(x), f(x) - fp(x) * x) for x in pts]
    # absorb round-off so the first line passes through or above the left end
    s0, c0 = lines[0]
    lines[0] = (s0, c0 + max(0.0, f(u_lo) - (s0 * u_lo + c0)))
    return lines


def sigmoid_pair_upper(u_lo, u_hi, u_min, rho, n_pieces=4):
    """Over-estimators for both halves of the two-sided sigmoid, as lines in ``u``.

    Returns ``(plus_lines, minus_lines)``; the minus half ``psi(-u)`` is the
    mirror image of the plus half.
    """
    plus = sigmoid_upper(u_lo, u_hi, u_min, rho, n_pieces)
    mirrored = sigmoid_upper(-u_hi, -u_lo, u_min, rho, n_pieces)
    minus = [(-s, c) for s, c in mirrored]
    return plus, minus
