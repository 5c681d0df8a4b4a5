"""Numpy implementations of the elementwise kernels (fallback backend)."""

import numpy as np
from scipy.special import expit


def hw_phi(q, r, n, eps):
    """Hazen-Williams head loss and its derivative, floored at ``r * eps**(n-1)``."""
    aq = np.abs(q)
    pw = aq ** (n - 1.0)
    phi = r * pw * q
    dphi = np.maximum(n * r * pw, r * eps ** (n - 1.0))
    return phi, dphi


def qa_phi(q, a, b):
    aq = np.abs(q)
    return q * (a * aq + b), 2.0 * a * aq + b


def sigmoid_pair(u, u_min, rho):
    """Sum of the two logistic terms and its derivative in ``u``."""
    sp = expit(rho * (u - u_min))
    sm = expit(rho * (-u - u_min))
    g = sp + sm
    dg = rho * (sp * (1.0 - sp) - sm * (1.0 - sm))
    return g, dg


def nondominated_2d(f1, f2):
    """Mask of points not weakly dominated when minimizing both columns.

    Exact duplicates keep only the first occurrence by input order.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    n = f1.shape[0]
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask
    order = np.lexsort((np.arange(n), f2, f1))
    best = np.inf
    for k in order:
        if f2[k] < best:
            mask[k] = True
            best = f2[k]
    return mask
