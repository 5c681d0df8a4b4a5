# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the elementwise kernels in ``_pykernels``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, pow

cnp.import_array()


cdef inline double _logistic(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def hw_phi(q, r, n, double eps):
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64).ravel()
    cdef const double[::1] rv = np.ascontiguousarray(np.broadcast_to(r, np.shape(q)), dtype=np.float64).ravel()
    cdef Py_ssize_t i, m = qv.shape[0]
    phi = np.empty(m)
    dphi = np.empty(m)
    cdef double[::1] pv = phi
    cdef double[::1] dv = dphi
    cdef double pw, e1, fl
    cdef const double[::1] nv
    if np.ndim(n) == 0:
        # one exponent for every link: hoist the floor term out of the loop
        e1 = float(n) - 1.0
        fl = pow(eps, e1)
        with nogil:
            for i in range(m):
                pw = rv[i] * pow(fabs(qv[i]), e1)
                pv[i] = pw * qv[i]
                dv[i] = (e1 + 1.0) * pw
                if dv[i] < rv[i] * fl:
                    dv[i] = rv[i] * fl
    else:
        nv = np.ascontiguousarray(np.broadcast_to(n, np.shape(q)), dtype=np.float64).ravel()
        with nogil:
            for i in range(m):
                pw = rv[i] * pow(fabs(qv[i]), nv[i] - 1.0)
                pv[i] = pw * qv[i]
                dv[i] = nv[i] * pw
                fl = rv[i] * pow(eps, nv[i] - 1.0)
                if dv[i] < fl:
                    dv[i] = fl
    shape = np.shape(q)
    return phi.reshape(shape), dphi.reshape(shape)


def qa_phi(q, a, b):
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64).ravel()
    cdef const double[::1] av = np.ascontiguousarray(np.broadcast_to(a, np.shape(q)), dtype=np.float64).ravel()
    cdef const double[::1] bv = np.ascontiguousarray(np.broadcast_to(b, np.shape(q)), dtype=np.float64).ravel()
    cdef Py_ssize_t i, m = qv.shape[0]
    phi = np.empty(m)
    dphi = np.empty(m)
    cdef double[::1] pv = phi
    cdef double[::1] dv = dphi
    cdef double aq
    with nogil:
        for i in range(m):
            aq = fabs(qv[i])
            pv[i] = qv[i] * (av[i] * aq + bv[i])
            dv[i] = 2.0 * av[i] * aq + bv[i]
    shape = np.shape(q)
    return phi.reshape(shape), dphi.reshape(shape)


def sigmoid_pair(u, u_min, double rho):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef const double[::1] mv = np.ascontiguousarray(np.broadcast_to(u_min, np.shape(u)), dtype=np.float64).ravel()
    cdef Py_ssize_t i, m = uv.shape[0]
    g = np.empty(m)
    dg = np.empty(m)
    cdef double[::1] gv = g
    cdef double[::1] dv = dg
    cdef double sp, sm
    with nogil:
        for i in range(m):
            sp = _logistic(rho * (uv[i] - mv[i]))
            sm = _logistic(rho * (-uv[i] - mv[i]))
            gv[i] = sp + sm
            dv[i] = rho * (sp * (1.0 - sp) - sm * (1.0 - sm))
    shape = np.shape(u)
    return g.reshape(shape), dg.reshape(shape)


def nondominated_2d(f1, f2):
    cdef const double[::1] a = np.ascontiguousarray(f1, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(f2, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    mask = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return mask.astype(bool)
    cdef cnp.intp_t[::1] order = np.lexsort((np.arange(n), np.asarray(b), np.asarray(a))).astype(np.intp)
    cdef unsigned char[::1] mv = mask
    cdef double best = np.inf
    cdef Py_ssize_t i, k
    with nogil:
        for i in range(n):
            k = order[i]
            if b[k] < best:
                mv[k] = 1
                best = b[k]
    return mask.astype(bool)
