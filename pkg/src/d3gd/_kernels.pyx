# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: support-restricted simplex projection and the
label-sparse sigmoid loss. Mirrors ``d3gd._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline bint _before(double a, Py_ssize_t ia, double b, Py_ssize_t ib) noexcept nogil:
    # value descending, then index ascending
    return a > b or (a == b and ia < ib)


cdef void _sort_desc(double* val, Py_ssize_t* idx, Py_ssize_t m) noexcept nogil:
    # insertion sort; supports are small (in-degree + 1)
    cdef Py_ssize_t i, j, ti
    cdef double tv
    for i in range(1, m):
        tv = val[i]
        ti = idx[i]
        j = i - 1
        while j >= 0 and _before(tv, ti, val[j], idx[j]):
            val[j + 1] = val[j]
            idx[j + 1] = idx[j]
            j -= 1
        val[j + 1] = tv
        idx[j + 1] = ti


cdef void _project_into(const double[::1] v, const Py_ssize_t* sup, Py_ssize_t m,
                        double[::1] out, double* buf, Py_ssize_t* ibuf) noexcept nogil:
    cdef Py_ssize_t j, rho = 0
    cdef double cs = 0.0, cs_rho = 0.0, tau, x
    for j in range(out.shape[0]):
        out[j] = 0.0
    for j in range(m):
        buf[j] = v[sup[j]]
        ibuf[j] = j
    _sort_desc(buf, ibuf, m)
    for j in range(m):
        cs += buf[j]
        if buf[j] - (cs - 1.0) / (j + 1) > 0:
            rho = j
            cs_rho = cs
    tau = (cs_rho - 1.0) / (rho + 1)
    for j in range(m):
        x = v[sup[j]] - tau
        out[sup[j]] = x if x > 0 else 0.0


def project_simplex(v, support):
    """Euclidean projection of ``v`` onto the unit simplex restricted to ``support``."""
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t[::1] sup = np.ascontiguousarray(support, dtype=np.intp)
    cdef Py_ssize_t m = sup.shape[0]
    out = np.zeros(vv.shape[0])
    cdef double[::1] ov = out
    cdef double* buf = <double*> malloc(m * sizeof(double))
    cdef Py_ssize_t* ibuf = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    try:
        _project_into(vv, &sup[0], m, ov, buf, ibuf)
    finally:
        free(buf)
        free(ibuf)
    return out


def project_rows(V, mask):
    """Row-wise projection with supports given by a boolean mask."""
    cdef const double[:, ::1] vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const cnp.uint8_t[:, ::1] mm = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t n = vv.shape[0], c = vv.shape[1], i, j, m
    out = np.zeros((n, c))
    cdef double[:, ::1] ov = out
    cdef double* buf = <double*> malloc(c * sizeof(double))
    cdef Py_ssize_t* ibuf = <Py_ssize_t*> malloc(c * sizeof(Py_ssize_t))
    cdef Py_ssize_t* sup = <Py_ssize_t*> malloc(c * sizeof(Py_ssize_t))
    try:
        with nogil:
            for i in range(n):
                m = 0
                for j in range(c):
                    if mm[i, j]:
                        sup[m] = j
                        m += 1
                _project_into(vv[i], sup, m, ov[i], buf, ibuf)
    finally:
        free(buf)
        free(ibuf)
        free(sup)
    return out


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def label_sigmoid(X, labels, theta, double sign):
    """Sum of ``sigmoid(sign * x_m . theta[label_m])`` and its gradient (K, d)."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const Py_ssize_t[::1] lv = np.ascontiguousarray(labels, dtype=np.intp)
    cdef const double[:, ::1] tv = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t S = xv.shape[0], d = tv.shape[1], m, c, k
    grad = np.zeros((tv.shape[0], d))
    cdef double[:, ::1] gv = grad
    cdef double total = 0.0, z, s, w
    if S == 0:
        return 0.0, grad
    with nogil:
        for m in range(S):
            k = lv[m]
            z = 0.0
            for c in range(d):
                z += xv[m, c] * tv[k, c]
            s = _sigmoid(sign * z)
            total += s
            w = sign * s * (1.0 - s)
            for c in range(d):
                gv[k, c] += w * xv[m, c]
    return total, grad
