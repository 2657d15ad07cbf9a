# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: offset-table convolutions and pairwise velocities."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs

cnp.import_array()


def grid_convolve(const double[:, ::1] rho,
                  const double[:, :, ::1] tables,
                  const cnp.int64_t[::1] support,
                  const cnp.int64_t[::1] targets):
    """out[c, t] = sum over support s of rho[s] * tables[c, t - s + (n - 1)].

    ``rho`` is a 2D window (1D data uses a trailing axis of length one);
    flat indices address the window in C order.  The sum runs over
    ``support`` in the given order.
    """
    cdef Py_ssize_t n1 = rho.shape[0], n2 = rho.shape[1]
    cdef Py_ssize_t nc = tables.shape[0]
    cdef Py_ssize_t ns = support.shape[0], nt = targets.shape[0]
    cdef Py_ssize_t t, s, c, j1, j2, k1, k2, o1, o2
    cdef double w
    out_arr = np.zeros((nc, nt), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    sup_w_arr = np.empty(ns, dtype=np.float64)
    sup_1_arr = np.empty(ns, dtype=np.int64)
    sup_2_arr = np.empty(ns, dtype=np.int64)
    cdef double[::1] sup_w = sup_w_arr
    cdef cnp.int64_t[::1] sup_1 = sup_1_arr
    cdef cnp.int64_t[::1] sup_2 = sup_2_arr
    for s in range(ns):
        sup_1[s] = support[s] // n2
        sup_2[s] = support[s] % n2
        sup_w[s] = rho[sup_1[s], sup_2[s]]
    with nogil:
        for t in range(nt):
            j1 = targets[t] // n2
            j2 = targets[t] % n2
            for s in range(ns):
                o1 = j1 - sup_1[s] + n1 - 1
                o2 = j2 - sup_2[s] + n2 - 1
                w = sup_w[s]
                for c in range(nc):
                    out[c, t] += w * tables[c, o1, o2]
    return out_arr


cdef inline double _magnitude_over_r(int code, double param, double r) nogil:
    # |grad W| / r for radial kinds, r > 0
    if code == 0:
        return param / r
    elif code == 1:
        return param * exp(-param * r) / r
    elif code == 3:
        return 0.5 / r
    elif code == 4:
        return param
    return 0.0


def pair_velocity(const double[:, ::1] targets,
                  const double[:, ::1] sources,
                  const double[::1] masses,
                  int code, double param):
    """a_t = - sum_l m_l grad_hat(x_t - x_l) for the built-in kinds."""
    cdef Py_ssize_t nt = targets.shape[0], ns = sources.shape[0], d = targets.shape[1]
    cdef Py_ssize_t t, l, i
    cdef double r2, r, f, diff
    cdef double buf[16]
    cdef int zero
    if d > 16:
        raise ValueError("dimension too large for the compiled kernel")
    out_arr = np.zeros((nt, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for t in range(nt):
            for l in range(ns):
                r2 = 0.0
                zero = 1
                for i in range(d):
                    diff = targets[t, i] - sources[l, i]
                    buf[i] = diff
                    if diff != 0.0:
                        zero = 0
                    r2 += diff * diff
                if zero:
                    continue
                if code == 2:
                    # quad_linear, 1D
                    diff = buf[0]
                    if fabs(diff) <= 1.0:
                        f = 4.0 * diff
                    elif diff > 0:
                        f = 4.0
                    else:
                        f = -4.0
                    out[t, 0] -= masses[l] * f
                    continue
                r = sqrt(r2)
                f = _magnitude_over_r(code, param, r)
                for i in range(d):
                    out[t, i] -= masses[l] * f * buf[i]
    return out_arr
