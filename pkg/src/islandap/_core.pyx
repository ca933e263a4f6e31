# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""
Compiled lock-step (method two) closure test for node classification.

Each start point is traced independently in a tight C loop.  The field is
given by a family code plus a parameter vector; the families mirror the
built-in fields in :mod:`islandap.field` term by term so that both paths
produce the same arithmetic.
"""

from libc.math cimport sin, cos, sqrt, hypot, fabs

import numpy as np

DEF FAM_UNIFORM = 0
DEF FAM_ROTATING = 1
DEF FAM_EXAMPLE1 = 2
DEF FAM_EXAMPLE2 = 3

DEF RUNNING = 0
DEF CLOSED = 1
DEF OPEN = 2
DEF FAILED = 3


cdef struct Field:
    int family
    double p[8]
    double delta


cdef inline void raw_vector(const Field* f, double x, double y, double* B1, double* B2) noexcept nogil:
    cdef double r1, r2, q, qx, qy, sq, g1s, g2s, c, s
    if f.family == FAM_UNIFORM:
        B1[0] = f.p[0]
        B2[0] = f.p[1]
    elif f.family == FAM_ROTATING:
        B1[0] = -(y - f.p[1])
        B2[0] = x - f.p[0]
    elif f.family == FAM_EXAMPLE1:
        g1s = f.p[0]
        g2s = f.p[1]
        c = f.p[2]
        s = f.p[3]
        r1 = x * c + y * s
        r2 = x * s - y * c
        q = g1s * r1 * r1 + g2s * r2 * r2
        qx = 2.0 * (g1s * r1 * c + g2s * r2 * s)
        qy = 2.0 * (g1s * r1 * s - g2s * r2 * c)
        sq = sqrt(q)
        # B = (-u_y, u_x) with u = 1 - q^{3/2}
        B1[0] = -(-1.5 * sq * qy)
        B2[0] = -1.5 * sq * qx
    else:
        B1[0] = -3.141592653589793 * sin(3.141592653589793 * y)
        B2[0] = 2.0 * f.p[0] * 3.141592653589793 * sin(2.0 * 3.141592653589793 * (x - 1.5))


cdef inline void unit(const Field* f, double x, double y, double* b1, double* b2) noexcept nogil:
    cdef double B1, B2, n
    raw_vector(f, x, y, &B1, &B2)
    n = sqrt(B1 * B1 + B2 * B2 + f.delta)
    b1[0] = B1 / n
    b2[0] = B2 / n


cdef inline void rk4(const Field* f, double* x, double* y, double h) noexcept nogil:
    cdef double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y
    unit(f, x[0], y[0], &k1x, &k1y)
    unit(f, x[0] + 0.5 * h * k1x, y[0] + 0.5 * h * k1y, &k2x, &k2y)
    unit(f, x[0] + 0.5 * h * k2x, y[0] + 0.5 * h * k2y, &k3x, &k3y)
    unit(f, x[0] + h * k3x, y[0] + h * k3y, &k4x, &k4y)
    x[0] = x[0] + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    y[0] = y[0] + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)


cdef inline bint outside(double x, double y, double a, double b) noexcept nogil:
    return fabs(x) >= a or fabs(y) >= b


def lockstep_status(
    double[:, ::1] starts,
    int family,
    double[::1] params,
    double delta_reg,
    double step,
    double delta,
    double a,
    double b,
    long max_steps,
):
    """Closure status and stop index of every start point (method two rules)."""
    cdef Py_ssize_t n = starts.shape[0], m, j
    cdef Field f
    f.family = family
    f.delta = delta_reg
    for j in range(8):
        f.p[j] = params[j] if j < params.shape[0] else 0.0
    status_arr = np.zeros(n, dtype=np.int8)
    stop_arr = np.zeros(n, dtype=np.int64)
    cdef signed char[::1] status = status_arr
    cdef long long[::1] stop = stop_arr
    cdef double fx, fy, bx, by, d, dp, dpp
    cdef long k
    cdef bint armed, local_min, ball, exited
    with nogil:
        for m in range(n):
            fx = starts[m, 0]
            fy = starts[m, 1]
            bx = fx
            by = fy
            if outside(fx, fy, a, b):
                status[m] = OPEN
                continue
            armed = False
            dp = 0.0
            dpp = 0.0
            k = 0
            while True:
                if k >= max_steps:
                    status[m] = FAILED
                    stop[m] = k
                    break
                k += 1
                rk4(&f, &fx, &fy, step)
                rk4(&f, &bx, &by, -step)
                d = hypot(fx - bx, fy - by)
                local_min = armed and k >= 2 and dp < dpp and d > dp
                if local_min:
                    status[m] = CLOSED
                    stop[m] = k - 1
                    break
                ball = armed and d <= delta
                if ball:
                    status[m] = CLOSED
                    stop[m] = k
                    break
                if outside(fx, fy, a, b) or outside(bx, by, a, b):
                    status[m] = OPEN
                    stop[m] = k
                    break
                armed = armed or d > 2.0 * delta or (k >= 2 and d < dp)
                dpp = dp
                dp = d
    return status_arr, stop_arr
