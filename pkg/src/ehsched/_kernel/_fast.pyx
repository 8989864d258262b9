# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of ``_pure``; see that module for semantics."""

from libc.math cimport exp, log, log1p
from libc.stdlib cimport free, malloc

DEF TINY_TARGET = 1e-12
DEF EXP_CLAMP = 600.0
DEF MAX_BISECT = 200


cdef inline double _froot(double inv, double gamma, double eps, double p) nogil:
    return (inv + p) * log1p(gamma * p) - (p + eps)


def v_star(double gamma, double eps):
    cdef double inv, lo, hi, mid
    cdef int i
    if eps <= 0.0:
        return 0.0
    inv = 1.0 / gamma
    hi = 1.0
    i = 0
    while _froot(inv, gamma, eps, hi) < 0.0:
        hi *= 2.0
        i += 1
        if i > MAX_BISECT:
            break
    lo = 0.0
    for i in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _froot(inv, gamma, eps, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef inline double _level_on_segment(double cur, double s_tau, double amount,
                                     bint data_target) nogil:
    cdef double x
    if data_target:
        x = 2.0 * amount / s_tau
        if x > EXP_CLAMP:
            x = EXP_CLAMP
        return cur * exp(x)
    return cur + amount / s_tau


def pour(taus, gammas, vstars, double eps, double target, bint data_target=False):
    cdef Py_ssize_t n = len(taus)
    cdef Py_ssize_t j, a, pos, idx
    cdef double s_tau, at, cur, t, seg, unit, jump, xi, key
    p = [0.0] * n
    th = [0.0] * n
    if n == 0 or target <= TINY_TARGET:
        return p, th, 0.0
    cdef double *ctau = <double *> malloc(4 * n * sizeof(double))
    if ctau == NULL:
        raise MemoryError()
    cdef double *cgam = ctau + n
    cdef double *cvs = ctau + 2 * n
    cdef double *thr = ctau + 3 * n
    cdef Py_ssize_t *order = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    if order == NULL:
        free(ctau)
        raise MemoryError()
    try:
        for j in range(n):
            ctau[j] = taus[j]
            cgam[j] = gammas[j]
            cvs[j] = vstars[j]
            thr[j] = 1.0 / cgam[j] + cvs[j]
            order[j] = j
        # stable insertion sort on threshold
        for j in range(1, n):
            idx = order[j]
            key = thr[idx]
            pos = j
            while pos > 0 and thr[order[pos - 1]] > key:
                order[pos] = order[pos - 1]
                pos -= 1
            order[pos] = idx
        s_tau = 0.0
        at = 0.0
        cur = thr[order[0]]
        for a in range(n):
            idx = order[a]
            t = thr[idx]
            if s_tau > 0.0 and t > cur:
                if data_target:
                    seg = 0.5 * s_tau * log(t / cur)
                else:
                    seg = s_tau * (t - cur)
                if at + seg >= target:
                    xi = _level_on_segment(cur, s_tau, target - at, data_target)
                    for j in range(a):
                        p[order[j]] = xi - 1.0 / cgam[order[j]]
                        th[order[j]] = ctau[order[j]]
                    return p, th, xi
                at += seg
            cur = t
            if data_target:
                unit = 0.5 * log1p(cgam[idx] * cvs[idx])
            else:
                unit = cvs[idx] + eps
            jump = ctau[idx] * unit
            if jump > 0.0 and at + jump >= target:
                for j in range(a):
                    p[order[j]] = t - 1.0 / cgam[order[j]]
                    th[order[j]] = ctau[order[j]]
                p[idx] = cvs[idx]
                th[idx] = (target - at) / unit
                return p, th, t
            at += jump
            s_tau += ctau[idx]
        xi = _level_on_segment(cur, s_tau, target - at, data_target)
        for j in range(n):
            p[order[j]] = xi - 1.0 / cgam[order[j]]
            th[order[j]] = ctau[order[j]]
        return p, th, xi
    finally:
        free(order)
        free(ctau)
