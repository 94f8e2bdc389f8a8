# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; see _kernels_py for the reference semantics."""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport sqrt, floor, INFINITY
from libc.stdlib cimport malloc, free, qsort
from numpy.random cimport bitgen_t

cnp.import_array()


def micro_run(const double[:, ::1] markers, double[:, ::1] pos, double[:, ::1] goals,
              const double[::1] speeds, double width, double height, double perception,
              double social_distance, bint distancing, double dt, Py_ssize_t frames,
              double arrival, object generator, double[:, :, ::1] trace=None):
    cdef Py_ssize_t m = markers.shape[0]
    cdef Py_ssize_t n = pos.shape[0]
    cdef double R2 = perception * perception
    cdef double sd2 = social_distance * social_distance
    cdef double a2 = arrival * arrival
    cdef bint keep_trace = trace is not None
    cdef Py_ssize_t f, j, k, q, best, cnt
    cdef double dx, dy, d2, bestd, gx, gy, dn, denom, cosv, w, Mx, My, mn, step, s, ex, ey
    cdef long violating = 0
    cdef bint viol
    sw_a = np.empty(n, dtype=np.float64)
    sx_a = np.empty(n, dtype=np.float64)
    sy_a = np.empty(n, dtype=np.float64)
    gxa = np.empty(n, dtype=np.float64)
    gya = np.empty(n, dtype=np.float64)
    gna = np.empty(n, dtype=np.float64)
    cdef double[::1] sw = sw_a, sx = sx_a, sy = sy_a, gxs = gxa, gys = gya, gns = gna
    bitgen_obj = generator.bit_generator
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bitgen_obj.capsule, "BitGenerator")
    with bitgen_obj.lock:
        with nogil:
            for f in range(frames):
                for k in range(n):
                    sw[k] = 0.0
                    sx[k] = 0.0
                    sy[k] = 0.0
                    gxs[k] = goals[k, 0] - pos[k, 0]
                    gys[k] = goals[k, 1] - pos[k, 1]
                    gns[k] = sqrt(gxs[k] * gxs[k] + gys[k] * gys[k])
                for j in range(m):
                    best = -1
                    bestd = INFINITY
                    cnt = 0
                    for k in range(n):
                        dx = markers[j, 0] - pos[k, 0]
                        dy = markers[j, 1] - pos[k, 1]
                        d2 = dx * dx + dy * dy
                        if d2 < R2 and d2 < bestd and not (distancing and cnt):
                            bestd = d2
                            best = k
                        if d2 < sd2:
                            cnt += 1
                    if best < 0:
                        continue
                    dx = markers[j, 0] - pos[best, 0]
                    dy = markers[j, 1] - pos[best, 1]
                    dn = sqrt(dx * dx + dy * dy)
                    denom = dn * gns[best]
                    if denom > 0.0:
                        cosv = (dx * gxs[best] + dy * gys[best]) / denom
                    else:
                        cosv = 0.0
                    w = (1.0 + cosv) / (1.0 + dn)
                    sw[best] += w
                    sx[best] += w * dx
                    sy[best] += w * dy
                for k in range(n):
                    if sw[k] > 0.0:
                        Mx = sx[k] / sw[k]
                        My = sy[k] / sw[k]
                        mn = sqrt(Mx * Mx + My * My)
                        if mn > 0.0:
                            step = speeds[k] * dt
                            if mn <= step:
                                step = mn
                            s = step / mn
                            pos[k, 0] = min(max(pos[k, 0] + Mx * s, 0.0), width)
                            pos[k, 1] = min(max(pos[k, 1] + My * s, 0.0), height)
                for k in range(n):
                    ex = goals[k, 0] - pos[k, 0]
                    ey = goals[k, 1] - pos[k, 1]
                    if ex * ex + ey * ey < a2:
                        goals[k, 0] = rng.next_double(rng.state) * width
                        goals[k, 1] = rng.next_double(rng.state) * height
                viol = False
                for k in range(n):
                    for q in range(k + 1, n):
                        dx = pos[k, 0] - pos[q, 0]
                        dy = pos[k, 1] - pos[q, 1]
                        if dx * dx + dy * dy < sd2:
                            viol = True
                            break
                    if viol:
                        break
                if viol:
                    violating += 1
                if keep_trace:
                    for k in range(n):
                        trace[f, k, 0] = pos[k, 0]
                        trace[f, k, 1] = pos[k, 1]
    return violating


ctypedef struct Cand:
    double d2
    long long idx


cdef int _cmp_cand(const void *a, const void *b) noexcept nogil:
    cdef const Cand *x = <const Cand *> a
    cdef const Cand *y = <const Cand *> b
    if x.d2 < y.d2:
        return -1
    if x.d2 > y.d2:
        return 1
    if x.idx < y.idx:
        return -1
    if x.idx > y.idx:
        return 1
    return 0


def macro_claim(int[:, ::1] own, double ox, double oy, double side, double cx, double cy,
                double radius, Py_ssize_t k, int cid):
    cdef Py_ssize_t ny = own.shape[0]
    cdef Py_ssize_t nx = own.shape[1]
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    cdef Py_ssize_t i0 = max(<Py_ssize_t> floor((cx - radius - ox) / side), 0)
    cdef Py_ssize_t i1 = min(<Py_ssize_t> floor((cx + radius - ox) / side), nx - 1)
    cdef Py_ssize_t j0 = max(<Py_ssize_t> floor((cy - radius - oy) / side), 0)
    cdef Py_ssize_t j1 = min(<Py_ssize_t> floor((cy + radius - oy) / side), ny - 1)
    if i1 < i0 or j1 < j0:
        return np.empty(0, dtype=np.int64)
    cdef Py_ssize_t cap = (i1 - i0 + 1) * (j1 - j0 + 1)
    cdef Cand *cands = <Cand *> malloc(cap * sizeof(Cand))
    if cands == NULL:
        raise MemoryError()
    cdef Py_ssize_t nc = 0, i, jj, t
    cdef double dx, dy, d2, r2 = radius * radius
    try:
        with nogil:
            for jj in range(j0, j1 + 1):
                dy = oy + (jj + 0.5) * side - cy
                for i in range(i0, i1 + 1):
                    if own[jj, i] != -1:
                        continue
                    dx = ox + (i + 0.5) * side - cx
                    d2 = dx * dx + dy * dy
                    if d2 <= r2:
                        cands[nc].d2 = d2
                        cands[nc].idx = jj * nx + i
                        nc += 1
            qsort(cands, nc, sizeof(Cand), _cmp_cand)
        if k > nc:
            k = nc
        out = np.empty(k, dtype=np.int64)
        for t in range(k):
            out[t] = cands[t].idx
            own[cands[t].idx // nx, cands[t].idx % nx] = cid
        return out
    finally:
        free(cands)


def macro_release(int[:, ::1] own, const cnp.int64_t[::1] cells):
    cdef Py_ssize_t nx = own.shape[1]
    cdef Py_ssize_t t
    for t in range(cells.shape[0]):
        own[cells[t] // nx, cells[t] % nx] = -1
