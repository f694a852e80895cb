# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hypervolume kernel.

Same contract as ``_hv_py``: rows are shifted points ``q = y - ref`` in
maximization orientation, volume is the union of boxes ``[0, q]``.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cnp.import_array()


cdef inline void _swap_rows(double* a, int i, int j, int m) noexcept nogil:
    cdef int d
    cdef double t
    for d in range(m):
        t = a[i * m + d]
        a[i * m + d] = a[j * m + d]
        a[j * m + d] = t


cdef void _sort_desc(double* a, int n, int m) noexcept nogil:
    # insertion sort on (col0 desc, col1 desc); fronts here are small
    cdef int i, j
    for i in range(1, n):
        j = i
        while j > 0 and (a[(j - 1) * m] < a[j * m] or
                         (a[(j - 1) * m] == a[j * m] and m > 1 and
                          a[(j - 1) * m + 1] < a[j * m + 1])):
            _swap_rows(a, j - 1, j, m)
            j -= 1


cdef int _nondominated(double* a, int n, int m) noexcept nogil:
    """Compact ``a`` in place to its non-dominated, duplicate-free rows."""
    cdef int i, j, d, cnt
    cdef bint ge, eq, drop
    cdef char* dead
    if n <= 1:
        return n
    dead = <char*> malloc(n)
    for i in range(n):
        dead[i] = 0
    for j in range(n):
        for i in range(n):
            if i == j or dead[i]:
                continue
            ge = True
            eq = True
            for d in range(m):
                if a[i * m + d] < a[j * m + d]:
                    ge = False
                    break
                if a[i * m + d] != a[j * m + d]:
                    eq = False
            if ge and (not eq or i < j):
                dead[j] = 1
                break
    cnt = 0
    for i in range(n):
        if not dead[i]:
            if cnt != i:
                memcpy(&a[cnt * m], &a[i * m], m * sizeof(double))
            cnt += 1
    free(dead)
    return cnt


cdef inline double _prod(double* row, int m) noexcept nogil:
    cdef double v = 1.0
    cdef int d
    for d in range(m):
        v *= row[d]
    return v


cdef double _hv2d(double* a, int n) noexcept nogil:
    cdef int i
    cdef double area = 0.0, ymax = 0.0, y
    _sort_desc(a, n, 2)
    for i in range(n):
        y = a[i * 2 + 1]
        if y > ymax:
            area += a[i * 2] * (y - ymax)
            ymax = y
    return area


cdef double _wfg(double* a, int n, int m) noexcept nogil:
    """``a`` must already be non-dominated; it is reordered in place."""
    cdef int i, j, k, d, cnt
    cdef double total, v, best
    cdef double* buf
    if n == 0:
        return 0.0
    if n == 1:
        return _prod(a, m)
    if m == 1:
        best = a[0]
        for i in range(1, n):
            if a[i] > best:
                best = a[i]
        return best
    if m == 2:
        return _hv2d(a, n)
    _sort_desc(a, n, m)
    buf = <double*> malloc(n * m * sizeof(double))
    total = 0.0
    for k in range(n):
        total += _prod(&a[k * m], m)
        cnt = 0
        for j in range(k + 1, n):
            for d in range(m):
                v = a[j * m + d]
                if a[k * m + d] < v:
                    v = a[k * m + d]
                buf[cnt * m + d] = v
            cnt += 1
        if cnt:
            cnt = _nondominated(buf, cnt, m)
            total -= _wfg(buf, cnt, m)
    free(buf)
    return total


def hypervolume(q):
    """Volume of the union of boxes ``[0, q_i]`` for positive rows of ``q``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] arr = np.array(
        q, dtype=np.float64, order="C", copy=True, ndmin=2)
    cdef int n = arr.shape[0]
    cdef int m = arr.shape[1]
    cdef double out
    if n == 0:
        return 0.0
    cdef double* a = <double*> arr.data
    with nogil:
        n = _nondominated(a, n, m)
        out = _wfg(a, n, m)
    return out


def hv_gains(base, cands):
    """Exclusive contribution of each candidate row against ``base``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = np.array(
        base, dtype=np.float64, order="C", copy=True, ndmin=2)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] c = np.ascontiguousarray(
        cands, dtype=np.float64)
    cdef int nc = c.shape[0]
    cdef int m = c.shape[1]
    cdef int nb = b.shape[0] if b.shape[1] == m else 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(nc)
    cdef double* bp = <double*> b.data
    cdef double* cp = <double*> c.data
    cdef double* op = <double*> out.data
    cdef double* buf
    cdef int i, j, d, cnt
    cdef double vol, v
    cdef bint ok
    with nogil:
        if nb:
            nb = _nondominated(bp, nb, m)
        buf = <double*> malloc((nb + 1) * m * sizeof(double))
        for i in range(nc):
            ok = True
            for d in range(m):
                if cp[i * m + d] <= 0.0:
                    ok = False
                    break
            if not ok:
                continue
            vol = _prod(&cp[i * m], m)
            cnt = 0
            for j in range(nb):
                for d in range(m):
                    v = bp[j * m + d]
                    if cp[i * m + d] < v:
                        v = cp[i * m + d]
                    buf[cnt * m + d] = v
                cnt += 1
            if cnt:
                cnt = _nondominated(buf, cnt, m)
                vol -= _wfg(buf, cnt, m)
            if vol > 0.0:
                op[i] = vol
        free(buf)
    return out
