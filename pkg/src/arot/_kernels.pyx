# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled split search and tree traversal.

Mirrors ``arot._kernels_py`` operation for operation; see that module for
the contract.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport isnan, NAN, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"

cdef double TIE_RTOL = 1e-9
cdef double TIE_ATOL = 1e-12

ctypedef struct Pair:
    double x
    double y
    Py_ssize_t pos


cdef inline bint _less(Pair* a, Pair* b) noexcept nogil:
    return a.x < b.x or (a.x == b.x and a.pos < b.pos)


cdef inline void _swap(Pair* a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Pair t = a[i]
    a[i] = a[j]
    a[j] = t


cdef void _sort_pairs(Pair* a, Py_ssize_t n) noexcept nogil:
    # quicksort (median of three) with insertion sort below 16 items;
    # keys (x, pos) are unique so partitioning cannot stall on duplicates
    cdef Py_ssize_t i, j, mid
    cdef Pair piv, t
    while n > 16:
        mid = n // 2
        if _less(&a[mid], &a[0]):
            _swap(a, 0, mid)
        if _less(&a[n - 1], &a[0]):
            _swap(a, 0, n - 1)
        if _less(&a[n - 1], &a[mid]):
            _swap(a, mid, n - 1)
        piv = a[mid]
        i = 0
        j = n - 1
        while True:
            while _less(&a[i], &piv):
                i += 1
            while _less(&piv, &a[j]):
                j -= 1
            if i >= j:
                break
            _swap(a, i, j)
            i += 1
            j -= 1
        # recurse into the smaller half, loop on the larger
        if j + 1 < n - j - 1:
            _sort_pairs(a, j + 1)
            a = a + j + 1
            n = n - j - 1
        else:
            _sort_pairs(a + j + 1, n - j - 1)
            n = j + 1
    for i in range(1, n):
        t = a[i]
        j = i - 1
        while j >= 0 and _less(&t, &a[j]):
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = t


cdef double _centered(const double[::1] y, const cnp.intp_t[::1] idx,
                      double* yc, double* tot) noexcept nogil:
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0, mean, parent = 0.0, t = 0.0, v
    for i in range(n):
        s += y[idx[i]]
    mean = s / n
    for i in range(n):
        v = y[idx[i]] - mean
        yc[i] = v
        t += v
        parent += v * v
    tot[0] = t
    return parent


def best_split(const double[:, ::1] X, const double[::1] y,
               const cnp.intp_t[::1] idx, const cnp.intp_t[::1] features,
               Py_ssize_t min_leaf):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t k = features.shape[0]
    cdef Py_ssize_t i, j, f, nc = 0, best = -1
    cdef double tot, parent, sl, sql, sr, sqr, nl, nr, sse, limit
    cdef double min_sse = INFINITY
    cdef double lo, hi, thr
    cdef double* yc
    cdef Pair* pairs
    cdef double* c_sse
    cdef double* c_lo
    cdef double* c_hi
    cdef Py_ssize_t* c_feat

    if n == 0:
        return -1, NAN, NAN, 0.0
    yc = <double*> malloc(n * sizeof(double))
    pairs = <Pair*> malloc(n * sizeof(Pair))
    c_sse = <double*> malloc(k * n * sizeof(double))
    c_lo = <double*> malloc(k * n * sizeof(double))
    c_hi = <double*> malloc(k * n * sizeof(double))
    c_feat = <Py_ssize_t*> malloc(k * n * sizeof(Py_ssize_t))
    if not yc or not pairs or not c_sse or not c_lo or not c_hi or not c_feat:
        free(yc); free(pairs); free(c_sse); free(c_lo); free(c_hi); free(c_feat)
        raise MemoryError()
    try:
        with nogil:
            parent = _centered(y, idx, yc, &tot)
            for j in range(k):
                f = features[j]
                for i in range(n):
                    pairs[i].x = X[idx[i], f]
                    pairs[i].y = yc[i]
                    pairs[i].pos = i
                _sort_pairs(pairs, n)
                sl = 0.0
                sql = 0.0
                for i in range(n - 1):
                    sl += pairs[i].y
                    sql += pairs[i].y * pairs[i].y
                    nl = <double> (i + 1)
                    nr = <double> (n - i - 1)
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    if not pairs[i].x < pairs[i + 1].x:
                        continue
                    sr = tot - sl
                    sqr = parent - sql
                    sse = (sql - sl * sl / nl) + (sqr - sr * sr / nr)
                    c_sse[nc] = sse
                    c_lo[nc] = pairs[i].x
                    c_hi[nc] = pairs[i + 1].x
                    c_feat[nc] = f
                    nc += 1
                    if sse < min_sse:
                        min_sse = sse
            if nc > 0:
                limit = min_sse + TIE_RTOL * parent + TIE_ATOL
                for i in range(nc):
                    if c_sse[i] <= limit:
                        best = i
                        break
        if best < 0:
            return -1, NAN, NAN, parent
        lo = c_lo[best]
        hi = c_hi[best]
        thr = (lo + hi) / 2.0
        if not thr < hi:
            thr = lo
        return int(c_feat[best]), thr, c_sse[best], parent
    finally:
        free(yc); free(pairs); free(c_sse); free(c_lo); free(c_hi); free(c_feat)


def random_split(const double[:, ::1] X, const double[::1] y,
                 const cnp.intp_t[::1] idx, const cnp.intp_t[::1] features,
                 const double[::1] thresholds, Py_ssize_t min_leaf):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t k = features.shape[0]
    cdef Py_ssize_t i, j, f, n_left, n_right, best = -1, need
    cdef double tot, parent, sl, sql, sr, sqr, sse, t, limit
    cdef double min_sse = INFINITY
    cdef double* yc
    cdef double* c_sse

    if n == 0:
        return -1, NAN, NAN, 0.0
    need = min_leaf if min_leaf > 1 else 1
    yc = <double*> malloc(n * sizeof(double))
    c_sse = <double*> malloc(k * sizeof(double))
    if not yc or not c_sse:
        free(yc); free(c_sse)
        raise MemoryError()
    try:
        with nogil:
            parent = _centered(y, idx, yc, &tot)
            for j in range(k):
                c_sse[j] = NAN
                t = thresholds[j]
                if isnan(t):
                    continue
                f = features[j]
                n_left = 0
                sl = 0.0
                sql = 0.0
                for i in range(n):
                    if X[idx[i], f] <= t:
                        n_left += 1
                        sl += yc[i]
                        sql += yc[i] * yc[i]
                n_right = n - n_left
                if n_left < need or n_right < need:
                    continue
                sr = tot - sl
                sqr = parent - sql
                sse = (sql - sl * sl / n_left) + (sqr - sr * sr / n_right)
                c_sse[j] = sse
                if sse < min_sse:
                    min_sse = sse
            limit = min_sse + TIE_RTOL * parent + TIE_ATOL
            for j in range(k):
                if not isnan(c_sse[j]) and c_sse[j] <= limit:
                    best = j
                    break
        if best < 0:
            return -1, NAN, NAN, parent
        return int(features[best]), thresholds[best], c_sse[best], parent
    finally:
        free(yc); free(c_sse)


def predict(const double[:, ::1] X, const cnp.intp_t[::1] feature,
            const double[::1] threshold, const cnp.intp_t[::1] left,
            const cnp.intp_t[::1] right, const double[::1] value):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, node
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            res[i] = value[node]
    return out
