# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled peak-picking kernels; see ``_pykernels`` for the reference."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def local_maxima(x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    out = np.empty(max(n // 2, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] ov = out
    cdef Py_ssize_t i = 1, ahead, m = 0
    while i < n - 1:
        if xv[i - 1] < xv[i]:
            ahead = i + 1
            while ahead < n - 1 and xv[ahead] == xv[i]:
                ahead += 1
            if xv[ahead] < xv[i]:
                ov[m] = (i + ahead - 1) // 2
                m += 1
                i = ahead
        i += 1
    return out[:m].copy()


def peak_prominences(x, peaks):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const Py_ssize_t[::1] pv = np.ascontiguousarray(peaks, dtype=np.intp)
    cdef Py_ssize_t n = xv.shape[0], k, i, p
    cdef double height, left_min, right_min
    out = np.empty(pv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    for k in range(pv.shape[0]):
        p = pv[k]
        height = xv[p]
        left_min = height
        i = p
        while i >= 0 and xv[i] <= height:
            if xv[i] < left_min:
                left_min = xv[i]
            i -= 1
        right_min = height
        i = p
        while i < n and xv[i] <= height:
            if xv[i] < right_min:
                right_min = xv[i]
            i += 1
        ov[k] = height - (left_min if left_min > right_min else right_min)
    return out


def select_by_distance(peaks, priority, Py_ssize_t distance):
    cdef const Py_ssize_t[::1] pv = np.ascontiguousarray(peaks, dtype=np.intp)
    cdef Py_ssize_t m = pv.shape[0], idx, j, r
    keep = np.ones(m, dtype=bool)
    if distance <= 1 or m == 0:
        return keep
    cdef cnp.npy_bool[::1] kv = keep.view(np.uint8)
    cdef const Py_ssize_t[::1] order = np.ascontiguousarray(
        np.argsort(-np.asarray(priority, dtype=np.float64), kind="stable"), dtype=np.intp
    )
    for r in range(m):
        idx = order[r]
        if not kv[idx]:
            continue
        j = idx - 1
        while j >= 0 and pv[idx] - pv[j] < distance:
            kv[j] = 0
            j -= 1
        j = idx + 1
        while j < m and pv[j] - pv[idx] < distance:
            kv[j] = 0
            j += 1
    return keep
