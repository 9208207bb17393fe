"""Pure-Python peak-picking kernels.

Reference implementation of the routines in ``_ckernels.pyx``. Both modules
must return identical results; the test suite checks them against each other.
"""
import numpy as np


def local_maxima(x):
    """Indices of local maxima of `x`.

    A flat top counts once, at the middle sample (rounded down). Samples at
    either end of `x` are never maxima.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    peaks = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            ahead = i + 1
            while ahead < n - 1 and x[ahead] == x[i]:
                ahead += 1
            if x[ahead] < x[i]:
                peaks.append((i + ahead - 1) // 2)
                i = ahead
        i += 1
    return np.asarray(peaks, dtype=np.intp)


def peak_prominences(x, peaks):
    """Topographic prominence of each peak.

    The base on each side is the lowest sample between the peak and the
    nearest strictly higher sample (or the array edge). The prominence is
    the peak height above the higher of the two bases.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    peaks = np.asarray(peaks, dtype=np.intp)
    n = x.shape[0]
    out = np.empty(peaks.shape[0], dtype=np.float64)
    for k in range(peaks.shape[0]):
        p = peaks[k]
        height = x[p]
        left_min = height
        i = p
        while i >= 0 and x[i] <= height:
            if x[i] < left_min:
                left_min = x[i]
            i -= 1
        right_min = height
        i = p
        while i < n and x[i] <= height:
            if x[i] < right_min:
                right_min = x[i]
            i += 1
        out[k] = height - max(left_min, right_min)
    return out


def select_by_distance(peaks, priority, distance):
    """Greedy thinning so that kept peaks are at least `distance` samples apart.

    Peaks are visited from highest to lowest priority (ties resolved in
    favour of the earlier peak); a visited peak that is still kept removes
    every neighbour closer than `distance`. Returns a boolean keep mask.
    """
    peaks = np.asarray(peaks, dtype=np.intp)
    priority = np.asarray(priority, dtype=np.float64)
    m = peaks.shape[0]
    keep = np.ones(m, dtype=bool)
    if distance <= 1 or m == 0:
        return keep
    order = np.argsort(-priority, kind="stable")
    for idx in order:
        if not keep[idx]:
            continue
        j = idx - 1
        while j >= 0 and peaks[idx] - peaks[j] < distance:
            keep[j] = False
            j -= 1
        j = idx + 1
        while j < m and peaks[j] - peaks[idx] < distance:
            keep[j] = False
            j += 1
    return keep
