"""numba-compiled versions of the hot loops; same signatures as ``_numpy``."""
import math

import numba
import numpy as np

# a BLAS matrix product beats a compiled triple loop for this one
from ._numpy import weighted_scores_ip  # noqa: F401


@numba.njit(cache=True)
def weighted_sq_dists(X, C, w):
    n, d = X.shape
    k = C.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for l in range(d):
                t = X[i, l] - C[j, l]
                acc += w[l] * t * t
            out[i, j] = acc
    return out


@numba.njit(cache=True)
def cluster_sums(X, labels, k):
    n, d = X.shape
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        j = labels[i]
        counts[j] += 1
        for l in range(d):
            sums[j, l] += X[i, l]
    return sums, counts


@numba.njit(cache=True)
def weighted_objective(X, C, labels, w):
    n, d = X.shape
    acc = 0.0
    for i in range(n):
        j = labels[i]
        for l in range(d):
            t = X[i, l] - C[j, l]
            acc += w[l] * t * t
    return acc


@numba.njit(cache=True)
def _nh(m1, m):
    if m <= 0.0:
        return 0.0
    out = 0.0
    m0 = m - m1
    if m0 > 0.0:
        out -= m0 * math.log2(m0 / m)
    if m1 > 0.0:
        out -= m1 * math.log2(m1 / m)
    return out


@numba.njit(cache=True)
def split_scan(xs, ys, classification):
    n = xs.shape[0]
    best = np.inf
    thr = 0.0
    found = False
    if n < 2:
        return best, thr, found
    total = 0.0
    total_sq = 0.0
    for i in range(n):
        total += ys[i]
        total_sq += ys[i] * ys[i]
    csum = 0.0
    csq = 0.0
    for i in range(n - 1):
        csum += ys[i]
        csq += ys[i] * ys[i]
        if not xs[i + 1] > xs[i]:
            continue
        ln = i + 1.0
        rn = n - ln
        if classification:
            imp = _nh(csum, ln) + _nh(total - csum, rn)
        else:
            imp = (csq - csum * csum / ln) + ((total_sq - csq) - (total - csum) ** 2 / rn)
        if imp < best:
            best = imp
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:
                thr = xs[i]
            found = True
    return best, thr, found
