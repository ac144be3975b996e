"""Pure-numpy reference versions of the hot loops."""
import numpy as np


def weighted_sq_dists(X, C, w):
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,d->nk", diff * diff, w)


def weighted_scores_ip(X, C, w):
    return X @ (C * w).T


def cluster_sums(X, labels, k):
    d = X.shape[1]
    sums = np.zeros((k, d))
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def weighted_objective(X, C, labels, w):
    diff = X - C[labels]
    return float(np.sum(diff * diff * w))


def _entropy_terms(n1, n):
    # n * H(n1/n), base 2, with 0 log 0 = 0
    n0 = n - n1
    out = np.zeros_like(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        for m in (n0, n1):
            p = np.where(n > 0, m / np.where(n > 0, n, 1), 0.0)
            t = np.where(p > 0, -m * np.log2(np.where(p > 0, p, 1)), 0.0)
            out = out + t
    return out


def split_scan(xs, ys, classification):
    """Best threshold on one feature.

    ``xs`` must be sorted ascending with ``ys`` aligned. Returns
    ``(child_impurity, threshold, found)`` where child impurity is the
    size-weighted total (n·H for entropy, SSE for regression).
    """
    n = xs.shape[0]
    if n < 2:
        return np.inf, 0.0, False
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return np.inf, 0.0, False
    left_n = np.arange(1, n, dtype=float)
    right_n = n - left_n
    csum = np.cumsum(ys)[:-1]
    total = ys.sum()
    if classification:
        imp = _entropy_terms(csum, left_n) + _entropy_terms(total - csum, right_n)
    else:
        csq = np.cumsum(ys * ys)[:-1]
        total_sq = (ys * ys).sum()
        sse_l = csq - csum * csum / left_n
        sse_r = (total_sq - csq) - (total - csum) ** 2 / right_n
        imp = sse_l + sse_r
    imp = np.where(valid, imp, np.inf)
    pos = int(np.argmin(imp))
    thr = 0.5 * (xs[pos] + xs[pos + 1])
    if thr >= xs[pos + 1]:  # adjacent floats: keep the split on the left value
        thr = xs[pos]
    return float(imp[pos]), float(thr), True
