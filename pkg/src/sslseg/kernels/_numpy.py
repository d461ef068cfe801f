"""Pure-numpy implementations of the hot kernels.

Same signatures and semantics as the numba twins; loops that numba keeps
scalar are vectorised here along the longest axis.
"""

import numpy as np


def jacobi_eigh(a, tol, max_sweeps):
    n = a.shape[0]
    a = np.array(a, dtype=np.float64, copy=True)
    vt = np.eye(n)
    total = float(np.sum(a * a))
    offdiag = ~np.eye(n, dtype=bool)
    sweeps = 0
    for _ in range(max_sweeps):
        off = float(np.sum(a[offdiag] ** 2))
        if off <= tol * tol * total:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = a[p, p] - t * apq
                aqq = a[q, q] + t * apq
                g = a[p].copy()
                h = a[q].copy()
                row_p = c * g - s * h
                row_q = s * g + c * h
                row_p[p], row_p[q] = app, 0.0
                row_q[p], row_q[q] = 0.0, aqq
                a[p], a[q] = row_p, row_q
                a[:, p], a[:, q] = row_p, row_q
                g = vt[p].copy()
                h = vt[q].copy()
                vt[p] = c * g - s * h
                vt[q] = s * g + c * h
    return np.diag(a).copy(), vt.T.copy(), sweeps


def build_histogram(bins, rows, grad, hess, n_bins):
    n_features = bins.shape[1]
    sub = bins[rows]
    g = grad[rows]
    h = hess[rows]
    hist = np.zeros((n_features, n_bins, 2))
    for f in range(n_features):
        col = sub[:, f]
        hist[f, :, 0] = np.bincount(col, weights=g, minlength=n_bins)
        hist[f, :, 1] = np.bincount(col, weights=h, minlength=n_bins)
    return hist


def best_split(hist, bins_per_feature, g_total, h_total, lam, min_child_weight):
    n_features, n_bins, _ = hist.shape
    gl = np.cumsum(hist[:, :, 0], axis=1)
    hl = np.cumsum(hist[:, :, 1], axis=1)
    gr = g_total - gl
    hr = h_total - hl
    parent = g_total * g_total / (h_total + lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
    # split position b sends bins <= b left; the last bin of a feature is not a split
    valid = np.arange(n_bins)[None, :] < (np.asarray(bins_per_feature)[:, None] - 1)
    valid &= (hl >= min_child_weight) & (hr >= min_child_weight)
    gain = np.where(valid, gain, -np.inf)
    if not valid.any():
        return -np.inf, -1, -1
    flat = int(np.argmax(gain))
    f, b = divmod(flat, n_bins)
    return float(gain[f, b]), f, b


def predict_margins(x, feature, threshold, left, right, value, roots, tree_class,
                    learning_rate, margins):
    n_rows = x.shape[0]
    rows = np.arange(n_rows)
    for t in range(roots.shape[0]):
        node = np.full(n_rows, roots[t], dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            idx = rows[active]
            nd = node[idx]
            go_left = x[idx, feature[nd]] <= threshold[nd]
            node[idx] = np.where(go_left, left[nd], right[nd])
            active = feature[node] >= 0
        margins[:, tree_class[t]] += learning_rate * value[node]
    return margins
