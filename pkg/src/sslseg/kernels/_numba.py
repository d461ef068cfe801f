"""Numba implementations of the hot kernels (see ``_numpy`` for the reference twins)."""

import numpy as np
from numba import njit


@njit(cache=True)
def jacobi_eigh(a, tol, max_sweeps):
    # Rows p and q are rotated in place and mirrored into the columns, so
    # the matrix stays exactly symmetric; eigenvectors are kept as rows.
    n = a.shape[0]
    a = a.copy()
    vt = np.eye(n)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += a[i, j] * a[i, j]
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
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
                for k in range(n):
                    g = a[p, k]
                    h = a[q, k]
                    a[p, k] = c * g - s * h
                    a[q, k] = s * g + c * h
                a[p, p] = app
                a[q, q] = aqq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        a[k, p] = a[p, k]
                        a[k, q] = a[q, k]
                for k in range(n):
                    g = vt[p, k]
                    h = vt[q, k]
                    vt[p, k] = c * g - s * h
                    vt[q, k] = s * g + c * h
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, vt.T.copy(), sweeps


@njit(cache=True)
def build_histogram(bins, rows, grad, hess, n_bins):
    n_features = bins.shape[1]
    hist = np.zeros((n_features, n_bins, 2))
    for i in range(rows.shape[0]):
        r = rows[i]
        g = grad[r]
        h = hess[r]
        for f in range(n_features):
            b = bins[r, f]
            hist[f, b, 0] += g
            hist[f, b, 1] += h
    return hist


@njit(cache=True)
def best_split(hist, bins_per_feature, g_total, h_total, lam, min_child_weight):
    best_gain = -np.inf
    best_f = -1
    best_b = -1
    parent = g_total * g_total / (h_total + lam)
    for f in range(hist.shape[0]):
        gl = 0.0
        hl = 0.0
        for b in range(bins_per_feature[f] - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            hr = h_total - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gr = g_total - gl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_gain, best_f, best_b


@njit(cache=True)
def predict_margins(x, feature, threshold, left, right, value, roots, tree_class,
                    learning_rate, margins):
    n_rows = x.shape[0]
    for i in range(n_rows):
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if x[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            margins[i, tree_class[t]] += learning_rate * value[node]
    return margins
