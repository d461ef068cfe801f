import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslseg import kernels
from sslseg.errors import InvalidArgumentError
from sslseg.gbdt import (
    MIN_SPLIT_GAIN,
    GbdtConfig,
    TreeEnsemble,
    bin_edges,
    fit_gbdt,
    log_loss,
    predict_margins,
    predict_proba,
    quantize,
    softmax,
)

EXACT = dict(exact_splits=True, row_subsample=1.0)


def _brute_best_split(x, g, h, lam, mcw, candidates):
    """Try every candidate threshold of every feature; first maximum wins.

    ``candidates[f]`` are midpoints of the feature's distinct values over the
    whole training set, so several may induce the same partition of a node.
    """
    gt, ht = g.sum(), h.sum()
    parent = gt * gt / (ht + lam)
    best = (MIN_SPLIT_GAIN, -1, None)
    for f in range(x.shape[1]):
        for t in candidates[f]:
            left = x[:, f] <= t
            gl, hl = g[left].sum(), h[left].sum()
            gr, hr = gt - gl, ht - hl
            if hl < mcw or hr < mcw:
                continue
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if gain > best[0] + 1e-12 * abs(best[0]):
                best = (gain, f, t)
    return best


def _midpoints(x):
    out = []
    for f in range(x.shape[1]):
        vals = np.unique(x[:, f])
        out.append((vals[:-1] + vals[1:]) / 2)
    return out


def _check_tree(tree, x, rows, g, h, cfg, node=0, depth=0):
    cands = _midpoints(x)
    if tree.feature[node] < 0:
        # either depth cap or no admissible split
        if depth < cfg.max_depth and rows.size >= 2:
            assert _brute_best_split(x[rows], g[rows], h[rows], cfg.l2_reg, cfg.min_child_weight, cands)[1] == -1
        expect = -g[rows].sum() / (h[rows].sum() + cfg.l2_reg)
        assert tree.value[node] == pytest.approx(expect, rel=1e-9, abs=1e-12)
        return
    gain, f, t = _brute_best_split(x[rows], g[rows], h[rows], cfg.l2_reg, cfg.min_child_weight, cands)
    assert (tree.feature[node], tree.threshold[node]) == (f, t)
    left = x[rows, f] <= t
    _check_tree(tree, x, rows[left], g, h, cfg, tree.left[node], depth + 1)
    _check_tree(tree, x, rows[~left], g, h, cfg, tree.right[node], depth + 1)


@pytest.mark.parametrize("seed", range(4))
def test_splits_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 60 + 35 * seed
    x = np.round(rng.normal(size=(n, 2 + seed % 4)), 2)
    y = rng.integers(0, 4, size=n)
    cfg = GbdtConfig(num_rounds=3, max_depth=3, **EXACT)
    ens = fit_gbdt(x, y, cfg)
    onehot = np.eye(4)[y]
    margins = np.zeros((n, 4))
    for r in range(cfg.num_rounds):
        p = softmax(margins)
        trees = ens.trees[4 * r : 4 * r + 4]
        for k, tree in enumerate(trees):
            g = p[:, k] - onehot[:, k]
            hh = np.maximum(p[:, k] * (1 - p[:, k]), 1e-16)
            _check_tree(tree, x, np.arange(n), g, hh, cfg)
        sub = TreeEnsemble(x.shape[1], cfg.learning_rate, ens.trees[: 4 * r + 4])
        margins = predict_margins(sub, x)


def test_single_leaf_closed_form():
    y = np.array([0, 0, 1, 2, 3, 3, 3])
    ens = fit_gbdt(np.zeros((7, 1)), y, GbdtConfig(num_rounds=1, max_depth=0, row_subsample=1.0))
    counts = np.bincount(y, minlength=4)
    g = 0.25 * 7 - counts
    w = -g / (7 * 0.1875 + 1.0)
    np.testing.assert_allclose([t.value[0] for t in ens.trees], w, rtol=1e-12)
    probs = predict_proba(ens, np.zeros((1, 1)))[0]
    np.testing.assert_allclose(probs, softmax((0.3 * w)[None])[0], atol=1e-15)


def test_empty_ensemble_is_uniform():
    ens = fit_gbdt(np.ones((4, 2)), np.array([0, 1, 2, 3]), GbdtConfig(num_rounds=0))
    np.testing.assert_array_equal(predict_proba(ens, np.ones((2, 2))), 0.25)


def test_two_classes_split_at_zero():
    x = np.concatenate([-np.arange(1.0, 13.0), np.arange(1.0, 13.0)])[:, None]
    y = np.repeat([1, 3], 12)
    ens = fit_gbdt(x, y, GbdtConfig(num_rounds=10, max_depth=1, row_subsample=1.0))
    first = ens.trees[:4]
    # classes 1 and 3 split at the gap; classes 0 and 2 have zero gradient difference
    for k in (1, 3):
        assert first[k].feature[0] == 0 and first[k].threshold[0] == 0.0
    np.testing.assert_array_equal(predict_proba(ens, x).argmax(1), y)


def _single_leaf_oracle(n, label, rounds, lr=0.3, lam=1.0):
    m = np.zeros(4)
    y = np.eye(4)[label]
    for _ in range(rounds):
        p = np.exp(m - m.max())
        p /= p.sum()
        m = m + lr * (-n * (p - y) / (n * np.maximum(p * (1 - p), 1e-16) + lam))
    p = np.exp(m - m.max())
    return p / p.sum()


def test_constant_labels_match_single_leaf_oracle():
    n = 200
    x = np.random.default_rng(0).normal(size=(n, 2))
    ens = fit_gbdt(x, np.full(n, 2), GbdtConfig(num_rounds=10, row_subsample=1.0))
    probs = predict_proba(ens, x)
    expect = _single_leaf_oracle(n, 2, 10)
    np.testing.assert_allclose(probs, np.broadcast_to(expect, probs.shape), atol=1e-12)
    assert probs[:, 2].min() >= 0.99


def test_loss_non_increasing_with_subsampling():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(200, 4))
    y = (x[:, 0] > 0).astype(int) + 2 * (x[:, 1] > 0.5)
    ens = fit_gbdt(x, y, GbdtConfig(num_rounds=100, row_subsample=0.8, seed=3))
    assert np.all(np.diff(ens.loss_history) <= 1e-9)


def test_margins_reproduce_training_loss():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(150, 3))
    y = rng.integers(0, 4, size=150)
    ens = fit_gbdt(x, y, GbdtConfig(num_rounds=10))
    assert log_loss(predict_margins(ens, x), y) == ens.loss_history[-1]


def test_bin_edges_rule():
    col = np.array([1.0, 1.0, 2.0, 4.0])
    np.testing.assert_array_equal(bin_edges(col, 64), [1.5, 3.0])
    bins, edges = quantize(col[:, None], 64)
    np.testing.assert_array_equal(bins[:, 0], [0, 0, 1, 2])
    many = np.arange(1000.0)
    e = bin_edges(many, 16)
    assert len(e) <= 15
    assert np.all(np.isin(e - 0.5, many))


def test_errors():
    with pytest.raises(InvalidArgumentError):
        fit_gbdt(np.ones((3, 2)), np.array([0, 1, 4]))
    with pytest.raises(InvalidArgumentError):
        fit_gbdt(np.array([[np.nan]]), np.array([0]))
    ens = fit_gbdt(np.ones((4, 2)), np.array([0, 1, 2, 3]), GbdtConfig(num_rounds=1))
    with pytest.raises(InvalidArgumentError):
        predict_proba(ens, np.ones((1, 3)))
    with pytest.raises(InvalidArgumentError):
        GbdtConfig(row_subsample=0.0)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(8, 120), c=st.integers(1, 4), seed=st.integers(0, 2**16))
def test_properties(n, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, c))
    y = rng.integers(0, 4, size=n)
    ens = fit_gbdt(x, y, GbdtConfig(num_rounds=5, max_depth=3, seed=seed))
    p = predict_proba(ens, x)
    assert p.min() >= 0
    np.testing.assert_allclose(p.sum(1), 1.0, atol=1e-9)
    assert np.all(np.diff(ens.loss_history) <= 1e-9)
    assert all(t.depth() <= 3 for t in ens.trees)
    # every threshold sits strictly between two observed values of its feature
    for t in ens.trees:
        for f, thr in zip(t.feature, t.threshold):
            if f >= 0:
                col = x[:, f]
                assert col.min() < thr < col.max()
                assert not np.any(col == thr)


@pytest.mark.skipif(kernels.numba_impl is None, reason="numba not installed")
def test_backends_agree():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(300, 5))
    bins, edges = quantize(x, 16)
    g, h = rng.normal(size=300), rng.uniform(0.1, 0.3, size=300)
    rows = np.sort(rng.choice(300, 200, replace=False)).astype(np.int64)
    h1 = kernels.numpy_impl.build_histogram(bins, rows, g, h, 16)
    h2 = kernels.numba_impl.build_histogram(bins, rows, g, h, 16)
    np.testing.assert_allclose(h1, h2, rtol=1e-12, atol=1e-12)
    bpf = np.array([len(e) + 1 for e in edges], dtype=np.int64)
    s1 = kernels.numpy_impl.best_split(h1, bpf, g[rows].sum(), h[rows].sum(), 1.0, 1.0)
    s2 = kernels.numba_impl.best_split(h1, bpf, g[rows].sum(), h[rows].sum(), 1.0, 1.0)
    assert s1[1:] == s2[1:] and s1[0] == pytest.approx(s2[0], rel=1e-12)
    ens = fit_gbdt(x, rng.integers(0, 4, 300), GbdtConfig(num_rounds=5))
    flat = ens.flattened()
    m1, m2 = np.zeros((300, 4)), np.zeros((300, 4))
    kernels.numpy_impl.predict_margins(x, *flat, ens.learning_rate, m1)
    kernels.numba_impl.predict_margins(x, *flat, ens.learning_rate, m2)
    np.testing.assert_array_equal(m1, m2)
