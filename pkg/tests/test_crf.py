import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslseg.crf import CrfConfig, gaussian_taps, kernel_mass, mean_field, mean_field_refine
from sslseg.errors import InvalidArgumentError
from sslseg.metrics import count_isolated_pixels


def _oracle_marginals(probs, intensity, cfg):
    """Dense pairwise sums over a 1-row image, evaluated term by term."""
    n, k = probs.shape
    unary = -np.log(np.maximum(probs, 1e-10))
    q = np.exp(-unary)
    q /= q.sum(1, keepdims=True)
    r_s, r_a = len(gaussian_taps(cfg.spatial_sigma)) // 2, len(gaussian_taps(cfg.appearance_sigma_xy)) // 2
    for _ in range(cfg.iterations):
        energy = unary.copy()
        for p in range(n):
            for j in range(n):
                if j == p:
                    continue
                d = abs(p - j)
                w = 0.0
                if d <= r_s:
                    w += cfg.spatial_weight * np.exp(-d * d / (2 * cfg.spatial_sigma ** 2)) \
                        / kernel_mass(cfg.spatial_sigma)
                if d <= r_a:
                    di = intensity[p] - intensity[j]
                    w += cfg.appearance_weight * np.exp(-d * d / (2 * cfg.appearance_sigma_xy ** 2)) \
                        * np.exp(-di * di / (2 * cfg.appearance_sigma_intensity ** 2)) \
                        / kernel_mass(cfg.appearance_sigma_xy)
                energy[p] += w * (1.0 - q[j])
        new = np.exp(-(energy - energy.min(1, keepdims=True)))
        q = 0.5 * q + 0.5 * new / new.sum(1, keepdims=True)
    return q


@pytest.mark.parametrize("sigma_xy", [2.0, 7.0])  # 7 -> radius 21 uses the FFT path
@pytest.mark.parametrize("intensity,iters", [([0.0, 1.0], 1), ([0.0, 0.5, 1.0], 3)])
def test_matches_hand_mean_field(sigma_xy, intensity, iters):
    n = len(intensity)
    probs = np.array([[0.6, 0.2, 0.1, 0.1], [0.1, 0.3, 0.5, 0.1], [0.25, 0.25, 0.25, 0.25]])[:n]
    cfg = CrfConfig(iterations=iters, spatial_weight=2.0, appearance_weight=4.0, spatial_sigma=1.0,
                    appearance_sigma_xy=sigma_xy, appearance_sigma_intensity=0.1)
    image = np.array(intensity)[None, :, None]
    got = mean_field(probs[None], image, cfg)[0]
    np.testing.assert_allclose(got, _oracle_marginals(probs, np.array(intensity), cfg), atol=1e-9)


def test_two_pixel_single_update_by_hand():
    # spatial kernel only, sigma 1: neighbour weight exp(-1/2) / mass
    probs = np.array([[[0.7, 0.1, 0.1, 0.1], [0.1, 0.1, 0.1, 0.7]]])
    cfg = CrfConfig(iterations=1, spatial_weight=3.0, appearance_weight=0.0, spatial_sigma=1.0)
    k = 3.0 * np.exp(-0.5) / kernel_mass(1.0)
    u = -np.log(probs[0])
    e0 = u[0] + k * (1 - probs[0, 1])
    e1 = u[1] + k * (1 - probs[0, 0])
    s0, s1 = np.exp(-e0) / np.exp(-e0).sum(), np.exp(-e1) / np.exp(-e1).sum()
    expect = np.stack([0.5 * probs[0, 0] + 0.5 * s0, 0.5 * probs[0, 1] + 0.5 * s1])
    got = mean_field(probs, np.zeros((1, 2, 1)), cfg)[0]
    np.testing.assert_allclose(got, expect, atol=1e-12)


def _noisy_case(seed, size=24, flips=12):
    r = np.random.default_rng(seed)
    labels = np.zeros((size, size), dtype=int)
    yy, xx = np.mgrid[:size, :size]
    labels[np.hypot(yy - size / 2, xx - size / 2) < size / 3] = 2
    labels[np.hypot(yy - size / 2, xx - size / 2) < size / 5] = 3
    labels[:, : size // 5] = 1
    image = np.array([0.2, 0.55, 0.4, 0.75])[labels] + r.normal(0, 0.05, labels.shape)
    noisy = labels.copy()
    idx = r.choice(size * size, flips, replace=False)
    noisy.ravel()[idx] = (noisy.ravel()[idx] + r.integers(1, 4, flips)) % 4
    probs = np.full((size, size, 4), 0.1)
    np.put_along_axis(probs, noisy[:, :, None], 0.7, axis=2)
    return probs, image[:, :, None], labels


@pytest.mark.parametrize("cfg", [CrfConfig(iterations=0), CrfConfig(spatial_weight=0, appearance_weight=0)])
def test_degenerate_configs_are_argmax(cfg):
    probs, image, _ = _noisy_case(0)
    probs[3, 3] = 0.25  # exact tie resolves to class 0
    assert cfg.is_identity
    out = mean_field_refine(probs, image, cfg)
    np.testing.assert_array_equal(out, np.argmax(probs, axis=2))
    assert out.dtype == np.uint8


def test_uniform_pixel_joins_confident_neighbours():
    probs = np.tile([0.01, 0.01, 0.01, 0.97], (9, 9, 1))
    probs[4, 4] = 0.25
    out = mean_field_refine(probs, np.zeros((9, 9, 1)), CrfConfig(appearance_weight=0.0))
    assert out[4, 4] == 3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16), flips=st.integers(1, 30))
def test_salt_islands_do_not_increase(seed, flips):
    probs, image, _ = _noisy_case(seed, flips=flips)
    before = count_isolated_pixels(np.argmax(probs, axis=2))
    after = count_isolated_pixels(mean_field_refine(probs, image))
    assert after <= before


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), iters=st.integers(1, 4))
def test_marginals_stay_distributions(seed, iters):
    r = np.random.default_rng(seed)
    probs = r.dirichlet(np.ones(4), size=(10, 12))
    q = mean_field(probs, r.uniform(size=(10, 12, 1)), CrfConfig(iterations=iters))
    assert q.min() >= 0
    np.testing.assert_allclose(q.sum(axis=2), 1.0, atol=1e-9)


def test_visit_order_invariance():
    # synchronous updates: transposing the input transposes the output
    probs, image, _ = _noisy_case(3)
    q = mean_field(probs, image)
    qt = mean_field(probs.transpose(1, 0, 2), image.transpose(1, 0, 2))
    np.testing.assert_allclose(qt.transpose(1, 0, 2), q, atol=1e-12)


def test_input_errors():
    with pytest.raises(InvalidArgumentError):
        mean_field_refine(np.full((2, 2, 4), 0.3), np.zeros((2, 2, 1)))
    with pytest.raises(InvalidArgumentError):
        mean_field_refine(np.full((2, 2, 4), 0.25), np.zeros((3, 2, 1)))
    with pytest.raises(InvalidArgumentError):
        CrfConfig(spatial_sigma=0)
    with pytest.raises(InvalidArgumentError):
        CrfConfig(iterations=-1)
