import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslseg.errors import InvalidArgumentError
from sslseg.tensor import concat_channels, extract_patches, max_pool, upsample_nearest


def test_window_on_3x3_matches_hand_layout():
    img = np.arange(1, 10, dtype=float).reshape(3, 3, 1)
    p = extract_patches(img, 3)
    assert p.data.shape == (9, 9)
    assert p.source_shape == (3, 3, 1)
    # centre pixel sees the whole image in raster order
    np.testing.assert_array_equal(p.data[4], np.arange(1, 10))
    # top-left pixel: zero row and column of padding
    np.testing.assert_array_equal(p.data[0], [0, 0, 0, 0, 1, 2, 0, 4, 5])
    # bottom-right pixel
    np.testing.assert_array_equal(p.data[8], [5, 6, 0, 8, 9, 0, 0, 0, 0])


def test_channel_is_fastest_axis():
    img = np.zeros((3, 3, 2))
    img[1, 1] = [7.0, 8.0]
    row = extract_patches(img, 3).data[4]
    np.testing.assert_array_equal(row[8:10], [7.0, 8.0])
    assert row.sum() == 15.0


def test_patch_widths_for_default_cascade():
    for c, cols in [(1, 9), (5, 45), (10, 90), (30, 270)]:
        assert extract_patches(np.ones((4, 4, c))).cols == cols


def test_max_pool_and_shapes():
    t = np.arange(16, dtype=float).reshape(4, 4, 1)
    np.testing.assert_array_equal(max_pool(t)[:, :, 0], [[5, 7], [13, 15]])
    shape = (224, 224, 1)
    sizes = []
    for _ in range(3):
        shape = max_pool(np.zeros(shape)).shape
        sizes.append(shape[0])
    assert sizes == [112, 56, 28]
    with pytest.raises(InvalidArgumentError):
        max_pool(np.zeros((3, 4, 1)))


def test_upsample_nearest_blocks():
    t = np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None]
    up = upsample_nearest(t, 4, 4)[:, :, 0]
    np.testing.assert_array_equal(up, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])
    with pytest.raises(InvalidArgumentError):
        upsample_nearest(t, 5, 4)


def test_concat_and_errors():
    a, b = np.zeros((2, 2, 3)), np.ones((2, 2, 2))
    assert concat_channels([a, b]).shape == (2, 2, 5)
    with pytest.raises(InvalidArgumentError):
        concat_channels([a, np.ones((4, 4, 1))])
    with pytest.raises(InvalidArgumentError):
        extract_patches(np.full((3, 3, 1), np.nan))
    with pytest.raises(InvalidArgumentError):
        extract_patches(np.zeros((3, 3, 1)), window=2)


@settings(max_examples=40, deadline=None)
@given(h=st.integers(2, 6), w=st.integers(2, 6), c=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_patch_centre_column_is_the_image(h, w, c, seed):
    img = np.random.default_rng(seed).normal(size=(h, w, c))
    p = extract_patches(img, 3)
    np.testing.assert_array_equal(p.data[:, 4 * c : 5 * c], img.reshape(-1, c))
    # every input value appears in exactly 9 rows minus the ones clipped by the border
    assert p.rows == h * w


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 5), w=st.integers(1, 5), s=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_pool_of_upsample_is_identity(h, w, s, seed):
    t = np.random.default_rng(seed).normal(size=(h, w, 2))
    up = upsample_nearest(t, 2 * h, 2 * w)
    np.testing.assert_array_equal(max_pool(up), t)
