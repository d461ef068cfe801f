"""Dense (H, W, C) tensor plumbing: neighbourhood patches, pooling, resizing.

Feature maps are plain ``float64`` numpy arrays of shape ``(H, W, C)`` in
row-major order.  Patch matrices carry the source shape alongside the data
so a transformed matrix can be folded back into a map.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class PatchMatrix:
    """One flattened k*k*C neighbourhood per source pixel, rows in pixel order."""

    data: np.ndarray
    source_shape: tuple

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]


def as_feature_map(t, name="feature map"):
    """Validate ``t`` as a finite (H, W, C) array and return it as float64."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 2:
        t = t[:, :, None]
    if t.ndim != 3 or min(t.shape) < 1:
        raise InvalidArgumentError(f"{name} must have shape (H, W, C), got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return t


def extract_patches(t, window=3):
    """Zero-padded ``window x window`` neighbourhood of every pixel.

    Each row is flattened in (dy, dx, channel) order, channel fastest, so
    for ``window=3`` the centre pixel occupies columns ``4*C .. 5*C``.
    """
    if int(window) != window or window < 1 or window % 2 == 0:
        raise InvalidArgumentError(f"window must be a positive odd integer, got {window}")
    window = int(window)
    t = as_feature_map(t)
    h, w, c = t.shape
    r = window // 2
    padded = np.pad(t, ((r, r), (r, r), (0, 0)))
    # (H, W, C, k, k) view -> (H, W, k, k, C)
    view = np.lib.stride_tricks.sliding_window_view(padded, (window, window), axis=(0, 1))
    patches = np.ascontiguousarray(view.transpose(0, 1, 3, 4, 2)).reshape(h * w, window * window * c)
    return PatchMatrix(patches, (h, w, c))


def max_pool(t):
    """2x2 max pooling with stride 2."""
    t = as_feature_map(t)
    h, w, c = t.shape
    if h % 2 or w % 2:
        raise InvalidArgumentError(f"max_pool needs even spatial dims, got {h}x{w}")
    return t.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))


def upsample_nearest(t, target_h, target_w):
    """Nearest-neighbour block replication by integer factors."""
    t = as_feature_map(t)
    h, w, _ = t.shape
    if target_h % h or target_w % w or target_h < h or target_w < w:
        raise InvalidArgumentError(
            f"cannot upsample {h}x{w} to {target_h}x{target_w}: scale must be a positive integer"
        )
    sy, sx = target_h // h, target_w // w
    if sy == 1 and sx == 1:
        return t
    return np.repeat(np.repeat(t, sy, axis=0), sx, axis=1)


def concat_channels(maps):
    if not maps:
        raise InvalidArgumentError("concat_channels needs at least one map")
    maps = [as_feature_map(m) for m in maps]
    hw = maps[0].shape[:2]
    for m in maps[1:]:
        if m.shape[:2] != hw:
            raise InvalidArgumentError(f"spatial mismatch: {m.shape[:2]} vs {hw}")
    if len(maps) == 1:
        return maps[0]
    return np.concatenate(maps, axis=2)
