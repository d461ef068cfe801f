"""Class-wise entropy scoring and channel selection.

A channel scores low when, inside every ground-truth class, its values
concentrate in few histogram bins.  Scores come from a 32-bin histogram
over each channel's training min-max range, accumulated per class; the
lowest-scoring fraction of channels (across all units) is kept.

Features coarser than the label grid are handled without materialising
the upsampled maps: each coarse pixel is weighted by the class counts of
the label block it replicates into, which yields exactly the histogram of
the nearest-neighbour upsampled map.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .tensor import as_feature_map

N_BINS = 32
NUM_CLASSES = 4
DEFAULT_KEEP_RATIO = 0.8


@dataclass(frozen=True)
class ChannelEntropy:
    unit_index: int
    channel_index: int
    per_class: tuple  # one entropy per class, natural log
    total: float
    value_range: tuple  # (min, max) over the training set


@dataclass(frozen=True)
class SelectionMask:
    keep: tuple  # one boolean array per unit
    keep_ratio: float
    ranges: np.ndarray  # (C_total, 2)
    entropies: np.ndarray  # (C_total, NUM_CLASSES)

    @property
    def unit_channels(self):
        return [len(k) for k in self.keep]

    @property
    def total_channels(self):
        return sum(self.unit_channels)

    @property
    def num_kept(self):
        return int(sum(int(np.count_nonzero(k)) for k in self.keep))

    def kept_channels(self):
        """``(unit, channel)`` pairs in concatenation order."""
        return [(u, int(c)) for u, k in enumerate(self.keep) for c in np.flatnonzero(k)]


def num_to_keep(total, keep_ratio):
    return max(1, int(np.floor(keep_ratio * total + 1e-9)))


def _as_unit_list(item):
    if isinstance(item, np.ndarray):
        return [item]
    return list(item)


def _entropy(counts):
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / np.where(total > 0, total, 1.0), 0.0)
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def bin_index(values, lo, hi, n_bins=N_BINS):
    """Histogram bin of each value; out-of-range values clamp to the edge bins."""
    span = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(span > 0, (values - lo) / np.where(span > 0, span, 1.0) * n_bins, 0.0)
    return np.clip(np.floor(scaled), 0, n_bins - 1).astype(np.int64)


class EntropyAccumulator:
    """Streaming per-class histograms for a fixed channel layout and value ranges."""

    def __init__(self, unit_channels, ranges, num_classes=NUM_CLASSES, n_bins=N_BINS):
        self.unit_channels = [int(c) for c in unit_channels]
        self.ranges = np.asarray(ranges, dtype=np.float64)
        if self.ranges.shape != (sum(self.unit_channels), 2):
            raise InvalidArgumentError("ranges must have one (min, max) row per channel")
        self.num_classes = num_classes
        self.n_bins = n_bins
        self.counts = np.zeros((self.ranges.shape[0], num_classes, n_bins))

    def add(self, unit_maps, labels):
        labels = np.asarray(labels)
        if labels.ndim != 2:
            raise InvalidArgumentError(f"label map must be 2-D, got shape {labels.shape}")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise InvalidArgumentError(f"labels must lie in 0..{self.num_classes - 1}")
        unit_maps = _as_unit_list(unit_maps)
        if [m.shape[2] for m in unit_maps] != self.unit_channels:
            raise InvalidArgumentError("feature channel layout does not match the accumulator")
        lh, lw = labels.shape
        onehot = (labels[:, :, None] == np.arange(self.num_classes)).astype(np.float64)
        offset = 0
        for fmap in unit_maps:
            h, w, c = fmap.shape
            if lh % h or lw % w:
                raise InvalidArgumentError(
                    f"feature map {h}x{w} does not tile the {lh}x{lw} label map"
                )
            sy, sx = lh // h, lw // w
            weights = onehot.reshape(h, sy, w, sx, self.num_classes).sum(axis=(1, 3))
            weights = weights.reshape(h * w, self.num_classes)
            lo = self.ranges[offset : offset + c, 0]
            hi = self.ranges[offset : offset + c, 1]
            bins = bin_index(fmap.reshape(h * w, c), lo, hi, self.n_bins)
            flat = (bins + np.arange(c) * self.n_bins).ravel()
            for j in range(self.num_classes):
                if not weights[:, j].any():
                    continue
                wj = np.repeat(weights[:, j], c)
                hist = np.bincount(flat, weights=wj, minlength=c * self.n_bins)
                self.counts[offset : offset + c, j, :] += hist.reshape(c, self.n_bins)
            offset += c

    def result(self):
        per_class = _entropy(self.counts)
        out = []
        idx = 0
        for u, c in enumerate(self.unit_channels):
            for ch in range(c):
                row = per_class[idx]
                out.append(
                    ChannelEntropy(
                        unit_index=u,
                        channel_index=ch,
                        per_class=tuple(float(v) for v in row),
                        total=float(row.sum()),
                        value_range=(float(self.ranges[idx, 0]), float(self.ranges[idx, 1])),
                    )
                )
                idx += 1
        return out


def channel_ranges(features):
    """Per-channel (min, max) over a list of per-image unit-map lists."""
    lo = hi = None
    for item in features:
        maps = _as_unit_list(item)
        mins = np.concatenate([m.reshape(-1, m.shape[2]).min(axis=0) for m in maps])
        maxs = np.concatenate([m.reshape(-1, m.shape[2]).max(axis=0) for m in maps])
        lo = mins if lo is None else np.minimum(lo, mins)
        hi = maxs if hi is None else np.maximum(hi, maxs)
    return np.column_stack([lo, hi])


def class_entropy(features, labels, num_classes=NUM_CLASSES, n_bins=N_BINS):
    """Per-channel class-wise entropies over a training set.

    ``features[n]`` is image ``n``'s feature map, or a list of per-unit maps
    whose spatial sizes divide the label map's.
    """
    if len(features) != len(labels) or not features:
        raise InvalidArgumentError("features and labels must be non-empty and of equal length")
    features = [[as_feature_map(m) for m in _as_unit_list(item)] for item in features]
    layout = [m.shape[2] for m in features[0]]
    for item in features[1:]:
        if [m.shape[2] for m in item] != layout:
            raise InvalidArgumentError("all images must share the same channel layout")
    acc = EntropyAccumulator(layout, channel_ranges(features), num_classes, n_bins)
    for item, lab in zip(features, labels):
        acc.add(item, lab)
    return acc.result()


def select_channels(entropies, keep_ratio=DEFAULT_KEEP_RATIO):
    """Keep the ``max(1, floor(keep_ratio * C))`` lowest-entropy channels."""
    if not entropies:
        raise InvalidArgumentError("no channel entropies to select from")
    if not 0.0 < keep_ratio <= 1.0:
        raise InvalidArgumentError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    entropies = sorted(entropies, key=lambda e: (e.unit_index, e.channel_index))
    n_units = max(e.unit_index for e in entropies) + 1
    unit_channels = [0] * n_units
    for e in entropies:
        unit_channels[e.unit_index] = max(unit_channels[e.unit_index], e.channel_index + 1)
    if sum(unit_channels) != len(entropies):
        raise InvalidArgumentError("entropy list does not cover a dense (unit, channel) grid")
    ranked = sorted(entropies, key=lambda e: (e.total, e.unit_index, e.channel_index))
    n_keep = num_to_keep(len(entropies), keep_ratio)
    keep = [np.zeros(c, dtype=bool) for c in unit_channels]
    for e in ranked[:n_keep]:
        keep[e.unit_index][e.channel_index] = True
    return SelectionMask(
        keep=tuple(keep),
        keep_ratio=float(keep_ratio),
        ranges=np.array([e.value_range for e in entropies], dtype=np.float64),
        entropies=np.array([e.per_class for e in entropies], dtype=np.float64),
    )


def full_mask(unit_channels, ranges=None, entropies=None):
    """Mask that keeps every channel."""
    total = sum(unit_channels)
    return SelectionMask(
        keep=tuple(np.ones(c, dtype=bool) for c in unit_channels),
        keep_ratio=1.0,
        ranges=np.zeros((total, 2)) if ranges is None else np.asarray(ranges, dtype=np.float64),
        entropies=np.zeros((total, NUM_CLASSES)) if entropies is None else np.asarray(entropies),
    )


def apply_selection(mask, features):
    """Drop unselected channels from each unit's map, preserving channel order."""
    features = _as_unit_list(features)
    if len(features) != len(mask.keep):
        raise InvalidArgumentError(f"mask covers {len(mask.keep)} units, got {len(features)} maps")
    out = []
    for fmap, keep in zip(features, mask.keep):
        fmap = as_feature_map(fmap)
        if fmap.shape[2] != len(keep):
            raise InvalidArgumentError(
                f"map has {fmap.shape[2]} channels but mask expects {len(keep)}"
            )
        out.append(fmap if keep.all() else fmap[:, :, keep])
    return out
