"""Synthetic short-axis cardiac phantoms with exact labels.

Geometry: an LV blood-pool disc, a myocardial ring around it, and an RV
crescent hugging the ring on the image's left.  Intensities are per-class
constants plus i.i.d. Gaussian noise; labels are noise free.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import DatasetManifest, SliceRecord, write_manifest, write_pgm, write_raw
from .errors import InvalidArgumentError

BACKGROUND, RV, MYO, LV = 0, 1, 2, 3
CLASS_MEANS = (0.2, 0.55, 0.4, 0.75)

# RV circle: centre offset and radius as fractions of the ring's outer radius
_RV_OFFSET = (0.5, 0.8)
_RV_RADIUS = (0.9, 1.2)
_CENTRE_JITTER = 0.05
_MARGIN = 2


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    image_size: int = 224
    noise_sigma: float = 0.08
    lv_radius: tuple = (12, 30)
    myo_thickness: tuple = (5, 12)
    class_means: tuple = CLASS_MEANS


def _check_fits(spec):
    s = spec.image_size
    if spec.noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma must be >= 0")
    lv_lo, lv_hi = spec.lv_radius
    t_lo, t_hi = spec.myo_thickness
    if not (0 < lv_lo <= lv_hi and 0 < t_lo <= t_hi):
        raise InvalidArgumentError("geometry ranges must be positive and ordered")
    r_out = lv_hi + t_hi
    jitter = _CENTRE_JITTER * s
    left_extent = r_out * (_RV_OFFSET[1] + _RV_RADIUS[1])
    vertical = r_out * _RV_RADIUS[1]
    if (s / 2 - jitter - left_extent < _MARGIN or s / 2 + jitter + r_out > s - _MARGIN
            or s / 2 - jitter - vertical < _MARGIN):
        raise InvalidArgumentError(
            f"LV radius {spec.lv_radius} and MYO thickness {spec.myo_thickness} "
            f"cannot fit in a {s}x{s} image"
        )


def phantom_labels(spec, rng):
    _check_fits(spec)
    s = spec.image_size
    jitter = _CENTRE_JITTER * s
    cy = s / 2 + rng.uniform(-jitter, jitter)
    cx = s / 2 + rng.uniform(-jitter, jitter)
    r_lv = rng.uniform(*spec.lv_radius)
    r_out = r_lv + rng.uniform(*spec.myo_thickness)
    rv_dx = r_out * rng.uniform(*_RV_OFFSET)
    rv_r = r_out * rng.uniform(*_RV_RADIUS)

    yy, xx = np.mgrid[0:s, 0:s] + 0.5
    d_lv = np.hypot(yy - cy, xx - cx)
    d_rv = np.hypot(yy - cy, xx - (cx - rv_dx))
    labels = np.zeros((s, s), dtype=np.uint8)
    labels[(d_rv <= rv_r) & (d_lv > r_out) & (xx < cx)] = RV
    labels[(d_lv <= r_out) & (d_lv > r_lv)] = MYO
    labels[d_lv <= r_lv] = LV
    return labels


def generate_phantom(spec=None):
    """``(image, labels)``: (S, S, 1) float image and (S, S) uint8 labels."""
    spec = spec or PhantomSpec()
    rng = np.random.default_rng(spec.seed)
    labels = phantom_labels(spec, rng)
    means = np.asarray(spec.class_means, dtype=np.float64)
    image = means[labels]
    if spec.noise_sigma > 0:
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    if np.any(np.bincount(labels.ravel(), minlength=4) == 0):
        raise InvalidArgumentError("phantom geometry left a class empty")
    return image[:, :, None], labels


def default_split_counts(count):
    """Train/val/test counts in a 5:1:2 ratio."""
    n_val = count // 8
    n_test = count // 4
    return count - n_val - n_test, n_val, n_test


def write_phantom_set(out_dir, count, seed=0, noise_sigma=0.08, counts=None, **spec_kwargs):
    """Write ``count`` single-slice phantom subjects plus ``manifest.tsv``.

    Images are stored as raw float32 tensors, labels as 8-bit PGM.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = counts or default_split_counts(count)
    if sum(counts) != count:
        raise InvalidArgumentError(f"split counts {counts} do not sum to {count}")
    splits = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
    records = []
    for i in range(count):
        spec = PhantomSpec(seed=int(seeds[i]), noise_sigma=noise_sigma, **spec_kwargs)
        image, labels = generate_phantom(spec)
        name = f"phantom_{i:04d}"
        write_raw(out_dir / f"{name}.sst", image)
        write_pgm(out_dir / f"{name}_label.pgm", labels, maxval=255)
        records.append(SliceRecord(str(out_dir / f"{name}.sst"), str(out_dir / f"{name}_label.pgm"),
                                   name, splits[i]))
    manifest = DatasetManifest(records)
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest
