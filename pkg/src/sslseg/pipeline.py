"""End-to-end training and inference.

Training: preprocess -> fit cascade -> class-wise entropy -> channel
selection -> balanced pixel sampling -> boosted trees.  The CRF carries no
learned parameters; its configuration is stored as given.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .cascade import CascadeConfig, CascadeModel, fit_transform_cascade, transform_cascade
from .crf import CrfConfig, mean_field_refine
from .data_io import TARGET_SIZE, DatasetManifest, load_slice, preprocess, preprocess_labels
from .errors import ConsistencyError, InvalidArgumentError, SSLSegError, VersionError
from .featsel import (
    DEFAULT_KEEP_RATIO,
    EntropyAccumulator,
    SelectionMask,
    apply_selection,
    channel_ranges,
    full_mask,
    select_channels,
)
from .gbdt import GbdtConfig, TreeEnsemble, fit_gbdt, predict_proba
from .metrics import dice_report
from .saab import count_params

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SamplingConfig:
    """Per-slice training-pixel sampling.

    Background pixels are capped at ``background_factor`` times the largest
    foreground class (never below ``min_background``); the balanced set is
    then thinned uniformly to at most ``max_pixels_per_slice``.
    """

    background_factor: float = 2.0
    min_background: int = 64
    max_pixels_per_slice: int = 3000


@dataclass
class ModelBundle:
    cascade: CascadeModel
    selection: SelectionMask
    ensemble: TreeEnsemble
    crf: CrfConfig
    image_size: int = TARGET_SIZE
    seed: int = 0
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        check_bundle(self)

    @property
    def num_features(self):
        return self.selection.num_kept


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray  # (H, W, 4)
    labels_pre_crf: np.ndarray  # argmax of probs
    labels: np.ndarray  # after CRF


def check_bundle(bundle):
    cascade, selection = bundle.cascade, bundle.selection
    if selection.unit_channels != cascade.channels:
        raise ConsistencyError(
            f"selection mask covers channels {selection.unit_channels}, "
            f"cascade produces {cascade.channels}"
        )
    if bundle.ensemble.num_features != selection.num_kept:
        raise ConsistencyError(
            f"ensemble expects {bundle.ensemble.num_features} features, "
            f"selection keeps {selection.num_kept}"
        )
    if cascade.input_shape != (bundle.image_size, bundle.image_size):
        raise ConsistencyError("cascade input shape does not match the preprocessing size")


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SSLSegError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def sample_pixels(labels, rng, config=None):
    """Flat indices of the training pixels drawn from one label map."""
    config = config or SamplingConfig()
    flat = np.asarray(labels).ravel()
    fg = [np.flatnonzero(flat == c) for c in (1, 2, 3)]
    bg = np.flatnonzero(flat == 0)
    cap = max(int(config.background_factor * max(len(f) for f in fg)), config.min_background)
    if bg.size > cap:
        bg = rng.choice(bg, size=cap, replace=False)
    idx = np.sort(np.concatenate([bg, *fg]))
    if idx.size > config.max_pixels_per_slice:
        idx = np.sort(rng.choice(idx, size=config.max_pixels_per_slice, replace=False))
    return idx


def pixel_features(unit_maps, size, flat_index=None):
    """Rows of concatenated (upsampled) features for the given pixels, or all pixels.

    Coarse maps are indexed at ``pixel // scale``, which is exactly the
    value nearest-neighbour upsampling places there.
    """
    unit_maps = [m for m in unit_maps if m.shape[2] > 0]
    if flat_index is None:
        flat_index = np.arange(size * size)
    r, c = np.divmod(flat_index, size)
    cols = []
    for m in unit_maps:
        s = size // m.shape[0]
        cols.append(m[r // s, c // s, :])
    return np.ascontiguousarray(np.concatenate(cols, axis=1))


def _load_training_slices(records, size):
    images, labels = [], []
    for rec in records:
        img, lab = load_slice(rec)
        if lab is None:
            raise InvalidArgumentError(f"training slice {rec.image_path} has no labels")
        images.append(preprocess(img, size))
        labels.append(preprocess_labels(lab, size))
    return images, labels


def _records(manifest_or_records, split=None):
    if isinstance(manifest_or_records, DatasetManifest):
        return manifest_or_records.split(split) if split else list(manifest_or_records.records)
    recs = list(manifest_or_records)
    return [r for r in recs if r.split == split] if split else recs


def train_on_arrays(images, labels, cascade_config=None, gbdt_config=None, crf_config=None,
                    seed=0, keep_ratio=DEFAULT_KEEP_RATIO, feature_selection=True,
                    sampling=None, image_size=TARGET_SIZE):
    """Train from already preprocessed (S, S, 1) images and (S, S) label maps."""
    cascade_config = cascade_config or CascadeConfig()
    gbdt_config = gbdt_config or GbdtConfig()
    crf_config = crf_config or CrfConfig()
    if not images:
        raise InvalidArgumentError("training split is empty")
    seeds = np.random.SeedSequence(seed).generate_state(3)

    log.info("fitting %d-unit cascade on %d slices", cascade_config.num_units, len(images))
    cascade, features = _stage("cascade", fit_transform_cascade, images, cascade_config,
                               int(seeds[0]))

    log.info("scoring %d channels", sum(cascade.channels))
    ranges = channel_ranges(features)
    acc = EntropyAccumulator(cascade.channels, ranges)
    for feats, lab in zip(features, labels):
        _stage("featsel", acc.add, feats, lab)
    entropies = acc.result()
    if feature_selection:
        mask = _stage("featsel", select_channels, entropies, keep_ratio)
    else:
        mask = full_mask(cascade.channels, ranges, [e.per_class for e in entropies])

    rng = np.random.default_rng(int(seeds[1]))
    rows, targets = [], []
    for feats, lab in zip(features, labels):
        idx = sample_pixels(lab, rng, sampling)
        rows.append(pixel_features(apply_selection(mask, feats), image_size, idx))
        targets.append(lab.ravel()[idx])
    del features
    x = np.vstack(rows)
    y = np.concatenate(targets).astype(np.int64)
    log.info("boosting on %d pixels x %d features", *x.shape)
    ensemble = _stage("gbdt", fit_gbdt, x, y, replace(gbdt_config, seed=int(seeds[2])))
    return ModelBundle(cascade, mask, ensemble, crf_config, image_size, int(seed))


def train_pipeline(manifest, cascade_config=None, gbdt_config=None, crf_config=None, seed=0,
                   keep_ratio=DEFAULT_KEEP_RATIO, feature_selection=True, sampling=None,
                   image_size=TARGET_SIZE):
    records = _records(manifest, "train")
    if not records:
        raise InvalidArgumentError("manifest has no training slices")
    images, labels = _stage("preprocess", _load_training_slices, records, image_size)
    return train_on_arrays(images, labels, cascade_config, gbdt_config, crf_config, seed,
                           keep_ratio, feature_selection, sampling, image_size)


def predict_preprocessed(bundle, image, crf_config=None):
    """Inference on an image that is already preprocessed to the bundle's size."""
    size = bundle.image_size
    maps = transform_cascade(bundle.cascade, image)
    x = pixel_features(apply_selection(bundle.selection, maps), size)
    probs = predict_proba(bundle.ensemble, x).reshape(size, size, bundle.ensemble.num_classes)
    pre = np.argmax(probs, axis=2).astype(np.uint8)
    post = mean_field_refine(probs, image, crf_config or bundle.crf)
    return Prediction(probs, pre, post)


def predict(bundle, image, crf_config=None):
    """Preprocess a raw (H, W, 1) image and return probabilities and both label maps."""
    if bundle.format_version != FORMAT_VERSION:
        raise VersionError(f"bundle format {bundle.format_version}, expected {FORMAT_VERSION}")
    return predict_preprocessed(bundle, preprocess(image, bundle.image_size), crf_config)


def evaluate(bundle, records, per_subject=False, use_crf=True):
    """Dice report for labelled records (labels resized like the images)."""
    records = list(records)
    if not records:
        raise InvalidArgumentError("evaluation split is empty")
    preds, truths, subjects = [], [], []
    for rec in records:
        img, lab = load_slice(rec)
        if lab is None:
            raise InvalidArgumentError(f"{rec.image_path}: evaluation needs labels")
        out = predict(bundle, img)
        preds.append(out.labels if use_crf else out.labels_pre_crf)
        truths.append(preprocess_labels(lab, bundle.image_size))
        subjects.append(rec.subject_id)
    return dice_report(preds, truths, subjects if per_subject else None)


def evaluate_manifest(bundle, manifest, split="test", per_subject=False, use_crf=True):
    return evaluate(bundle, _records(manifest, split), per_subject, use_crf)


def report_params(bundle):
    """Parameter counts per stage; tree nodes are reported apart from the Saab weights."""
    cascade = count_params(bundle.cascade.banks)
    trees = bundle.ensemble.num_nodes()
    leaves = sum(int(np.count_nonzero(t.feature < 0)) for t in bundle.ensemble.trees)
    return {
        "cascade_params": cascade,
        "cascade_weights": sum(b.num_kernels * b.input_dim for b in bundle.cascade.banks),
        "cascade_biases": sum(b.num_kernels for b in bundle.cascade.banks),
        "kept_channels": bundle.selection.num_kept,
        "total_channels": bundle.selection.total_channels,
        "trees": len(bundle.ensemble.trees),
        "tree_nodes": trees,
        "tree_leaves": leaves,
    }


def sweep_units(manifest, unit_counts, num_seeds=5, gbdt_config=None, crf_config=None,
                keep_ratio=DEFAULT_KEEP_RATIO, sampling=None, image_size=TARGET_SIZE):
    """Average Dice per unit count over re-drawn train/val splits.

    Train and val subjects are pooled and re-split with each seed (keeping
    the manifest's train/val sizes); scoring uses the test split when the
    manifest has one, otherwise the re-drawn val split.
    """
    from .data_io import split_manifest

    unit_counts = [int(u) for u in unit_counts]
    if num_seeds < 1:
        raise InvalidArgumentError("num_seeds must be >= 1")
    configs = {u: CascadeConfig.for_units(u) for u in unit_counts}
    for cfg in configs.values():
        cfg.check_input_shape(image_size, image_size)
    pool = [r for r in manifest.records if r.split in ("train", "val")]
    n_train = len(manifest.subjects("train"))
    n_val = len(manifest.subjects("val"))
    test = manifest.split("test")
    rows = []
    for u in unit_counts:
        scores = []
        for s in range(num_seeds):
            split = split_manifest(pool, s, (n_train, n_val, 0))
            bundle = train_pipeline(split, configs[u], gbdt_config, crf_config, seed=s,
                                    keep_ratio=keep_ratio, sampling=sampling, image_size=image_size)
            target = test if test else split.split("val")
            scores.append(evaluate(bundle, target).average)
            log.info("units=%d seed=%d dice=%.4f", u, s, scores[-1])
        rows.append((u, float(np.mean(scores)), float(np.std(scores))))
    return rows
