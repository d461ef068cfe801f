"""Cascade of SSL units: neighbourhood construction + Saab, with 2x2 pooling between units."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .saab import apply_saab, count_params, fit_saab
from .tensor import as_feature_map, extract_patches, max_pool

DEFAULT_KERNELS = (5, 10, 30, 100)
# Used when a sweep asks for more units than DEFAULT_KERNELS covers.
KERNEL_SCHEDULE = (5, 10, 30, 100, 200, 400)
MAX_PATCH_ROWS = 1_000_000


@dataclass(frozen=True)
class CascadeConfig:
    kernels: tuple = DEFAULT_KERNELS
    window: int = 3
    max_patch_rows: int = MAX_PATCH_ROWS

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        if len(self.kernels) < 1:
            raise InvalidArgumentError("cascade needs at least one unit")
        if self.window < 1 or self.window % 2 == 0:
            raise InvalidArgumentError(f"window must be a positive odd integer, got {self.window}")
        if self.max_patch_rows < 1:
            raise InvalidArgumentError("max_patch_rows must be positive")
        prev = 1
        for i, f in enumerate(self.kernels):
            if f < 2:
                raise InvalidArgumentError(f"unit {i + 1}: need at least 2 kernels, got {f}")
            if f > self.window * self.window * prev:
                raise InvalidArgumentError(
                    f"unit {i + 1}: {f} kernels exceed patch dim {self.window * self.window * prev}"
                )
            prev = f

    @property
    def num_units(self):
        return len(self.kernels)

    @classmethod
    def for_units(cls, num_units, **kwargs):
        if not 1 <= num_units <= len(KERNEL_SCHEDULE):
            raise InvalidArgumentError(
                f"num_units must be in 1..{len(KERNEL_SCHEDULE)}, got {num_units}"
            )
        return cls(kernels=KERNEL_SCHEDULE[:num_units], **kwargs)

    def input_dims(self):
        dims, prev = [], 1
        for f in self.kernels:
            dims.append(self.window * self.window * prev)
            prev = f
        return dims

    def num_params(self):
        """Anchor weights plus biases implied by the layer shapes (no fitting needed)."""
        return sum(f * d + f for f, d in zip(self.kernels, self.input_dims()))

    def unit_shapes(self, height, width):
        """Spatial size seen by each unit for an ``height x width`` input."""
        self.check_input_shape(height, width)
        return [(height >> i, width >> i) for i in range(self.num_units)]

    def check_input_shape(self, height, width):
        div = 2 ** (self.num_units - 1)
        if height % div or width % div:
            raise InvalidArgumentError(
                f"{height}x{width} input is not divisible by {div} for {self.num_units} units"
            )
        if height // div < self.window or width // div < self.window:
            raise InvalidArgumentError(
                f"{height}x{width} input shrinks below the {self.window}x{self.window} window "
                f"after {self.num_units - 1} poolings"
            )


@dataclass(frozen=True)
class CascadeModel:
    config: CascadeConfig
    banks: list = field(default_factory=list)
    input_shape: tuple = (224, 224)

    def __post_init__(self):
        if len(self.banks) != self.config.num_units:
            raise InvalidArgumentError("one Saab bank per unit is required")
        for i, (bank, f, d) in enumerate(zip(self.banks, self.config.kernels, self.config.input_dims())):
            if bank.num_kernels != f or bank.input_dim != d:
                raise InvalidArgumentError(
                    f"unit {i + 1}: bank is {bank.num_kernels}x{bank.input_dim}, expected {f}x{d}"
                )

    @property
    def channels(self):
        return list(self.config.kernels)

    def num_params(self):
        return count_params(self.banks)


def _check_images(images, config):
    if not images:
        raise InvalidArgumentError("need at least one training image")
    images = [as_feature_map(x, "image") for x in images]
    shape = images[0].shape
    if shape[2] != 1:
        raise InvalidArgumentError(f"cascade input must be single-channel, got {shape[2]} channels")
    for x in images[1:]:
        if x.shape != shape:
            raise InvalidArgumentError(f"image shapes differ: {x.shape} vs {shape}")
    config.check_input_shape(shape[0], shape[1])
    return images


def _sampled_patches(inputs, window, max_rows, rng):
    per_image = [x.shape[0] * x.shape[1] for x in inputs]
    total = sum(per_image)
    if total <= max_rows:
        return np.vstack([extract_patches(x, window).data for x in inputs])
    chosen = np.sort(rng.choice(total, size=max_rows, replace=False))
    bounds = np.cumsum([0] + per_image)
    parts = []
    for x, lo, hi in zip(inputs, bounds[:-1], bounds[1:]):
        a, b = np.searchsorted(chosen, [lo, hi])
        if b > a:
            parts.append(extract_patches(x, window).data[chosen[a:b] - lo])
    return np.vstack(parts)


def fit_transform_cascade(images, config=None, seed=0):
    """Fit every unit in turn and return ``(model, features)``.

    ``features[n][i]`` is unit ``i``'s output for training image ``n``; unit
    ``i + 1`` is fitted on the pooled outputs of unit ``i`` over all images.
    """
    config = config or CascadeConfig()
    images = _check_images(images, config)
    rng = np.random.default_rng(seed)
    banks = []
    features = [[] for _ in images]
    current = images
    for i, f in enumerate(config.kernels):
        if i > 0:
            current = [max_pool(feats[-1]) for feats in features]
        patches = _sampled_patches(current, config.window, config.max_patch_rows, rng)
        bank = fit_saab(patches, f)
        del patches
        banks.append(bank)
        for feats, x in zip(features, current):
            feats.append(apply_saab(bank, extract_patches(x, config.window)))
    model = CascadeModel(config, banks, images[0].shape[:2])
    return model, features


def fit_cascade(images, config=None, seed=0):
    return fit_transform_cascade(images, config, seed)[0]


def transform_cascade(model, image):
    """Multi-scale features ``[f_1, ..., f_I]`` for one (H, W, 1) image."""
    x = as_feature_map(image, "image")
    if x.shape != (*model.input_shape, 1):
        raise InvalidArgumentError(
            f"image shape {x.shape} does not match training shape {(*model.input_shape, 1)}"
        )
    out = []
    for i, bank in enumerate(model.banks):
        if i > 0:
            x = max_pool(out[-1])
        out.append(apply_saab(bank, extract_patches(x, model.config.window)))
    return out


__all__ = [
    "CascadeConfig",
    "CascadeModel",
    "fit_cascade",
    "fit_transform_cascade",
    "transform_cascade",
]
