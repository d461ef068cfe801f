import numpy as np
import pytest

from sslseg.data_io import preprocess
from sslseg.phantom import PhantomSpec, generate_phantom

SMALL = dict(image_size=64, lv_radius=(5, 9), myo_thickness=(2, 4))


def small_phantoms(count, seed=0, noise=0.08, **kwargs):
    """``count`` 64x64 phantoms as (preprocessed images, labels)."""
    spec_kwargs = {**SMALL, **kwargs}
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
    images, labels = [], []
    for s in seeds:
        img, lab = generate_phantom(PhantomSpec(seed=int(s), noise_sigma=noise, **spec_kwargs))
        images.append(preprocess(img, spec_kwargs["image_size"]))
        labels.append(lab)
    return images, labels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
