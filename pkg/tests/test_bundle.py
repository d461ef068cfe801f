import struct

import numpy as np
import pytest

from conftest import small_phantoms
from sslseg.bundle import bundle_bytes, load_bundle, parse_bundle, save_bundle
from sslseg.cascade import CascadeConfig
from sslseg.errors import BadMagicError, ConsistencyError, TruncationError, VersionError
from sslseg.gbdt import GbdtConfig
from sslseg.pipeline import predict_preprocessed, train_on_arrays


@pytest.fixture(scope="module")
def bundle():
    images, labels = small_phantoms(3, seed=2)
    return train_on_arrays(images, labels, CascadeConfig(kernels=(5, 10)),
                           GbdtConfig(num_rounds=4, max_depth=3), seed=1, image_size=64)


def test_round_trip_bytes_and_values(bundle, tmp_path):
    save_bundle(bundle, tmp_path / "a.sslb")
    back = load_bundle(tmp_path / "a.sslb")
    save_bundle(back, tmp_path / "b.sslb")
    assert (tmp_path / "a.sslb").read_bytes() == (tmp_path / "b.sslb").read_bytes()
    assert back.ensemble.trees == bundle.ensemble.trees
    for b1, b2 in zip(bundle.cascade.banks, back.cascade.banks):
        np.testing.assert_array_equal(b1.ac_anchors, b2.ac_anchors)
        np.testing.assert_array_equal(b1.bias, b2.bias)
    assert back.crf == bundle.crf
    img = np.random.default_rng(0).normal(size=(64, 64, 1))
    np.testing.assert_array_equal(predict_preprocessed(back, img).probs,
                                  predict_preprocessed(bundle, img).probs)


def test_header_layout(bundle):
    buf = bundle_bytes(bundle)
    assert buf[:4] == b"SSLB"
    assert struct.unpack_from("<I", buf, 4)[0] == 1
    assert buf[8:12] == b"META"


def test_distinct_errors(bundle):
    buf = bundle_bytes(bundle)
    with pytest.raises(BadMagicError):
        parse_bundle(b"NOPE" + buf[4:])
    with pytest.raises(VersionError):
        parse_bundle(buf[:4] + struct.pack("<I", 7) + buf[8:])
    for cut in (3, 10, len(buf) // 2, len(buf) - 1):
        with pytest.raises(TruncationError):
            parse_bundle(buf[:cut])


def test_width_mismatch_is_consistency_error(bundle):
    # flip one kept bit in the selection bitset so the ensemble width disagrees
    buf = bytearray(bundle_bytes(bundle))
    pos = 8
    while bytes(buf[pos : pos + 4]) != b"SELM":
        pos += 12 + struct.unpack_from("<Q", buf, pos + 4)[0]
    start = pos + 12
    n_units = struct.unpack_from("<I", buf, start + 8)[0]
    bits_at = start + 12 + 4 * n_units + 4
    buf[bits_at] ^= 0xFF
    with pytest.raises(ConsistencyError):
        parse_bundle(bytes(buf))
