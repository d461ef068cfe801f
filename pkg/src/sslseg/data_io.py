"""Slice files, manifests and preprocessing.

File formats
------------
* PGM: binary ``P5`` with maxval 255 (8-bit) or 65535 (16-bit big-endian).
  Images are scaled to [0, 1] by maxval; label maps keep raw values, which
  must lie in {0, 1, 2, 3}.
* Raw tensor: magic ``SST1``, three little-endian uint32 dims (H, W, C), then
  H*W*C little-endian float32 values in row-major (H, W, C) order.  ``SST8``
  is the same layout with float64 values.
* Manifest: one tab-separated record per line,
  ``subject_id  image_path  label_path-or-"-"  split``.  Relative paths are
  resolved against the manifest's directory.
"""

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError, TruncationError

TARGET_SIZE = 224
NUM_CLASSES = 4
SPLITS = ("train", "val", "test")

RAW_MAGIC = {b"SST1": "<f4", b"SST8": "<f8"}
_RAW_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class SliceRecord:
    image_path: str
    label_path: str | None
    subject_id: str
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise InvalidArgumentError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def subjects(self, name=None):
        return sorted({r.subject_id for r in self.records if name is None or r.split == name})

    def __len__(self):
        return len(self.records)


# -- raw tensors -------------------------------------------------------------


def write_raw(path, array, magic=b"SST1"):
    if magic not in RAW_MAGIC:
        raise InvalidArgumentError(f"unknown raw tensor magic {magic!r}")
    path = Path(path)
    path.write_bytes(raw_bytes(array, magic))


def raw_bytes(array, magic=b"SST1"):
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise InvalidArgumentError(f"raw tensors are (H, W, C), got shape {a.shape}")
    header = _RAW_HEADER.pack(magic, *a.shape)
    return header + np.ascontiguousarray(a, dtype=RAW_MAGIC[magic]).tobytes()


def parse_raw(buf, name="<buffer>", offset=0):
    """Decode one raw tensor from ``buf`` at ``offset``; returns ``(array, end_offset)``."""
    if len(buf) - offset < _RAW_HEADER.size:
        raise TruncationError(f"{name}: truncated raw tensor header")
    magic, h, w, c = _RAW_HEADER.unpack_from(buf, offset)
    if magic not in RAW_MAGIC:
        raise FormatError(f"{name}: unknown magic bytes {magic!r}")
    dtype = np.dtype(RAW_MAGIC[magic])
    start = offset + _RAW_HEADER.size
    end = start + h * w * c * dtype.itemsize
    if len(buf) < end:
        raise TruncationError(f"{name}: truncated payload, expected {h}x{w}x{c} values")
    arr = np.frombuffer(buf, dtype=dtype, count=h * w * c, offset=start).reshape(h, w, c)
    return arr.astype(np.float64), end


def read_raw(path):
    path = Path(path)
    arr, end = parse_raw(path.read_bytes(), str(path))
    return arr


# -- PGM ---------------------------------------------------------------------


def _pgm_tokens(buf, name, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncationError(f"{name}: truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path):
    """Integer pixel values and maxval of a binary PGM."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] != b"P5":
        raise FormatError(f"{path}: unknown magic bytes {buf[:4]!r}")
    tokens, pos = _pgm_tokens(buf, str(path), 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval not in (255, 65535) or w < 1 or h < 1:
        raise FormatError(f"{path}: unsupported PGM maxval {maxval} or size {w}x{h}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(buf) - pos < need:
        raise TruncationError(f"{path}: truncated PGM payload")
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data.astype(np.int64), maxval


def write_pgm(path, values, maxval=None):
    values = np.asarray(values)
    if values.ndim != 2:
        raise InvalidArgumentError("PGM data must be 2-D")
    if maxval is None:
        maxval = 255 if values.max(initial=0) <= 255 else 65535
    if values.min(initial=0) < 0 or values.max(initial=0) > maxval:
        raise InvalidArgumentError(f"PGM values must lie in 0..{maxval}")
    dtype = ">u2" if maxval == 65535 else "u1"
    h, w = values.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + values.astype(dtype).tobytes())


def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


# -- slices ------------------------------------------------------------------


def load_image(path):
    path = Path(path)
    head = path.read_bytes()[:4]
    if head[:2] == b"P5":
        values, maxval = read_pgm(path)
        return (values / maxval)[:, :, None]
    if head in RAW_MAGIC:
        img = read_raw(path)
        if not np.all(np.isfinite(img)):
            raise FormatError(f"{path}: tensor contains NaN or Inf")
        return img
    raise FormatError(f"{path}: unknown magic bytes {head!r}")


def load_labels(path):
    path = Path(path)
    head = path.read_bytes()[:4]
    if head[:2] == b"P5":
        values, _ = read_pgm(path)
    elif head in RAW_MAGIC:
        raw = read_raw(path)
        if raw.shape[2] != 1 or not np.all(raw == np.round(raw)):
            raise FormatError(f"{path}: label tensor must be single-channel integers")
        values = raw[:, :, 0].astype(np.int64)
    else:
        raise FormatError(f"{path}: unknown magic bytes {head!r}")
    if values.min() < 0 or values.max() >= NUM_CLASSES:
        raise FormatError(f"{path}: label values must lie in 0..{NUM_CLASSES - 1}")
    return values.astype(np.uint8)


def load_slice(record):
    """``(image, labels)``; image is (H, W, 1), labels (H, W) or None."""
    image = load_image(record.image_path)
    labels = None
    if record.label_path is not None:
        labels = load_labels(record.label_path)
        if labels.shape != image.shape[:2]:
            raise FormatError(
                f"{record.label_path}: label shape {labels.shape} does not match "
                f"image shape {image.shape[:2]}"
            )
    return image, labels


# -- manifests ---------------------------------------------------------------


def read_manifest(path):
    path = Path(path)
    base = path.parent
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields")
        subject, image, label, split = parts
        if split not in SPLITS:
            raise FormatError(f"{path}:{lineno}: unknown split {split!r}")
        records.append(
            SliceRecord(
                image_path=str(base / image),
                label_path=None if label == "-" else str(base / label),
                subject_id=subject,
                split=split,
            )
        )
    return DatasetManifest(records)


def write_manifest(manifest, path):
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    lines = [
        "\t".join([r.subject_id, rel(r.image_path), "-" if r.label_path is None else rel(r.label_path), r.split])
        for r in manifest.records
    ]
    path.write_text("\n".join(lines) + "\n")


def split_manifest(records, seed, counts):
    """Assign whole subjects to train/val/test; subjects beyond ``sum(counts)`` are dropped."""
    records = list(records.records if isinstance(records, DatasetManifest) else records)
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 0:
        raise InvalidArgumentError("counts must be three non-negative integers (train, val, test)")
    subjects = sorted({r.subject_id for r in records})
    if sum(counts) > len(subjects):
        raise InvalidArgumentError(
            f"split needs {sum(counts)} subjects but only {len(subjects)} are available"
        )
    order = np.random.default_rng(seed).permutation(len(subjects))
    assignment = {}
    start = 0
    for name, n in zip(SPLITS, counts):
        for i in order[start : start + n]:
            assignment[subjects[i]] = name
        start += n
    return DatasetManifest(
        replace(r, split=assignment[r.subject_id]) for r in records if r.subject_id in assignment
    )


# -- preprocessing -----------------------------------------------------------


def _linear_weights(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(image, height, width):
    """Half-pixel-centred bilinear resize of an (H, W, C) array."""
    img = np.asarray(image, dtype=np.float64)
    if img.shape[:2] == (height, width):
        return img.copy()
    y0, y1, wy = _linear_weights(img.shape[0], height)
    x0, x1, wx = _linear_weights(img.shape[1], width)
    rows = img[y0] * (1.0 - wy)[:, None, None] + img[y1] * wy[:, None, None]
    return rows[:, x0] * (1.0 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]


def resize_nearest(labels, height, width):
    labels = np.asarray(labels)
    h, w = labels.shape[:2]
    if (h, w) == (height, width):
        return labels.copy()
    ys = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.int64), w - 1)
    return labels[ys][:, xs]


def standardize(image):
    img = np.asarray(image, dtype=np.float64)
    mean = img.mean()
    std = img.std()
    if std <= 1e-12 * max(1.0, abs(mean)):
        return np.zeros_like(img)
    return (img - mean) / std


def preprocess(image, size=TARGET_SIZE):
    """Bilinear resize to ``size x size`` then per-slice zero-mean/unit-variance scaling."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] != 1:
        raise InvalidArgumentError(f"expected an (H, W, 1) image, got {img.shape}")
    if img.shape[0] < 16 or img.shape[1] < 16:
        raise InvalidArgumentError(f"image {img.shape[:2]} is smaller than 16x16")
    if not np.all(np.isfinite(img)):
        raise InvalidArgumentError("image contains NaN or Inf")
    return standardize(resize_bilinear(img, size, size))


def preprocess_labels(labels, size=TARGET_SIZE):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise InvalidArgumentError(f"label map must be 2-D, got {labels.shape}")
    return resize_nearest(labels, size, size).astype(np.uint8)
