"""Binary model bundle.

Layout (all little-endian)::

    b"SSLB" | u32 version | block*

    block := 4-byte tag | u64 payload length | payload

Blocks appear in the order META, PREP, CASC, SELM, TREE, CRFC.  Dense
arrays inside blocks are raw tensors (``SST8``: float64, so anchors and
thresholds survive the round trip bit for bit).  Trees are stored as
pre-order node lists.
"""

import struct
from pathlib import Path

import numpy as np

from .cascade import CascadeConfig, CascadeModel
from .crf import CrfConfig
from .data_io import parse_raw, raw_bytes
from .errors import BadMagicError, ConsistencyError, FormatError, TruncationError, VersionError
from .featsel import SelectionMask
from .gbdt import Tree, TreeEnsemble
from .pipeline import FORMAT_VERSION, ModelBundle
from .saab import SaabKernelBank

MAGIC = b"SSLB"
BLOCK_ORDER = (b"META", b"PREP", b"CASC", b"SELM", b"TREE", b"CRFC")
_NODE = struct.Struct("<Bqdd")


def _tensor(arr):
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None, None]
    elif a.ndim == 2:
        a = a[:, :, None]
    return raw_bytes(a, b"SST8")


class _Reader:
    def __init__(self, buf, name):
        self.buf = buf
        self.pos = 0
        self.name = name

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise TruncationError(f"{self.name}: unexpected end of data")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out if len(out) > 1 else out[0]

    def bytes(self, n):
        if self.pos + n > len(self.buf):
            raise TruncationError(f"{self.name}: unexpected end of data")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def tensor(self):
        arr, self.pos = parse_raw(self.buf, self.name, self.pos)
        return arr

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{self.name}: {len(self.buf) - self.pos} trailing bytes")


# -- encoders ----------------------------------------------------------------


def _enc_meta(b):
    return struct.pack("<Q", b.seed)


def _enc_prep(b):
    return struct.pack("<IB", b.image_size, 1)


def _enc_cascade(model):
    cfg = model.config
    out = [struct.pack("<IIIQ", cfg.num_units, cfg.window, model.input_shape[0], cfg.max_patch_rows)]
    for bank in model.banks:
        out.append(struct.pack("<IId", bank.num_kernels, bank.input_dim, bank.bias_scale))
        out += [_tensor(bank.ac_anchors), _tensor(bank.bias), _tensor(bank.mean_vector),
                _tensor(bank.eigenvalues)]
    return b"".join(out)


def _enc_selection(mask):
    out = [struct.pack("<dI", mask.keep_ratio, len(mask.keep))]
    out += [struct.pack("<I", len(k)) for k in mask.keep]
    bits = np.packbits(np.concatenate(mask.keep).astype(np.uint8), bitorder="little").tobytes()
    out += [struct.pack("<I", len(bits)), bits, _tensor(mask.ranges), _tensor(mask.entropies)]
    return b"".join(out)


def _enc_trees(ens):
    out = [struct.pack("<IIdI", ens.num_classes, ens.num_features, ens.learning_rate, len(ens.trees))]
    for t in ens.trees:
        out.append(struct.pack("<II", t.class_index, t.num_nodes))
        for i in range(t.num_nodes):
            leaf = t.feature[i] < 0
            out.append(_NODE.pack(int(leaf), int(t.feature[i]), float(t.threshold[i]), float(t.value[i])))
    return b"".join(out)


def _enc_crf(c):
    return struct.pack("<Iddddd", c.iterations, c.spatial_weight, c.appearance_weight,
                       c.spatial_sigma, c.appearance_sigma_xy, c.appearance_sigma_intensity)


def bundle_bytes(bundle):
    blocks = {
        b"META": _enc_meta(bundle),
        b"PREP": _enc_prep(bundle),
        b"CASC": _enc_cascade(bundle.cascade),
        b"SELM": _enc_selection(bundle.selection),
        b"TREE": _enc_trees(bundle.ensemble),
        b"CRFC": _enc_crf(bundle.crf),
    }
    out = [MAGIC, struct.pack("<I", bundle.format_version)]
    for tag in BLOCK_ORDER:
        out += [tag, struct.pack("<Q", len(blocks[tag])), blocks[tag]]
    return b"".join(out)


def save_bundle(bundle, path):
    Path(path).write_bytes(bundle_bytes(bundle))


# -- decoders ----------------------------------------------------------------


def _dec_cascade(r, image_size):
    n_units, window, input_h, max_rows = r.take("<IIIQ")
    kernels, banks = [], []
    for _ in range(n_units):
        f, dim, bias_scale = r.take("<IId")
        ac = r.tensor()[:, :, 0]
        bias = r.tensor().ravel()
        mean = r.tensor().ravel()
        eig = r.tensor().ravel()
        if ac.shape != (f - 1, dim) or bias.size != f or mean.size != dim:
            raise ConsistencyError(f"{r.name}: Saab bank arrays do not match {f}x{dim}")
        kernels.append(f)
        banks.append(SaabKernelBank(
            dc_anchor=np.full(dim, 1.0 / np.sqrt(dim)),
            ac_anchors=np.ascontiguousarray(ac),
            bias=bias,
            bias_scale=bias_scale,
            mean_vector=mean,
            eigenvalues=eig,
        ))
    try:
        cfg = CascadeConfig(kernels=tuple(kernels), window=window, max_patch_rows=max_rows)
        return CascadeModel(cfg, banks, (input_h, input_h))
    except ValueError as exc:
        raise ConsistencyError(f"{r.name}: {exc}") from exc


def _dec_selection(r):
    ratio, n_units = r.take("<dI")
    sizes = [r.take("<I") for _ in range(n_units)]
    n_bytes = r.take("<I")
    bits = np.unpackbits(np.frombuffer(r.bytes(n_bytes), dtype=np.uint8), bitorder="little")
    total = sum(sizes)
    if bits.size < total:
        raise ConsistencyError(f"{r.name}: selection bitset too short")
    flat = bits[:total].astype(bool)
    keep = tuple(np.array(k) for k in np.split(flat, np.cumsum(sizes)[:-1]))
    ranges = r.tensor()[:, :, 0]
    entropies = r.tensor()[:, :, 0]
    if ranges.shape[0] != total or entropies.shape[0] != total:
        raise ConsistencyError(f"{r.name}: selection tables do not cover {total} channels")
    return SelectionMask(keep=keep, keep_ratio=ratio, ranges=ranges, entropies=entropies)


def _dec_trees(r):
    n_classes, n_features, lr, n_trees = r.take("<IIdI")
    trees = []
    for _ in range(n_trees):
        cls, n_nodes = r.take("<II")
        if cls >= n_classes:
            raise ConsistencyError(f"{r.name}: tree class {cls} out of range")
        nodes = [r.take(_NODE.format) for _ in range(n_nodes)]
        trees.append(_tree_from_preorder(cls, nodes, r.name, n_features))
    return TreeEnsemble(num_features=n_features, learning_rate=lr, trees=trees, num_classes=n_classes)


def _tree_from_preorder(cls, nodes, name, n_features):
    n = len(nodes)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    pos = 0

    def build():
        nonlocal pos
        if pos >= n:
            raise ConsistencyError(f"{name}: incomplete pre-order tree")
        node = pos
        pos += 1
        if not nodes[node][0]:
            if not 0 <= nodes[node][1] < n_features:
                raise ConsistencyError(f"{name}: split feature {nodes[node][1]} out of range")
            left[node] = build()
            right[node] = build()
        return node

    build()
    if pos != n:
        raise ConsistencyError(f"{name}: {n - pos} unreachable tree nodes")
    is_leaf = np.array([nd[0] for nd in nodes], dtype=bool)
    return Tree(
        class_index=cls,
        feature=np.where(is_leaf, -1, np.array([nd[1] for nd in nodes], dtype=np.int64)),
        threshold=np.array([nd[2] for nd in nodes], dtype=np.float64),
        left=left,
        right=right,
        value=np.array([nd[3] for nd in nodes], dtype=np.float64),
    )


def _dec_crf(r):
    vals = r.take("<Iddddd")
    try:
        return CrfConfig(*vals)
    except ValueError as exc:
        raise ConsistencyError(f"{r.name}: {exc}") from exc


def parse_bundle(buf, name="<bundle>"):
    if len(buf) < 8:
        raise TruncationError(f"{name}: file too short for a bundle header")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"{name}: bad magic {buf[:4]!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"{name}: bundle version {version}, this build reads {FORMAT_VERSION}")
    pos = 8
    blocks = {}
    for tag in BLOCK_ORDER:
        if pos + 12 > len(buf):
            raise TruncationError(f"{name}: truncated before block {tag.decode()}")
        got = buf[pos : pos + 4]
        (length,) = struct.unpack_from("<Q", buf, pos + 4)
        if got != tag:
            raise FormatError(f"{name}: expected block {tag.decode()}, found {got!r}")
        start = pos + 12
        if start + length > len(buf):
            raise TruncationError(f"{name}: block {tag.decode()} is truncated")
        blocks[tag] = _Reader(buf[start : start + length], f"{name}:{tag.decode()}")
        pos = start + length
    if pos != len(buf):
        raise FormatError(f"{name}: {len(buf) - pos} trailing bytes")

    r = blocks[b"META"]
    seed = r.take("<Q")
    r.done()
    r = blocks[b"PREP"]
    image_size, _standardize = r.take("<IB")
    r.done()
    r = blocks[b"CASC"]
    cascade = _dec_cascade(r, image_size)
    r.done()
    r = blocks[b"SELM"]
    selection = _dec_selection(r)
    r.done()
    r = blocks[b"TREE"]
    ensemble = _dec_trees(r)
    r.done()
    r = blocks[b"CRFC"]
    crf = _dec_crf(r)
    r.done()
    return ModelBundle(cascade, selection, ensemble, crf, image_size, seed, version)


def load_bundle(path):
    path = Path(path)
    return parse_bundle(path.read_bytes(), str(path))
