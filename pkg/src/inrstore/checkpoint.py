"""INRM binary checkpoints.

Layout (little-endian):

    magic  "INRM"
    version  u16
    arch tag u8, implicit-function tag u8
    record count u32
    records: name_len u16, name (UTF-8), dtype u8, rank u8, dims u32 * rank,
             row-major payload

dtypes: 0 = float32, 1 = uint8, 2 = int64. The same container carries INR
models and encoder checkpoints (the latter add component-prefixed names and
a metadata record).
"""

import struct

import numpy as np

from .corpus import ARCH_TAGS, FN_TAGS
from .errors import FormatError
from .grids import HashGrid, OctreeGrid, TriplaneGrid
from .models import GridMlp, InrModel, SirenMlp
from .nn import Linear
from .tensor import Tensor

MAGIC = b"INRM"
VERSION = 1

_DTYPES = {0: np.float32, 1: np.uint8, 2: np.int64}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.uint8): 1, np.dtype(np.int64): 2}


def write_container(path, arch, fn, records):
    """records: list of (name, ndarray) in a deterministic order."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HBB", VERSION, ARCH_TAGS.index(arch), FN_TAGS.index(fn)))
        f.write(struct.pack("<I", len(records)))
        for name, arr in records:
            arr = np.ascontiguousarray(arr)
            code = _DTYPE_CODES.get(arr.dtype)
            if code is None:
                raise FormatError(f"unsupported dtype {arr.dtype} for record {name!r}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", code, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return buf


def read_container(path):
    """Return (arch, fn, dict name -> ndarray)."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise FormatError("bad magic; not an INRM checkpoint")
        version, arch_i, fn_i = struct.unpack("<HBB", _read_exact(f, 4, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        if arch_i >= len(ARCH_TAGS) or fn_i >= len(FN_TAGS):
            raise FormatError("unknown architecture/function tag")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "record count"))
        records = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            code, rank = struct.unpack("<BB", _read_exact(f, 2, "record header"))
            if code not in _DTYPES:
                raise FormatError(f"unknown dtype code {code} in record {name!r}")
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims"))
            dtype = np.dtype(_DTYPES[code])
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            payload = _read_exact(f, nbytes, f"payload of {name!r}")
            records[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
        if f.read(1):
            raise FormatError("trailing bytes after final record")
    return ARCH_TAGS[arch_i], FN_TAGS[fn_i], records


# ---------------------------------------------------------------------------
# InrModel <-> records
# ---------------------------------------------------------------------------


def _mlp_records(mlp, prefix="mlp"):
    recs = []
    for i, layer in enumerate(mlp.layers):
        recs.append((f"{prefix}.{i}.weight", layer.weight.data))
        recs.append((f"{prefix}.{i}.bias", layer.bias.data))
    return recs


def _mlp_from_records(records, prefix, cls, **kwargs):
    layers = []
    i = 0
    while f"{prefix}.{i}.weight" in records:
        w = records[f"{prefix}.{i}.weight"]
        b = records[f"{prefix}.{i}.bias"]
        layers.append(Linear(Tensor(w.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)))
        i += 1
    if not layers:
        raise FormatError(f"no MLP layers found under prefix {prefix!r}")
    return cls(layers, **kwargs)


def model_records(model):
    recs = []
    if model.arch == "mlp":
        recs.append(("meta.omega0", np.asarray([model.mlp.omega0], dtype=np.float32)))
    recs.extend(_mlp_records(model.mlp))
    g = model.grid
    if model.arch == "hash":
        recs.append(("grid.resolutions", np.asarray(g.resolutions, dtype=np.int64)))
        recs.append(("grid.table_size", np.asarray([g.table_size], dtype=np.int64)))
        recs.append(("grid.width", np.asarray([g.width], dtype=np.int64)))
        for lv, t in enumerate(g.tables):
            recs.append((f"grid.table.{lv}", t.data))
    elif model.arch == "triplane":
        recs.append(("grid.resolution", np.asarray([g.resolution], dtype=np.int64)))
        recs.append(("grid.width", np.asarray([g.width], dtype=np.int64)))
        recs.append(("grid.planes", g.planes.data))
    elif model.arch == "octree":
        recs.append(("grid.levels", np.asarray(g.feature_levels, dtype=np.int64)))
        recs.append(("grid.width", np.asarray([g.width], dtype=np.int64)))
        for lv in g.feature_levels:
            recs.append((f"grid.mask.{lv}", g.masks[lv].astype(np.uint8)))
            recs.append((f"grid.features.{lv}", g.features[lv].data))
    return recs


def save_model(model, path):
    write_container(path, model.arch, model.fn, model_records(model))


# ---------------------------------------------------------------------------
# encoder checkpoints (same container, component-prefixed records)
# ---------------------------------------------------------------------------


def _bn_records(prefix, bn):
    return [
        (f"{prefix}.gamma", bn.gamma.data),
        (f"{prefix}.beta", bn.beta.data),
        (f"{prefix}.running_mean", bn.running_mean),
        (f"{prefix}.running_var", bn.running_var),
    ]


def _weight_encoder_records(prefix, enc):
    recs = []
    for i, (lin, bn) in enumerate(zip(enc.linears, enc.bns)):
        recs.append((f"{prefix}.lin{i}.weight", lin.weight.data))
        recs.append((f"{prefix}.lin{i}.bias", lin.bias.data))
        recs.extend(_bn_records(f"{prefix}.bn{i}", bn))
    return recs


def _weight_encoder_from(records, prefix):
    from .encoders import MlpEncoder
    from .nn import BatchNorm1d

    linears = []
    bns = []
    i = 0
    while f"{prefix}.lin{i}.weight" in records:
        w = records[f"{prefix}.lin{i}.weight"]
        b = records[f"{prefix}.lin{i}.bias"]
        linears.append(Linear(Tensor(w.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)))
        bn = BatchNorm1d(w.shape[1])
        bn.gamma = Tensor(records[f"{prefix}.bn{i}.gamma"].copy(), requires_grad=True)
        bn.beta = Tensor(records[f"{prefix}.bn{i}.beta"].copy(), requires_grad=True)
        bn.running_mean = records[f"{prefix}.bn{i}.running_mean"].copy()
        bn.running_var = records[f"{prefix}.bn{i}.running_var"].copy()
        bns.append(bn)
        i += 1
    if not linears:
        raise FormatError(f"no weight-encoder layers under prefix {prefix!r}")
    enc = MlpEncoder(linears[0].weight.data.shape[0], tuple(l.weight.data.shape[1] for l in linears))
    enc.linears = linears
    enc.bns = bns
    return enc


def _conv_encoder_records(prefix, enc):
    recs = []
    for i, (k, b, gn) in enumerate(zip(enc.kernels, enc.biases, enc.gns)):
        recs.append((f"{prefix}.conv{i}.kernel", k.data))
        recs.append((f"{prefix}.conv{i}.bias", b.data))
        recs.append((f"{prefix}.gn{i}.gamma", gn.gamma.data))
        recs.append((f"{prefix}.gn{i}.beta", gn.beta.data))
    recs.append((f"{prefix}.out.weight", enc.out.weight.data))
    recs.append((f"{prefix}.out.bias", enc.out.bias.data))
    return recs


def _conv_encoder_from(records, prefix):
    from .encoders import Conv3dEncoder
    from .nn import GroupNorm

    kernels = []
    biases = []
    gns = []
    i = 0
    while f"{prefix}.conv{i}.kernel" in records:
        k = records[f"{prefix}.conv{i}.kernel"]
        kernels.append(Tensor(k.copy(), requires_grad=True))
        biases.append(Tensor(records[f"{prefix}.conv{i}.bias"].copy(), requires_grad=True))
        gn = GroupNorm(k.shape[0])
        gn.gamma = Tensor(records[f"{prefix}.gn{i}.gamma"].copy(), requires_grad=True)
        gn.beta = Tensor(records[f"{prefix}.gn{i}.beta"].copy(), requires_grad=True)
        gns.append(gn)
        i += 1
    if not kernels:
        return None
    enc = Conv3dEncoder(kernels[0].data.shape[1], len(kernels), records[f"{prefix}.out.weight"].shape[1])
    enc.kernels = kernels
    enc.biases = biases
    enc.gns = gns
    enc.out = Linear(
        Tensor(records[f"{prefix}.out.weight"].copy(), requires_grad=True),
        Tensor(records[f"{prefix}.out.bias"].copy(), requires_grad=True),
    )
    return enc


def _decoder_records(prefix, dec):
    return [
        rec
        for i, layer in enumerate(dec.layers)
        for rec in (
            (f"{prefix}.lin{i}.weight", layer.weight.data),
            (f"{prefix}.lin{i}.bias", layer.bias.data),
        )
    ]


def _decoder_from(records, prefix, fn):
    from .encoders import ShapeDecoder

    layers = []
    i = 0
    while f"{prefix}.lin{i}.weight" in records:
        layers.append(
            Linear(
                Tensor(records[f"{prefix}.lin{i}.weight"].copy(), requires_grad=True),
                Tensor(records[f"{prefix}.lin{i}.bias"].copy(), requires_grad=True),
            )
        )
        i += 1
    if not layers:
        raise FormatError(f"no decoder layers under prefix {prefix!r}")
    return ShapeDecoder(fn, layers)


def save_encoder_single(pair, decoder, path):
    recs = [
        ("meta.kind", np.asarray([0], dtype=np.uint8)),
        ("meta.lattice_n", np.asarray([pair.lattice_n], dtype=np.int64)),
        ("meta.row_width", np.asarray([pair.row_width], dtype=np.int64)),
    ]
    recs += _weight_encoder_records("m", pair.m)
    if pair.c is not None:
        recs += _conv_encoder_records("c", pair.c)
    recs += _decoder_records("f_phi", decoder)
    write_container(path, pair.arch, pair.fn, recs)


def load_encoder_single(path):
    from .encoders import EncoderPair

    arch, fn, records = read_container(path)
    if int(records["meta.kind"][0]) != 0:
        raise FormatError("checkpoint holds an encoder set, not a single pair")
    m = _weight_encoder_from(records, "m")
    c = _conv_encoder_from(records, "c")
    pair = EncoderPair(
        arch,
        fn,
        m,
        c,
        int(records["meta.lattice_n"][0]),
        int(records["meta.row_width"][0]),
    )
    decoder = _decoder_from(records, "f_phi", fn)
    return pair, decoder


def save_encoder_set(enc_set, path):
    any_pair = enc_set.pairs[FN_TAGS[0]]
    dec_fn = enc_set.decoders["unified"].fn if enc_set.unified else FN_TAGS[0]
    recs = [
        ("meta.kind", np.asarray([1], dtype=np.uint8)),
        ("meta.lattice_n", np.asarray([any_pair.lattice_n], dtype=np.int64)),
        ("meta.row_width", np.asarray([any_pair.row_width], dtype=np.int64)),
        ("meta.lambda", np.asarray([enc_set.lam], dtype=np.float32)),
        ("meta.unified", np.asarray([1 if enc_set.unified else 0], dtype=np.uint8)),
    ]
    for fn in FN_TAGS:
        pair = enc_set.pairs[fn]
        recs += _weight_encoder_records(f"m_{fn}", pair.m)
        if pair.c is not None:
            recs += _conv_encoder_records(f"c_{fn}", pair.c)
    if enc_set.unified:
        recs += _decoder_records("f_phi", enc_set.decoders["unified"])
    else:
        for fn in FN_TAGS:
            recs += _decoder_records(f"f_phi_{fn}", enc_set.decoders[fn])
    write_container(path, any_pair.arch, dec_fn, recs)


def load_encoder_set(path):
    from .encoders import EncoderPair, EncoderSet

    arch, dec_fn, records = read_container(path)
    if int(records["meta.kind"][0]) != 1:
        raise FormatError("checkpoint holds a single encoder pair, not a set")
    lattice_n = int(records["meta.lattice_n"][0])
    row_width = int(records["meta.row_width"][0])
    lam = float(records["meta.lambda"][0])
    unified = bool(records["meta.unified"][0])
    pairs = {}
    for fn in FN_TAGS:
        m = _weight_encoder_from(records, f"m_{fn}")
        c = _conv_encoder_from(records, f"c_{fn}")
        pairs[fn] = EncoderPair(arch, fn, m, c, lattice_n, row_width)
    if unified:
        decoders = {"unified": _decoder_from(records, "f_phi", dec_fn)}
    else:
        decoders = {fn: _decoder_from(records, f"f_phi_{fn}", fn) for fn in FN_TAGS}
    return EncoderSet(pairs, decoders, lam, unified)


def load_model(path):
    arch, fn, records = read_container(path)
    if arch == "mlp":
        omega0 = float(records["meta.omega0"][0])
        mlp = _mlp_from_records(records, "mlp", SirenMlp, omega0=omega0)
        return InrModel(arch, fn, mlp)
    mlp = _mlp_from_records(records, "mlp", GridMlp)
    if arch == "hash":
        grid = HashGrid(
            resolutions=tuple(int(r) for r in records["grid.resolutions"]),
            table_size=int(records["grid.table_size"][0]),
            width=int(records["grid.width"][0]),
        )
        for lv in range(len(grid.resolutions)):
            grid.tables[lv] = Tensor(records[f"grid.table.{lv}"].copy(), requires_grad=True)
    elif arch == "triplane":
        width = int(records["grid.width"][0])
        res = int(records["grid.resolution"][0])
        grid = TriplaneGrid(resolution=res, width=width)
        grid.planes = Tensor(records["grid.planes"].copy(), requires_grad=True)
    elif arch == "octree":
        levels = tuple(int(v) for v in records["grid.levels"])
        width = int(records["grid.width"][0])
        masks = {lv: records[f"grid.mask.{lv}"].astype(bool) for lv in levels}
        features = {
            lv: Tensor(records[f"grid.features.{lv}"].copy(), requires_grad=True)
            for lv in levels
        }
        grid = OctreeGrid(masks, features, width=width, feature_levels=levels)
    else:
        raise FormatError(f"cannot reconstruct architecture {arch!r}")
    return InrModel(arch, fn, mlp, grid)
