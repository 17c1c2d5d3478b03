"""Embedding encoders, the shape decoder, and their joint training.

An INR is embedded by two encoders: a shared per-row MLP with batch norm and
a final elementwise max over rows consumes the flattened MLP weights, and a
3D-conv pyramid consumes a feature volume sampled from the grid. Grid models
concatenate [grid embedding; weight embedding] into a 1024-vector; MLP-only
models use a double-width weight encoder.

Training is reconstruction-supervised: a decoder maps (coordinate ++
embedding) back to an implicit-function value. For the unified latent space
across implicit functions, one decoder reconstructs a single function
(default the unsigned distance) for all three branches and an L2 penalty
pulls same-shape embeddings together; both regularizers can be ablated.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import FN_TAGS, check_domain, sample_training_points
from .errors import ConfigError, InputError
from .lattice import gather_features, sample_coords
from .nn import BatchNorm1d, Linear
from .optim import AdamW
from .rng import rng_stream
from .tensor import Tensor, no_grad

EMBEDDING_WIDTH = 1024
GRID_ENCODER_HIDDEN = (256, 256, 512, 512)
MLP_ENCODER_HIDDEN = (512, 512, 1024, 1024)


# ---------------------------------------------------------------------------
# weight flattening
# ---------------------------------------------------------------------------


@dataclass
class WeightRowMatrix:
    rows: np.ndarray  # (R, W) float32; zero padding past each row's payload
    layout: tuple  # ((n_in, n_out), ...) in input->output layer order


def flatten_mlp_weights(mlp):
    """One row per output neuron: its incoming weights with the bias appended,
    zero-padded to the widest layer's row length."""
    layout = tuple(mlp.layer_dims())
    width = max(n_in + 1 for n_in, _ in layout)
    total_rows = sum(n_out for _, n_out in layout)
    rows = np.zeros((total_rows, width), dtype=np.float32)
    r = 0
    for layer, (n_in, n_out) in zip(mlp.layers, layout):
        w = layer.weight.data
        b = layer.bias.data
        rows[r : r + n_out, :n_in] = w.T
        rows[r : r + n_out, n_in] = b
        r += n_out
    return WeightRowMatrix(rows=rows, layout=layout)


def rows_to_layers(rowmat):
    """Reconstruct (weight, bias) arrays from a WeightRowMatrix."""
    out = []
    r = 0
    for n_in, n_out in rowmat.layout:
        block = rowmat.rows[r : r + n_out]
        out.append((block[:, :n_in].T.copy(), block[:, n_in].copy()))
        r += n_out
    return out


# ---------------------------------------------------------------------------
# encoder networks
# ---------------------------------------------------------------------------


class MlpEncoder:
    """Shared per-row MLP (4x linear+BN+ReLU) with elementwise max over rows."""

    def __init__(self, in_width, hidden):
        self.in_width = int(in_width)
        self.hidden = tuple(hidden)
        self.linears = []
        self.bns = []

    @classmethod
    def init(cls, in_width, hidden, rng):
        enc = cls(in_width, hidden)
        dims = [in_width, *hidden]
        enc.linears = [
            Linear.init(dims[i], dims[i + 1], rng) for i in range(len(hidden))
        ]
        enc.bns = [BatchNorm1d(h) for h in hidden]
        return enc

    @property
    def out_width(self):
        return self.hidden[-1]

    def forward_batch(self, rows_list, train):
        """Embed several INRs' row matrices in one pass.

        Rows are concatenated so batch-norm statistics mix INRs (normalizing
        each INR alone would erase the between-INR signal the embedding
        needs); the final max pools each INR's segment separately.
        """
        mats = [np.ascontiguousarray(r, dtype=np.float32) for r in rows_list]
        for m in mats:
            if m.shape[1] != self.in_width:
                raise ConfigError(
                    f"weight rows have width {m.shape[1]}, encoder expects {self.in_width}"
                )
        h = Tensor(np.concatenate(mats, axis=0))
        for lin, bn in zip(self.linears, self.bns):
            h = T.relu(bn(lin(h), train))
        outs = []
        offset = 0
        for m in mats:
            seg = T.slice_rows(h, offset, offset + len(m))
            outs.append(T.max_rows(seg))
            offset += len(m)
        return outs

    def forward(self, rows, train):
        return self.forward_batch([rows], train)[0]

    def parameters(self):
        ps = [p for l in self.linears for p in l.parameters()]
        ps += [p for bn in self.bns for p in bn.parameters()]
        return ps


class Conv3dEncoder:
    """Stride-2 kernel-2 conv stages (channel doubling, group norm + ReLU),
    closed by a linear map to the grid-embedding width."""

    def __init__(self, in_channels, depth, out_width=512):
        self.in_channels = int(in_channels)
        self.depth = int(depth)
        self.out_width_ = int(out_width)
        self.kernels = []
        self.biases = []
        self.gns = []
        self.out = None

    @classmethod
    def init(cls, in_channels, depth, rng, out_width=512):
        enc = cls(in_channels, depth, out_width)
        from .nn import GroupNorm

        ch = in_channels
        for _ in range(depth):
            och = ch * 2
            bound = 1.0 / np.sqrt(ch * 8)
            k = rng.uniform(-bound, bound, size=(och, ch, 2, 2, 2)).astype(np.float32)
            b = rng.uniform(-bound, bound, size=och).astype(np.float32)
            enc.kernels.append(T.parameter(k))
            enc.biases.append(T.parameter(b))
            enc.gns.append(GroupNorm(och))
            ch = och
        enc.out = Linear.init(ch, out_width, rng)
        return enc

    @property
    def out_width(self):
        return self.out_width_

    def forward(self, volume):
        v = volume if isinstance(volume, Tensor) else Tensor(np.asarray(volume, np.float32))
        if v.data.ndim != 4 or v.data.shape[0] != self.in_channels:
            raise ConfigError(
                f"volume shape {v.data.shape} incompatible with encoder "
                f"({self.in_channels} channels)"
            )
        if v.data.shape[1] != 2**self.depth:
            raise ConfigError(
                f"volume spatial size {v.data.shape[1]} needs conv depth "
                f"log2 = {self.depth}"
            )
        h = v
        for k, b, gn in zip(self.kernels, self.biases, self.gns):
            h = T.relu(gn(T.conv3d_down(h, k, b)))
        flat = T.reshape(h, (1, -1))
        return T.reshape(self.out(flat), (-1,))

    def parameters(self):
        ps = []
        for k, b, gn in zip(self.kernels, self.biases, self.gns):
            ps += [k, b] + gn.parameters()
        ps += self.out.parameters()
        return ps


class ShapeDecoder:
    """MLP mapping (coordinate ++ embedding) to one implicit-function value."""

    def __init__(self, fn, layers):
        if fn not in FN_TAGS:
            raise ConfigError(f"unknown decoder function tag {fn!r}")
        self.fn = fn
        self.layers = layers

    @classmethod
    def init(cls, fn, rng, emb_width=EMBEDDING_WIDTH, hidden=512):
        dims = [3 + emb_width, hidden, hidden, 1]
        layers = [Linear.init(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        return cls(fn, layers)

    def forward(self, coords, embedding):
        coords = np.ascontiguousarray(coords, dtype=np.float32)
        check_domain(coords)
        e = embedding if isinstance(embedding, Tensor) else Tensor(embedding)
        h = T.concat([Tensor(coords), T.expand_rows(e, len(coords))], axis=1)
        for layer in self.layers[:-1]:
            h = T.relu(layer(h))
        return T.reshape(self.layers[-1](h), (-1,))

    def parameters(self):
        return [p for l in self.layers for p in l.parameters()]


def decode(decoder, embedding, coords):
    """Pure decoder evaluation: implicit-function estimate at coords."""
    with no_grad():
        return decoder.forward(coords, np.asarray(embedding, dtype=np.float32)).data


# ---------------------------------------------------------------------------
# encoder pair + embedding assembly
# ---------------------------------------------------------------------------


class EncoderPair:
    """(weight encoder m, grid encoder c) for one architecture family."""

    def __init__(self, arch, fn, m, c, lattice_n, row_width):
        self.arch = arch
        self.fn = fn
        self.m = m
        self.c = c  # None for the MLP-only family
        self.lattice_n = int(lattice_n)
        self.row_width = int(row_width)

    @classmethod
    def init(cls, arch, fn, row_width, volume_channels, lattice_n, rng):
        if arch == "mlp":
            m = MlpEncoder.init(row_width, MLP_ENCODER_HIDDEN, rng)
            return cls(arch, fn, m, None, lattice_n, row_width)
        m = MlpEncoder.init(row_width, GRID_ENCODER_HIDDEN, rng)
        depth = int(np.log2(2 * lattice_n))
        c = Conv3dEncoder.init(volume_channels, depth, rng)
        return cls(arch, fn, m, c, lattice_n, row_width)

    def embed_batch(self, inputs, train):
        """Differentiable embeddings for a minibatch of (rows, volume) inputs."""
        m_embs = self.m.forward_batch([rows for rows, _ in inputs], train)
        if self.c is None:
            return m_embs
        outs = []
        for (_, volume), m_emb in zip(inputs, m_embs):
            c_emb = self.c.forward(volume)
            outs.append(T.concat([c_emb, m_emb], axis=0))
        return outs

    def embed(self, rows, volume, train):
        """Differentiable embedding from precomputed inputs."""
        return self.embed_batch([(rows, volume)], train)[0]

    def parameters(self):
        ps = list(self.m.parameters())
        if self.c is not None:
            ps += self.c.parameters()
        return ps


def encoder_inputs(model, lattice):
    """(weight rows, feature volume or None) for one InrModel."""
    rows = flatten_mlp_weights(model.mlp).rows
    volume = None if model.grid is None else gather_features(model, lattice)
    return rows, volume


def encode(pair, model, lattice=None):
    """INR embedding of length 1024 (batch norm in eval mode)."""
    if model.arch != pair.arch:
        raise ConfigError(
            f"encoder trained for {pair.arch!r} cannot embed a {model.arch!r} model"
        )
    lattice = lattice if lattice is not None else sample_coords(pair.lattice_n)
    rows, volume = encoder_inputs(model, lattice)
    if rows.shape[1] != pair.row_width:
        raise ConfigError(
            f"model row width {rows.shape[1]} != encoder width {pair.row_width}"
        )
    with no_grad():
        emb = pair.embed(rows, volume, train=False).data.astype(np.float32)
    if emb.shape != (EMBEDDING_WIDTH,):
        raise ConfigError(f"embedding has length {emb.shape}, expected {EMBEDDING_WIDTH}")
    return emb


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class EncoderTrainConfig:
    epochs: int = 30
    points_uniform: int = 64
    points_surface: int = 128
    points_near: int = 128
    shape_batch: int = 8
    lr: float = 1e-4
    weight_decay: float = 1e-2
    lam: float = 1.0
    decoder_fn: str = "udf"
    unified_decoder: bool = True
    lattice_n: int = 16
    seed: int = 0


class EncoderSet:
    """Per-implicit-function encoder pairs plus the shared decoder(s)."""

    def __init__(self, pairs, decoders, lam, unified):
        self.pairs = pairs  # fn -> EncoderPair
        self.decoders = decoders  # {"unified": d} or fn -> decoder
        self.lam = float(lam)
        self.unified = bool(unified)

    def decoder_for(self, fn):
        return self.decoders["unified"] if self.unified else self.decoders[fn]

    def encode(self, model, lattice=None):
        return encode(self.pairs[model.fn], model, lattice)

    def parameters(self):
        ps = []
        for fn in FN_TAGS:
            ps += self.pairs[fn].parameters()
        if self.unified:
            ps += self.decoders["unified"].parameters()
        else:
            for fn in FN_TAGS:
                ps += self.decoders[fn].parameters()
        return ps


def _sample_decoder_points(oracle, fn, cfg, seed_label):
    batch = sample_training_points(
        oracle,
        fn,
        cfg.points_uniform,
        cfg.points_surface,
        cfg.points_near,
        seed=seed_label,
    )
    return batch.coords, batch.values


def train_encoder_single(models, oracles, config):
    """Train one encoder pair + decoder on same-function INRs.

    models[i] represents oracles[i]; all models share an architecture and an
    implicit-function tag. The decoder reconstructs that same function.
    Returns (pair, decoder, log).
    """
    if not models:
        raise InputError("need at least one training INR")
    arch = models[0].arch
    fn = models[0].fn
    if any(m.arch != arch or m.fn != fn for m in models):
        raise InputError("train_encoder_single expects one architecture and function")
    lattice = sample_coords(config.lattice_n)
    inputs = [encoder_inputs(m, lattice) for m in models]
    row_width = inputs[0][0].shape[1]
    channels = 0 if inputs[0][1] is None else inputs[0][1].shape[0]
    rng = rng_stream(config.seed, "encoder-init", arch, fn)
    pair = EncoderPair.init(arch, fn, row_width, channels, config.lattice_n, rng)
    decoder = ShapeDecoder.init(fn, rng_stream(config.seed, "decoder-init", arch, fn))
    params = pair.parameters() + decoder.parameters()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)

    log = []
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        order = rng_stream(config.seed, "order", epoch).permutation(len(models))
        losses = []
        for s in range(0, len(order), config.shape_batch):
            chunk = order[s : s + config.shape_batch]
            embs = pair.embed_batch([inputs[si] for si in chunk], train=True)
            loss = None
            for si, emb in zip(chunk, embs):
                coords, values = _sample_decoder_points(
                    oracles[si], fn, config, f"{config.seed}.e{epoch}"
                )
                pred = decoder.forward(coords, emb)
                term = T.tmean(T.absolute(T.sub(pred, Tensor(values))))
                loss = term if loss is None else T.add(loss, term)
            loss = T.mul(loss, np.float32(1.0 / len(chunk)))
            loss.assert_finite("encoder loss")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        log.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "wall": time.monotonic() - t0,
            }
        )
    return pair, decoder, log


def train_encoders(triples, oracles, config):
    """Joint unified-latent-space training over per-function INR triples.

    triples: dict fn -> list of InrModel aligned with oracles. Every shape
    must supply all three implicit functions. The total loss per shape is

        sum_i |decoder(x; e_i) - d(x)| + lam * sum_{i<j} ||e_i - e_j||^2

    where d is the unified decoder's target function (per-branch targets
    when the separate-decoder ablation is enabled).
    Returns (EncoderSet, log); log entries carry the recon/pair split.
    """
    for fn in FN_TAGS:
        if fn not in triples or len(triples[fn]) != len(oracles):
            raise InputError(f"every shape needs a {fn} INR")
    arch = triples[FN_TAGS[0]][0].arch
    for fn in FN_TAGS:
        if any(m.arch != arch for m in triples[fn]):
            raise InputError("all INRs in a set must share an architecture")
        if any(m.fn != fn for m in triples[fn]):
            raise InputError(f"INR tagged {fn} expected in branch {fn}")

    lattice = sample_coords(config.lattice_n)
    inputs = {
        fn: [encoder_inputs(m, lattice) for m in triples[fn]] for fn in FN_TAGS
    }
    row_width = inputs[FN_TAGS[0]][0][0].shape[1]
    channels = 0 if inputs[FN_TAGS[0]][0][1] is None else inputs[FN_TAGS[0]][0][1].shape[0]

    pairs = {}
    for fn in FN_TAGS:
        rng = rng_stream(config.seed, "encoder-init", arch, fn)
        pairs[fn] = EncoderPair.init(arch, fn, row_width, channels, config.lattice_n, rng)
    if config.unified_decoder:
        decoders = {
            "unified": ShapeDecoder.init(
                config.decoder_fn, rng_stream(config.seed, "decoder-init", "unified")
            )
        }
    else:
        decoders = {
            fn: ShapeDecoder.init(fn, rng_stream(config.seed, "decoder-init", fn))
            for fn in FN_TAGS
        }
    enc_set = EncoderSet(pairs, decoders, config.lam, config.unified_decoder)
    opt = AdamW(enc_set.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    log = []
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        order = rng_stream(config.seed, "order", epoch).permutation(len(oracles))
        recon_sum = 0.0
        pair_sum = 0.0
        for s in range(0, len(order), config.shape_batch):
            chunk = order[s : s + config.shape_batch]
            embs = {
                fn: pairs[fn].embed_batch([inputs[fn][si] for si in chunk], train=True)
                for fn in FN_TAGS
            }
            recon = None
            for local, si in enumerate(chunk):
                for fn in FN_TAGS:
                    dec = enc_set.decoder_for(fn)
                    coords, values = _sample_decoder_points(
                        oracles[si], dec.fn, config, f"{config.seed}.e{epoch}"
                    )
                    pred = dec.forward(coords, embs[fn][local])
                    term = T.tmean(T.absolute(T.sub(pred, Tensor(values))))
                    recon = term if recon is None else T.add(recon, term)
            pair_term = None
            for local in range(len(chunk)):
                for a in range(len(FN_TAGS)):
                    for b in range(a + 1, len(FN_TAGS)):
                        diff = T.sub(embs[FN_TAGS[a]][local], embs[FN_TAGS[b]][local])
                        sq = T.tsum(T.square(diff))
                        pair_term = sq if pair_term is None else T.add(pair_term, sq)
            scale = np.float32(1.0 / len(chunk))
            recon = T.mul(recon, scale)
            pair_term = T.mul(pair_term, scale)
            loss = T.add(recon, T.mul(pair_term, np.float32(config.lam)))
            loss.assert_finite("encoder-set loss")
            recon_sum += float(recon.data)
            pair_sum += float(pair_term.data)
            opt.zero_grad()
            loss.backward()
            opt.step()
        log.append(
            {
                "epoch": epoch,
                "recon": recon_sum,
                "pair": pair_sum,
                "total": recon_sum + config.lam * pair_sum,
                "wall": time.monotonic() - t0,
            }
        )
    return enc_set, log
