"""Command-line surface for the full pipeline.

Subcommands: corpus-gen, train-inr, distill, train-encoders, encode,
retrieve, eval, export-pointcloud, export-views. Every report embeds the
seed and a hash of the invocation so runs are reproducible. Exit codes:
0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import checkpoint, convert, corpus, pipeline
from .encoders import EncoderTrainConfig
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    InputError,
    InrStoreError,
    ManifestParseError,
    NumericError,
    TagError,
    UsageError,
)
from .lattice import sample_coords
from .metrics import CHAMFER_DEFINITION
from .store import retrieve_topk, store_load, store_save
from .training import TrainConfig, desk_config, distill_inr, train_inr


def config_hash(args):
    payload = json.dumps(
        {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _report_lines(args, rows):
    """rows: list of (metric name, value, extras dict)."""
    h = config_hash(args)
    lines = [f"# config_hash={h} seed={getattr(args, 'seed', 0)}"]
    lines.append(f"# chamfer_definition={CHAMFER_DEFINITION}")
    if hasattr(args, "lattice_n"):
        lines.append(f"# lattice_n={args.lattice_n}")
    for name, value, extras in rows:
        extra = " ".join(f"{k}={v}" for k, v in extras.items())
        lines.append(f"{name} {value:.6f} {extra} cfg={h}".rstrip())
    return lines


def _write_report(args, rows, default_name):
    lines = _report_lines(args, rows)
    out = getattr(args, "out", None)
    path = None
    if out:
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, default_name)
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return path


def cmd_corpus_gen(args):
    spec = corpus.CorpusSpec(
        per_category=args.per_category, train_per_category=args.train_per_category
    )
    manifest = corpus.generate_corpus(spec, seed=args.seed)
    corpus.save_manifest(manifest, args.manifest)
    print(
        f"wrote {len(manifest)} shapes ({len(manifest.split('train'))} train / "
        f"{len(manifest.split('test'))} test) to {args.manifest}"
    )
    return 0


def _train_config(args, arch, fn, seed):
    cfg = desk_config(arch, fn, seed=seed, template_seed=args.template_seed)
    if args.epochs:
        cfg.epochs = args.epochs
    if args.lr:
        cfg.lr = args.lr
    return cfg


def cmd_train_inr(args):
    manifest = corpus.load_manifest(args.manifest)
    def log_cb(sid, log):
        print(f"{sid}: epoch {log[-1]['epoch']} loss {log[-1]['loss']:.6f}")
        if args.out:
            with open(os.path.join(args.out, f"{sid}.{args.arch}.{args.fn}.log"), "w") as f:
                for entry in log:
                    f.write(
                        f"epoch={entry['epoch']} loss={entry['loss']:.8f} "
                        f"wall={entry['wall']:.3f}\n"
                    )

    paths = pipeline.train_manifest_inrs(
        manifest,
        args.arch,
        args.fn,
        args.out,
        seed=args.seed,
        split=args.split,
        config_fn=lambda arch, fn, seed: _train_config(args, arch, fn, seed),
        log_cb=log_cb,
    )
    print(f"{len(paths)} checkpoints in {args.out}")
    return 0


def cmd_distill(args):
    source = checkpoint.load_model(args.source)
    cfg = TrainConfig(
        arch=args.target_arch,
        fn=source.fn,
        epochs=args.epochs or 30,
        batch_size=1024,
        lr=args.lr or 5e-3,
        seed=args.seed,
    )
    model, log = distill_inr(source, args.target_arch, cfg)
    checkpoint.save_model(model, args.out)
    print(f"distilled {args.source} -> {args.out} (final loss {log[-1]['loss']:.6f})")
    return 0


def cmd_train_encoders(args):
    manifest = corpus.load_manifest(args.manifest)
    enc_cfg = EncoderTrainConfig(
        epochs=args.epochs or 30,
        lam=args.lam,
        decoder_fn=args.decoder_fn,
        unified_decoder=(args.decoder_mode == "unified"),
        lattice_n=args.lattice_n,
        seed=args.seed,
    )
    if args.fn == "all":
        paths_by_fn = {
            fn: {
                d.id: os.path.join(args.inr_dir, pipeline.checkpoint_name(d.id, args.arch, fn))
                for d in manifest
            }
            for fn in corpus.FN_TAGS
        }
        enc_set, stores, log = pipeline.train_split_pipeline_set(
            manifest, paths_by_fn, enc_cfg
        )
        checkpoint.save_encoder_set(enc_set, args.encoder_out)
        print(
            f"encoder set -> {args.encoder_out} "
            f"(recon {log[-1]['recon']:.4f} pair {log[-1]['pair']:.4f})"
        )
    else:
        inr_paths = {
            d.id: os.path.join(
                args.inr_dir, pipeline.checkpoint_name(d.id, args.arch, args.fn)
            )
            for d in manifest
        }
        pair, decoder, _, _, log = pipeline.train_split_pipeline_single(
            manifest, args.arch, args.fn, inr_paths, enc_cfg
        )
        checkpoint.save_encoder_single(pair, decoder, args.encoder_out)
        print(f"encoder -> {args.encoder_out} (loss {log[-1]['loss']:.6f})")
    return 0


def _load_any_encoder(path):
    try:
        return checkpoint.load_encoder_single(path)[0]
    except FormatError:
        return checkpoint.load_encoder_set(path)


def cmd_encode(args):
    manifest = corpus.load_manifest(args.manifest)
    enc = _load_any_encoder(args.encoder)
    from .store import EmbeddingStore

    store = EmbeddingStore()
    lattice = None
    for path in args.inrs:
        model = checkpoint.load_model(path)
        sid = os.path.basename(path).split(".")[0]
        desc = manifest.by_id(sid)
        if hasattr(enc, "pairs"):
            if lattice is None:
                lattice = sample_coords(enc.pairs[model.fn].lattice_n)
            emb = enc.encode(model, lattice)
        else:
            if lattice is None:
                lattice = sample_coords(enc.lattice_n)
            from .encoders import encode as encode_one

            emb = encode_one(enc, model, lattice)
        from .store import EmbeddingRecord

        store.add(
            EmbeddingRecord(
                id=f"{sid}.{model.fn}",
                category=desc.category,
                fn=model.fn,
                arch=model.arch,
                embedding=emb,
            )
        )
    store_save(store, args.store)
    print(f"{len(store)} embeddings -> {args.store}")
    return 0


def cmd_retrieve(args):
    store = store_load(args.store)
    query = store.get(args.query_id).embedding
    result = retrieve_topk(
        query, store, args.k, exclude_self=args.query_id if args.exclude_self else None
    )
    for rid, score in result.ranked:
        print(f"{rid}\t{score:.6f}")
    return 0


def cmd_eval(args):
    store = store_load(args.store)
    fns = sorted({r.fn for r in store})
    rows = []
    for qfn in fns:
        for rfn in fns:
            table = pipeline.retrieval_table(store.subset(fn=qfn), store.subset(fn=rfn))
            for metric, value in table.items():
                rows.append((metric, value, {"query_fn": qfn, "retrieval_fn": rfn}))
    path = _write_report(args, rows, "eval_report.txt")
    if path:
        print(f"report -> {path}")
    return 0


def cmd_export_pointcloud(args):
    model = checkpoint.load_model(args.checkpoint)
    pts = convert.sample_point_cloud(model, args.n, seed=args.seed)
    convert.save_ply(pts, args.out_file)
    print(f"{len(pts)} points -> {args.out_file}")
    return 0


def cmd_export_views(args):
    model = checkpoint.load_model(args.checkpoint)
    maps = convert.render_depth_views(model, n_views=args.views, resolution=args.resolution)
    os.makedirs(args.out, exist_ok=True)
    for i, depth in enumerate(maps):
        convert.save_pgm16(depth, os.path.join(args.out, f"view_{i:02d}.pgm"))
    print(f"{len(maps)} depth maps ({args.resolution}x{args.resolution}) -> {args.out}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="inrstore", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("corpus-gen", help="generate a procedural corpus manifest")
    g.add_argument("--manifest", required=True)
    g.add_argument("--per-category", type=int, default=10)
    g.add_argument("--train-per-category", type=int, default=7)
    common(g)
    g.set_defaults(func=cmd_corpus_gen)

    t = sub.add_parser("train-inr", help="train INRs for manifest shapes")
    t.add_argument("--manifest", required=True)
    t.add_argument("--arch", choices=corpus.ARCH_TAGS, required=True)
    t.add_argument("--fn", choices=corpus.FN_TAGS, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--split", choices=("train", "test", "all"), default="all")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--template-seed", type=int, default=0)
    common(t)
    t.set_defaults(func=cmd_train_inr)

    d = sub.add_parser("distill", help="distill a source INR into another architecture")
    d.add_argument("--source", required=True)
    d.add_argument("--target-arch", choices=corpus.ARCH_TAGS, required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--epochs", type=int, default=None)
    d.add_argument("--lr", type=float, default=None)
    common(d)
    d.set_defaults(func=cmd_distill)

    e = sub.add_parser("train-encoders", help="train embedding encoders")
    e.add_argument("--manifest", required=True)
    e.add_argument("--inr-dir", required=True)
    e.add_argument("--arch", choices=("octree", "triplane", "hash", "mlp"), required=True)
    e.add_argument("--fn", choices=(*corpus.FN_TAGS, "all"), required=True)
    e.add_argument("--encoder-out", required=True)
    e.add_argument("--epochs", type=int, default=None)
    e.add_argument("--lambda", dest="lam", type=float, default=1.0)
    e.add_argument("--decoder-fn", choices=corpus.FN_TAGS, default="udf")
    e.add_argument("--decoder-mode", choices=("unified", "separate"), default="unified")
    e.add_argument("--lattice-n", type=int, default=16)
    common(e)
    e.set_defaults(func=cmd_train_encoders)

    n = sub.add_parser("encode", help="embed INR checkpoints into a store")
    n.add_argument("--manifest", required=True)
    n.add_argument("--encoder", required=True)
    n.add_argument("--store", required=True)
    n.add_argument("inrs", nargs="+")
    common(n)
    n.set_defaults(func=cmd_encode)

    r = sub.add_parser("retrieve", help="top-k cosine retrieval from a store")
    r.add_argument("--store", required=True)
    r.add_argument("--query-id", required=True)
    r.add_argument("--k", type=int, default=5)
    r.add_argument("--exclude-self", action="store_true")
    common(r)
    r.set_defaults(func=cmd_retrieve)

    v = sub.add_parser("eval", help="retrieval metric report over a store")
    v.add_argument("--store", required=True)
    v.add_argument("--out", default=None)
    v.add_argument("--lattice-n", type=int, default=16)
    common(v)
    v.set_defaults(func=cmd_eval)

    pc = sub.add_parser("export-pointcloud", help="sample a surface point cloud")
    pc.add_argument("--checkpoint", required=True)
    pc.add_argument("--n", type=int, default=2048)
    pc.add_argument("--out", dest="out_file", required=True)
    common(pc)
    pc.set_defaults(func=cmd_export_pointcloud)

    vw = sub.add_parser("export-views", help="render depth views")
    vw.add_argument("--checkpoint", required=True)
    vw.add_argument("--views", type=int, default=12)
    vw.add_argument("--resolution", type=int, default=224)
    vw.add_argument("--out", required=True)
    common(vw)
    vw.set_defaults(func=cmd_export_views)

    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (
        ManifestParseError,
        FormatError,
        ConfigError,
        InputError,
        TagError,
        DomainError,
        FileNotFoundError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
