"""End-to-end desk pipeline helpers shared by the CLI and the acceptance
suite: train per-shape INRs over a manifest, train encoders on the train
split, embed the test split, and compute retrieval tables.
"""

import os

import numpy as np

from .checkpoint import load_model, save_model
from .corpus import FN_TAGS
from .encoders import (
    EncoderTrainConfig,
    encode,
    train_encoder_single,
    train_encoders,
)
from .errors import InputError
from .lattice import sample_coords
from .metrics import map_at_k, prf1_at_10
from .store import EmbeddingRecord, EmbeddingStore, retrieve_topk
from .training import desk_config, train_inr


def checkpoint_name(shape_id, arch, fn):
    return f"{shape_id}.{arch}.{fn}.inrm"


def train_manifest_inrs(
    manifest, arch, fn, out_dir, seed=0, split="all", config_fn=None, log_cb=None
):
    """Train one INR per manifest shape; returns dict id -> checkpoint path.

    Existing checkpoints are reused, so reruns are incremental.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for desc in manifest.split(split):
        path = os.path.join(out_dir, checkpoint_name(desc.id, arch, fn))
        if not os.path.exists(path):
            cfg = (config_fn or desk_config)(arch, fn, seed=desc.seed)
            model, log = train_inr(desc.oracle(), cfg)
            save_model(model, path)
            if log_cb:
                log_cb(desc.id, log)
        paths[desc.id] = path
    return paths


def load_models(paths):
    return {sid: load_model(p) for sid, p in paths.items()}


def build_store(models, manifest, pair_or_set, lattice=None):
    """Embed models into a fresh store; categories come from the manifest."""
    store = EmbeddingStore()
    for sid in sorted(models):
        model = models[sid]
        desc = manifest.by_id(sid)
        if hasattr(pair_or_set, "pairs"):
            emb = pair_or_set.encode(model, lattice)
        else:
            emb = encode(pair_or_set, model, lattice)
        store.add(
            EmbeddingRecord(
                id=f"{sid}.{model.fn}",
                category=desc.category,
                fn=model.fn,
                arch=model.arch,
                embedding=emb,
            )
        )
    return store


def _shape_of(record_id):
    return record_id.rsplit(".", 1)[0]


def retrieval_table(query_store, candidate_store, ks=(1, 5, 10)):
    """Hit-rate mAP@k and P/R/F1@10 for queries against candidates.

    A record never retrieves the record of the same underlying shape
    (matching the exclude-self protocol across implicit functions).
    """
    queries = list(query_store)
    if not queries:
        raise InputError("query store is empty")
    ranked_labels = []
    query_labels = []
    for q in queries:
        pool = EmbeddingStore()
        for r in candidate_store:
            if _shape_of(r.id) != _shape_of(q.id):
                pool.records.append(r)
        res = retrieve_topk(q.embedding, pool, k=max(max(ks), 10))
        cats = {r.id: r.category for r in pool}
        ranked_labels.append([cats[rid] for rid, _ in res.ranked])
        query_labels.append(q.category)
    out = {f"map@{k}": map_at_k(ranked_labels, query_labels, k) for k in ks}
    class_sizes = {}
    for q in queries:
        class_sizes[q.category] = sum(
            1 for r in candidate_store if r.category == q.category
        )
    # candidate pools exclude the query's shape, so +1 puts the query back in
    sizes_with_query = {c: n + 1 for c, n in class_sizes.items()}
    if all(len(r) >= 10 for r in ranked_labels):
        p, r, f1 = prf1_at_10(ranked_labels, query_labels, sizes_with_query)
        out.update({"p@10": p, "r@10": r, "f1@10": f1})
    return out


def cross_function_tables(stores_by_fn, ks=(1,)):
    """All 9 (query-fn, retrieval-fn) retrieval tables."""
    table = {}
    for qfn in FN_TAGS:
        for rfn in FN_TAGS:
            table[(qfn, rfn)] = retrieval_table(
                stores_by_fn[qfn], stores_by_fn[rfn], ks=ks
            )
    return table


def train_split_pipeline_single(manifest, arch, fn, inr_paths, enc_config):
    """Encoder for one (arch, fn): train on train split, embed both splits.

    Returns (pair, decoder, train_store, test_store, log).
    """
    train_descs = manifest.split("train")
    test_descs = manifest.split("test")
    models = load_models(inr_paths)
    train_models = [models[d.id] for d in train_descs]
    train_oracles = [d.oracle() for d in train_descs]
    pair, decoder, log = train_encoder_single(train_models, train_oracles, enc_config)
    lattice = sample_coords(enc_config.lattice_n)
    train_store = build_store(
        {d.id: models[d.id] for d in train_descs}, manifest, pair, lattice
    )
    test_store = build_store(
        {d.id: models[d.id] for d in test_descs}, manifest, pair, lattice
    )
    return pair, decoder, train_store, test_store, log


def train_split_pipeline_set(manifest, paths_by_fn, enc_config):
    """EncoderSet over the three implicit functions of every train shape.

    Returns (enc_set, stores_by_fn for the test split, log).
    """
    train_descs = manifest.split("train")
    test_descs = manifest.split("test")
    triples = {}
    models_by_fn = {fn: load_models(paths_by_fn[fn]) for fn in FN_TAGS}
    for fn in FN_TAGS:
        triples[fn] = [models_by_fn[fn][d.id] for d in train_descs]
    oracles = [d.oracle() for d in train_descs]
    enc_set, log = train_encoders(triples, oracles, enc_config)
    lattice = sample_coords(enc_config.lattice_n)
    stores = {}
    for fn in FN_TAGS:
        stores[fn] = build_store(
            {d.id: models_by_fn[fn][d.id] for d in test_descs},
            manifest,
            enc_set.pairs[fn],
            lattice,
        )
    return enc_set, stores, log
