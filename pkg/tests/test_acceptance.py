"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The desk pipeline (corpus -> INRs -> encoders -> stores -> metrics) is built
once per session and shared; stages are timed so the pipeline-runtime
criterion can be checked. Heavy artifacts live in a session tmp dir.
"""

import time

import numpy as np
import pytest

from inrstore import pipeline
from inrstore.classifier import train_classifier
from inrstore.convert import OracleField, sample_point_cloud, save_ply
from inrstore.corpus import (
    FN_TAGS,
    PrimitiveSpec,
    ShapeOracle,
    generate_corpus,
    occ_via_relu_network,
    relu,
    sample_training_points,
)
from inrstore.encoders import EncoderTrainConfig, encode
from inrstore.gradcheck import check_case, standard_op_cases
from inrstore.lattice import sample_coords
from inrstore.metrics import (
    ChamferConfig,
    category_accuracy,
    category_chamfer_accuracy,
    chamfer,
    hierarchical_retrieve,
    map_at_k,
    naive_chamfer_retrieve,
    prf1_at_10,
)
from inrstore.rng import rng_stream
from inrstore.store import (
    EmbeddingRecord,
    EmbeddingStore,
    cosine,
    retrieve_topk,
    store_save,
)
from inrstore.training import desk_config, distill_inr, hq_mlp_config, train_inr

SEED = 7


def report(criterion, ok, detail):
    print(f"\n[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


class DeskPipeline:
    """Lazily built shared artifacts with per-stage wall times."""

    def __init__(self, root):
        self.root = root
        self.stage_seconds = {}
        self.manifest = generate_corpus(seed=SEED)
        self._cache = {}

    def _timed(self, name, fn):
        if name not in self._cache:
            t0 = time.monotonic()
            self._cache[name] = fn()
            self.stage_seconds[name] = time.monotonic() - t0
            print(f"[desk] {name}: {self.stage_seconds[name]:.0f}s")
        return self._cache[name]

    # -- INR training stages ------------------------------------------------

    def inr_paths(self, arch, fn):
        def build():
            return pipeline.train_manifest_inrs(
                self.manifest, arch, fn, str(self.root / "inrs"), split="all"
            )

        return self._timed(f"inrs.{arch}.{fn}", build)

    def models(self, arch, fn):
        key = f"models.{arch}.{fn}"
        if key not in self._cache:
            self._cache[key] = pipeline.load_models(self.inr_paths(arch, fn))
        return self._cache[key]

    # -- encoders -----------------------------------------------------------

    def single_encoder(self, arch):
        def build():
            cfg = EncoderTrainConfig(epochs=150, lr=3e-4, seed=5)
            pair, dec, train_store, test_store, log = pipeline.train_split_pipeline_single(
                self.manifest, arch, "sdf", self.inr_paths(arch, "sdf"), cfg
            )
            return {
                "pair": pair,
                "decoder": dec,
                "train_store": train_store,
                "test_store": test_store,
                "log": log,
            }

        return self._timed(f"encoder.{arch}", build)

    def encoder_set(self, mode):
        lam = 0.0 if mode == "none" else 1.0
        unified = mode == "full"

        def build():
            cfg = EncoderTrainConfig(
                epochs=150, lr=3e-4, seed=5, lam=lam, unified_decoder=unified
            )
            paths_by_fn = {fn: self.inr_paths("hash", fn) for fn in FN_TAGS}
            enc_set, stores, log = pipeline.train_split_pipeline_set(
                self.manifest, paths_by_fn, cfg
            )
            return {"set": enc_set, "stores": stores, "log": log}

        return self._timed(f"encoder_set.{mode}", build)

    # -- criterion 7 artifacts ----------------------------------------------

    def hq_sources(self):
        def build():
            out = {}
            for desc in self.manifest.split("test"):
                model, _ = train_inr(desc.oracle(), hq_mlp_config("sdf", desc.seed))
                out[desc.id] = model
            return out

        return self._timed("hq_mlp_sources", build)

    def distilled(self):
        def build():
            from inrstore.training import TrainConfig

            cfg = TrainConfig(
                arch="hash", fn="sdf", epochs=60, batch_size=1024, lr=1e-2,
                cosine_lr=True, seed=13,
            )
            return {
                sid: distill_inr(src, "hash", cfg)[0]
                for sid, src in self.hq_sources().items()
            }

        return self._timed("distilled", build)

    # -- clouds and classifier ----------------------------------------------

    def test_clouds(self):
        def build():
            clouds = {}
            for desc in self.manifest.split("test"):
                model = self.models("hash", "sdf")[desc.id]
                clouds[desc.id] = sample_point_cloud(model, 4096, seed=21)
            return clouds

        return self._timed("test_clouds", build)

    def cloud_fn(self):
        clouds = self.test_clouds()
        return lambda sid, n: clouds[sid][:n]


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    return DeskPipeline(tmp_path_factory.mktemp("desk"))


def test_criterion_1_gradient_correctness():
    t0 = time.monotonic()
    worst_by_op = {}
    n_ops = len(standard_op_cases(rng_stream(0, "enum")))
    for trial in range(100):
        cases = standard_op_cases(rng_stream(trial, "acceptance-gradcheck"))
        for name, build, params in cases:
            err = check_case(build, params)
            worst_by_op[name] = max(worst_by_op.get(name, 0.0), err)
    wall = time.monotonic() - t0
    worst = max(worst_by_op.values())
    ok = worst < 1e-4 and wall < 60.0
    report(
        1,
        ok,
        f"{n_ops} ops x 100 instances, worst rel err {worst:.2e} "
        f"(limit 1e-4), wall {wall:.1f}s (limit 60s)",
    )


def test_criterion_2_implicit_function_identities(desk):
    worst_cases = 0
    for desc in desk.manifest:
        oracle = desc.oracle()
        pts = rng_stream(SEED, "identity", desc.id).uniform(-1, 1, size=(10_000, 3))
        s = oracle.sdf(pts)
        if not np.array_equal(oracle.udf(pts), relu(s) + relu(-s)):
            worst_cases += 1
    s_grid = np.concatenate(
        [np.linspace(-5, 5, 20001), np.array([-1.0, 1.0, 0.0, -2.0, 2.0])]
    )
    construction = occ_via_relu_network(s_grid)
    clamp_ok = np.array_equal(construction, np.clip(s_grid, -1.0, 1.0))
    sign_region = np.abs(s_grid) >= 1.0
    sign_ok = np.array_equal(construction[sign_region], np.sign(s_grid[sign_region]))
    ok = worst_cases == 0 and clamp_ok and sign_ok
    report(
        2,
        ok,
        f"unsigned==relu identity bit-exact on {len(desk.manifest)}x10^4 points "
        f"(failures {worst_cases}); relu construction == clamp {clamp_ok}, "
        f"== sign for |s|>=1 {sign_ok}",
    )


def test_criterion_3_inr_fidelity():
    sphere = ShapeOracle("acc_sphere", "sphere", [PrimitiveSpec("sphere", (0.5,))])
    cfg = desk_config("hash", "sdf", seed=3)
    t0 = time.monotonic()
    model, _ = train_inr(sphere, cfg)
    wall = time.monotonic() - t0
    batch = sample_training_points(sphere, "sdf", 0, 0, 10_000, seed=99)
    mae = float(np.abs(model.evaluate(batch.coords) - batch.values).mean())
    ok = mae < 5e-3 and wall < 60.0
    report(3, ok, f"near-surface MAE {mae:.5f} (limit 5e-3), train wall {wall:.1f}s (limit 60s)")


def test_criterion_4_same_function_retrieval(desk):
    maps = {}
    for arch in ("octree", "triplane", "hash", "mlp"):
        desk.inr_paths(arch, "sdf")
        enc = desk.single_encoder(arch)
        table = pipeline.retrieval_table(enc["test_store"], enc["test_store"], ks=(1,))
        maps[arch] = table["map@1"]
    stage_names = [f"inrs.{a}.sdf" for a in ("octree", "triplane", "hash", "mlp")] + [
        f"encoder.{a}" for a in ("octree", "triplane", "hash", "mlp")
    ]
    wall = sum(desk.stage_seconds.get(s, 0.0) for s in stage_names)
    grid_maps = [maps["octree"], maps["triplane"], maps["hash"]]
    ok_grid = all(m >= 0.90 for m in grid_maps)
    ok_mlp = maps["mlp"] >= float(np.mean(grid_maps)) - 0.15
    ok_wall = wall < 1800.0
    report(
        4,
        ok_grid and ok_mlp and ok_wall,
        f"mAP@1 octree {maps['octree']:.3f} triplane {maps['triplane']:.3f} "
        f"hash {maps['hash']:.3f} (each >= 0.90: {ok_grid}); mlp {maps['mlp']:.3f} "
        f"within 0.15 of grids: {ok_mlp}; pipeline {wall:.0f}s < 1800s: {ok_wall}",
    )


def _avg9(tables):
    return float(np.mean([tables[(q, r)]["map@1"] for q in FN_TAGS for r in FN_TAGS]))


def _diag3(tables):
    return float(np.mean([tables[(fn, fn)]["map@1"] for fn in FN_TAGS]))


def test_criterion_5_regularization_ordering(desk):
    avgs = {}
    full_tables = None
    for mode in ("none", "l2", "full"):
        data = desk.encoder_set(mode)
        tables = pipeline.cross_function_tables(data["stores"])
        avgs[mode] = _avg9(tables)
        if mode == "full":
            full_tables = tables
    same_fn = _diag3(full_tables)
    ordering = avgs["none"] < avgs["l2"] < avgs["full"]
    ok = ordering and avgs["none"] < 0.5 and abs(avgs["full"] - same_fn) <= 0.10
    report(
        5,
        ok,
        f"avg cross-fn mAP@1 none {avgs['none']:.3f} < l2 {avgs['l2']:.3f} < "
        f"full {avgs['full']:.3f} ({ordering}); none < 0.5; "
        f"|full - same-fn {same_fn:.3f}| <= 0.10",
    )


def test_criterion_6_cross_function_symmetry(desk):
    tables = pipeline.cross_function_tables(desk.encoder_set("full")["stores"])
    cells = [tables[(q, r)]["map@1"] for q in FN_TAGS for r in FN_TAGS]
    spread = max(cells) - min(cells)
    ok = spread <= 0.15
    grid = "; ".join(
        f"{q}->{r} {tables[(q, r)]['map@1']:.3f}" for q in FN_TAGS for r in FN_TAGS
    )
    report(6, ok, f"9-cell spread {spread:.3f} <= 0.15 ({grid})")


def test_criterion_7_distillation(desk):
    sources = desk.hq_sources()
    distilled = desk.distilled()
    hash_models = desk.models("hash", "sdf")
    enc = desk.single_encoder("hash")
    lattice = sample_coords(enc["pair"].lattice_n)

    maes = []
    for desc in desk.manifest.split("test"):
        batch = sample_training_points(desc.oracle(), "sdf", 2000, 4000, 4000, seed=31)
        src_vals = sources[desc.id].evaluate(batch.coords)
        dst_vals = distilled[desc.id].evaluate(batch.coords)
        maes.append(float(np.abs(src_vals - dst_vals).mean()))
    mean_mae = float(np.mean(maes))

    test_store = enc["test_store"]
    agree = 0
    total = 0
    for desc in desk.manifest.split("test"):
        native_emb = test_store.get(f"{desc.id}.sdf").embedding
        dist_emb = encode(enc["pair"], distilled[desc.id], lattice)
        pool = EmbeddingStore()
        for r in test_store:
            if r.id != f"{desc.id}.sdf":
                pool.records.append(r)
        native_top = retrieve_topk(native_emb, pool, k=1).ranked[0][0]
        dist_top = retrieve_topk(dist_emb, pool, k=1).ranked[0][0]
        agree += native_top == dist_top
        total += 1
    rate = agree / total
    ok = mean_mae < 1e-2 and rate >= 0.80
    report(
        7,
        ok,
        f"distilled-vs-source MAE {mean_mae:.5f} (limit 1e-2, worst {max(maes):.5f}); "
        f"top-1 agreement {agree}/{total} = {rate:.2f} (>= 0.80)",
    )


def test_criterion_8_hierarchical_chamfer(desk):
    enc = desk.single_encoder("hash")
    clf = train_classifier(enc["train_store"], seed=17)
    cloud_fn = desk.cloud_fn()
    test_descs = desk.manifest.split("test")
    categories = {d.id: d.category for d in test_descs}
    candidates = [(d.id, d.category) for d in test_descs]
    cfg = ChamferConfig()

    emb_of = {d.id: enc["test_store"].get(f"{d.id}.sdf").embedding for d in test_descs}
    match = 0
    fine_saved_checks = []
    for d in test_descs:
        cands = [(cid, cat) for cid, cat in candidates if cid != d.id]
        h = hierarchical_retrieve(d.id, emb_of[d.id], cands, clf, cloud_fn, cfg)
        n = naive_chamfer_retrieve(d.id, emb_of[d.id], cands, clf, cloud_fn, cfg)
        match += h.retrieved_id == n.retrieved_id
        if h.fine_evals < h.coarse_evals:
            fine_saved_checks.append(h.fine_evals < n.fine_evals)
    agree = match / len(test_descs)

    def cosine_top1(qid):
        pool = EmbeddingStore()
        for r in enc["test_store"]:
            if r.id != f"{qid}.sdf":
                pool.records.append(r)
        return retrieve_topk(emb_of[qid], pool, k=1).ranked[0][0].rsplit(".", 1)[0]

    a_c = category_accuracy([d.id for d in test_descs], cosine_top1, categories)
    a_cc = category_chamfer_accuracy(
        [d.id for d in test_descs], cosine_top1, categories, cloud_fn, cfg
    )
    ok = agree == 1.0 and all(fine_saved_checks) and a_cc <= a_c
    report(
        8,
        ok,
        f"hierarchical == naive for {match}/{len(test_descs)} queries; "
        f"fine-eval savings verified on {len(fine_saved_checks)} filtered queries; "
        f"A_CC {a_cc:.3f} <= A_C {a_c:.3f}",
    )


def test_criterion_9_metric_oracles():
    rng = rng_stream(0, "metric-oracles")
    failures = []

    for trial in range(50):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, 5))
        labels = ["a", "b", "c"]
        queries = [labels[rng.integers(3)] for _ in range(n)]
        ranked = [[labels[rng.integers(3)] for _ in range(10)] for _ in range(n)]
        expected = sum(1 for q, r in zip(queries, ranked) if q in r[:k]) / n
        if map_at_k(ranked, queries, k) != expected:
            failures.append(("map", trial))

        sizes = {lab: int(rng.integers(2, 12)) for lab in labels}
        p_e, r_e, f_e = [], [], []
        for q, row in zip(queries, ranked):
            rel = sum(1 for lab in row if lab == q)
            p = rel / 10
            r = rel / (sizes[q] - 1) if sizes[q] > 1 else 0.0
            p_e.append(p)
            r_e.append(r)
            f_e.append(2 * p * r / (p + r) if p + r else 0.0)
        got = prf1_at_10(ranked, queries, sizes)
        want = (float(np.mean(p_e)), float(np.mean(r_e)), float(np.mean(f_e)))
        if not np.allclose(got, want, atol=1e-12):
            failures.append(("prf1", trial))

        p = rng.uniform(-1, 1, (int(rng.integers(1, 10)), 3)).astype(np.float32)
        q = rng.uniform(-1, 1, (int(rng.integers(1, 10)), 3)).astype(np.float32)
        d_pq = np.array([min(float(np.linalg.norm(pi - qj)) for qj in q) for pi in p])
        d_qp = np.array([min(float(np.linalg.norm(qj - pi)) for pi in p) for qj in q])
        if abs(chamfer(p, q) - (d_pq.mean() + d_qp.mean())) > 1e-5:
            failures.append(("chamfer", trial))

        store = EmbeddingStore()
        n_rec = int(rng.integers(2, 11))
        for i in range(n_rec):
            emb = rng.normal(size=1024).astype(np.float32)
            if rng.uniform() < 0.2 and i > 0:
                emb = store.records[0].embedding.copy()  # force ties
            store.add(EmbeddingRecord(f"r{i:02d}", "x", "sdf", "hash", emb))
        qv = rng.normal(size=1024).astype(np.float32)
        kq = int(rng.integers(1, n_rec + 1))
        got_ids = [rid for rid, _ in retrieve_topk(qv, store, kq).ranked]
        brute = sorted(
            ((cosine(qv, r.embedding), r.id) for r in store), key=lambda t: (-t[0], t[1])
        )
        if got_ids != [rid for _, rid in brute[:kq]]:
            failures.append(("retrieve", trial))

    ok = not failures
    report(9, ok, f"50 brute-force instances per metric, mismatches: {failures or 'none'}")


def test_criterion_10_tracing_and_determinism(desk, tmp_path):
    sphere = ShapeOracle("acc_tr", "sphere", [PrimitiveSpec("sphere", (0.5,))])
    sdf_field = OracleField(sphere, "sdf")
    pts = sample_point_cloud(sdf_field, 1024, seed=5)
    radii = np.linalg.norm(pts, axis=1)
    sdf_err = float(np.abs(radii - 0.5).max())

    udf_field = OracleField(sphere, "udf")
    pts_u = sample_point_cloud(udf_field, 1024, seed=5)
    udf_err = float(np.abs(np.linalg.norm(pts_u, axis=1) - 0.5).max())

    p1, p2 = tmp_path / "a.ply", tmp_path / "b.ply"
    save_ply(sample_point_cloud(sdf_field, 512, seed=11), p1)
    save_ply(sample_point_cloud(sdf_field, 512, seed=11), p2)
    ply_same = p1.read_bytes() == p2.read_bytes()

    s1, s2 = tmp_path / "a.inrs", tmp_path / "b.inrs"
    enc = desk.single_encoder("hash")
    store_save(enc["test_store"], s1)
    store_save(enc["test_store"], s2)
    store_same = s1.read_bytes() == s2.read_bytes()

    ok = sdf_err < 1e-3 and udf_err < 2e-3 and ply_same and store_same
    report(
        10,
        ok,
        f"traced radius err {sdf_err:.2e} < 1e-3; damped {udf_err:.2e} < 2e-3; "
        f"point clouds byte-identical {ply_same}; stores byte-identical {store_same}",
    )
