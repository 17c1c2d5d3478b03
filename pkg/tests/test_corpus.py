"""Shape oracles, implicit-function relations, samplers, manifest IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inrstore.corpus import (
    CorpusSpec,
    DOMAIN_MARGIN,
    PointBatch,
    PrimitiveSpec,
    ShapeOracle,
    Transform,
    generate_corpus,
    load_manifest,
    occ_via_relu_network,
    relu,
    sample_training_points,
    save_manifest,
)
from inrstore.errors import DomainError, InputError, ManifestParseError
from inrstore.rng import rng_stream


def sphere(r=0.5):
    return ShapeOracle("s0", "sphere", [PrimitiveSpec("sphere", (r,))])


class TestSdf:
    def test_sphere_center(self):
        assert sphere().sdf(np.zeros(3)) == -0.5

    def test_sphere_boundary_point(self):
        assert sphere().sdf(np.array([1.0, 0.0, 0.0])) == 0.5

    def test_box_face_distance(self):
        box = ShapeOracle("b", "box", [PrimitiveSpec("box", (0.3, 0.3, 0.3))])
        # closed form: outside along +x, distance = 0.5 - 0.3
        assert abs(box.sdf(np.array([0.5, 0.0, 0.0])) - 0.2) < 1e-12

    def test_torus_closed_form(self):
        torus = ShapeOracle("t", "torus", [PrimitiveSpec("torus", (0.4, 0.1))])
        # point on the ring plane at radius 0.6: |0.6-0.4| - 0.1
        assert abs(torus.sdf(np.array([0.6, 0.0, 0.0])) - 0.1) < 1e-12

    def test_capsule_closed_form(self):
        cap = ShapeOracle("c", "capsule", [PrimitiveSpec("capsule", (0.3, 0.2))])
        # beyond the +z cap: dist to segment end (0,0,0.3) minus radius
        assert abs(cap.sdf(np.array([0.0, 0.0, 0.7])) - 0.2) < 1e-12

    def test_outside_domain_rejected(self):
        with pytest.raises(DomainError):
            sphere().sdf(np.array([1.5, 0.0, 0.0]))

    def test_union_is_min(self):
        two = ShapeOracle(
            "u",
            "pair",
            [
                PrimitiveSpec("sphere", (0.2,), Transform((-0.5, 0, 0))),
                PrimitiveSpec("sphere", (0.2,), Transform((0.5, 0, 0))),
            ],
        )
        x = np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_allclose(two.sdf(x), [-0.2, -0.2, 0.3], atol=1e-12)

    def test_transform_exactness(self):
        rng = rng_stream(3, "xform")
        t = Transform(
            tuple(rng.uniform(-0.2, 0.2, 3)), tuple(rng.uniform(0, 6.28, 3)), 0.9
        )
        s = ShapeOracle("s", "sphere", [PrimitiveSpec("sphere", (0.4,), t)])
        # signed distance of a transformed sphere stays |x - c| - r*scale
        pts = rng.uniform(-0.6, 0.6, size=(100, 3))
        expected = np.linalg.norm(pts - np.asarray(t.translation), axis=1) - 0.4 * 0.9
        np.testing.assert_allclose(s.sdf(pts), expected, atol=1e-12)


class TestRelations:
    def test_udf_sphere(self):
        assert sphere().udf(np.zeros(3)) == 0.5

    def test_udf_surface_point_zero(self):
        pts = sphere().surface_samples(10, rng_stream(0, "s"))
        np.testing.assert_allclose(sphere().udf(pts), 0.0, atol=1e-12)

    def test_udf_equals_relu_identity_bit_exact(self):
        oracle = sphere()
        pts = rng_stream(1, "relu-id").uniform(-1, 1, size=(10_000, 3))
        s = oracle.sdf(pts)
        assert np.array_equal(oracle.udf(pts), relu(s) + relu(-s))

    def test_occ_signs(self):
        assert sphere().occ(np.zeros(3)) == -1.0
        assert sphere().occ(np.array([0.9, 0.0, 0.0])) == 1.0

    def test_occ_matches_sign_on_random_points(self):
        oracle = sphere()
        pts = rng_stream(2, "occ").uniform(-1, 1, size=(10_000, 3))
        s = oracle.sdf(pts)
        mask = s != 0
        np.testing.assert_array_equal(oracle.occ(pts)[mask], np.sign(s)[mask])

    def test_occ_zero_tie_breaks_positive(self):
        assert sphere().occ(np.array([0.5, 0.0, 0.0])) == 1.0

    def test_occ_relu_construction_paper_values(self):
        assert occ_via_relu_network(2.0) == 1.0
        assert occ_via_relu_network(-2.0) == -1.0

    def test_occ_relu_construction_is_clamp_inside_band(self):
        # evaluating the four relu terms by hand at s=0.5:
        # h1=0.5, h2=0, h3=0, h4=0 -> 0.5 (the clamp value, not the sign)
        assert occ_via_relu_network(0.5) == 0.5

    @given(st.floats(-10, 10, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_occ_relu_construction_equals_clamp(self, s):
        assert occ_via_relu_network(s) == np.clip(s, -1.0, 1.0)
        if abs(s) >= 1.0:
            assert occ_via_relu_network(s) == np.sign(s)


class TestSampling:
    def test_surface_batch_values_near_zero(self):
        batch = sample_training_points(sphere(), "sdf", 0, 512, 0, seed=4)
        assert np.abs(batch.values).max() < 1e-6

    def test_surface_samples_exact_for_all_primitives(self):
        rng = rng_stream(5, "surf")
        for kind, params in (
            ("sphere", (0.5,)),
            ("box", (0.3, 0.25, 0.4)),
            ("torus", (0.4, 0.12)),
            ("capsule", (0.3, 0.15)),
        ):
            oracle = ShapeOracle("x", kind, [PrimitiveSpec(kind, params)])
            pts = oracle.surface_samples(500, rng)
            assert np.abs(oracle.sdf(pts)).max() < 1e-5

    def test_ratio_defaults(self):
        batch = sample_training_points(sphere(), "sdf", 4096, 8192, 8192, seed=1)
        assert len(batch.coords) == 4096 + 8192 + 8192
        assert (batch.kinds == 0).sum() == 4096
        assert (batch.kinds == 1).sum() == 8192
        assert (batch.kinds == 2).sum() == 8192

    def test_same_seed_identical(self):
        a = sample_training_points(sphere(), "udf", 100, 200, 200, seed=9)
        b = sample_training_points(sphere(), "udf", 100, 200, 200, seed=9)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.values, b.values)

    def test_all_points_inside_domain(self):
        batch = sample_training_points(sphere(), "occ", 500, 500, 500, seed=2)
        assert np.abs(batch.coords).max() <= 1.0

    def test_negative_counts_rejected(self):
        with pytest.raises(InputError):
            sample_training_points(sphere(), "sdf", -1, 0, 0, seed=0)


class TestCorpusGeneration:
    def test_default_counts_and_split(self):
        manifest = generate_corpus(seed=7)
        assert len(manifest) == 40
        assert len(manifest.split("train")) == 28
        assert len(manifest.split("test")) == 12
        assert manifest.categories() == ["box", "capsule", "sphere", "torus"]

    def test_margin_invariant(self):
        manifest = generate_corpus(seed=7)
        for desc in manifest:
            oracle = desc.oracle()
            assert oracle.bound() <= 1.0 - DOMAIN_MARGIN + 1e-9
            pts = oracle.surface_samples(200, rng_stream(0, "margin", desc.id))
            assert np.abs(pts).max() <= 1.0 - DOMAIN_MARGIN + 1e-9

    def test_empty_spec(self):
        manifest = generate_corpus(CorpusSpec(categories=(), per_category=0), seed=0)
        assert len(manifest) == 0

    def test_ids_unique(self):
        manifest = generate_corpus(seed=7)
        ids = [s.id for s in manifest]
        assert len(ids) == len(set(ids))


class TestManifestIO:
    def test_round_trip_lossless(self, tmp_path):
        manifest = generate_corpus(seed=3)
        p1 = tmp_path / "m1.txt"
        p2 = tmp_path / "m2.txt"
        save_manifest(manifest, p1)
        loaded = load_manifest(p1)
        save_manifest(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        for a, b in zip(manifest, loaded):
            assert a == b

    def test_duplicate_id_rejected(self, tmp_path):
        manifest = generate_corpus(seed=3)
        path = tmp_path / "m.txt"
        save_manifest(manifest, path)
        text = path.read_text()
        block = text.split("\n\n")[0]
        path.write_text(text + "\n" + block + "\n")
        with pytest.raises(ManifestParseError):
            load_manifest(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("id=a\ncategory=sphere\nnot a key value line\n")
        with pytest.raises(ManifestParseError) as err:
            load_manifest(path)
        assert "line 3" in str(err.value)

    def test_split_must_cover_categories(self, tmp_path):
        manifest = generate_corpus(CorpusSpec(per_category=2, train_per_category=2), seed=0)
        path = tmp_path / "m.txt"
        save_manifest(manifest, path)
        with pytest.raises(ManifestParseError):
            load_manifest(path)
