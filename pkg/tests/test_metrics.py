"""Metric tests, with the brute-force re-identification oracle up front."""

import numpy as np
import pytest

from anonpipe.core import Embedding
from anonpipe.errors import MetricError
from anonpipe.metrics import (
    EvalReport,
    LabeledEmbedding,
    attribute_stats,
    evaluate,
    expression_retention,
    pose_gaze_mae,
    reid_rank1,
    temporal_consistency,
)


def oracle_rank1(gallery, probes):
    """Independent exhaustive nearest-neighbor search.

    Scans every gallery item per probe with explicit comparisons; ties on
    similarity resolve to the lexicographically lowest item_id.
    """
    hits = 0
    for probe in probes:
        best_sim = None
        best_item = None
        best_identity = None
        for g in gallery:
            sim = float(np.dot(probe.embedding.values, g.embedding.values))
            if (
                best_sim is None
                or sim > best_sim
                or (sim == best_sim and g.item_id < best_item)
            ):
                best_sim, best_item, best_identity = sim, g.item_id, g.identity_id
        if best_identity == probe.identity_id:
            hits += 1
    return hits / len(probes)


def random_items(rng, n, k, dim=64, prefix="g"):
    return [
        LabeledEmbedding(
            identity_id=f"id{int(rng.integers(k))}",
            embedding=Embedding.normalized(rng.normal(size=dim)),
            item_id=f"{prefix}{i:04d}",
        )
        for i in range(n)
    ]


def basis_item(dim, axis, identity, item_id):
    v = np.zeros(dim)
    v[axis] = 1.0
    return LabeledEmbedding(identity, Embedding(v), item_id)


class TestReidRank1:
    def test_probes_equal_gallery(self):
        rng = np.random.default_rng(0)
        gallery = random_items(rng, 20, 5)
        probes = [
            LabeledEmbedding(g.identity_id, g.embedding, f"p{i}")
            for i, g in enumerate(gallery)
        ]
        assert reid_rank1(gallery, probes) == 1.0

    def test_single_identity_gallery(self):
        rng = np.random.default_rng(1)
        gallery = [
            LabeledEmbedding("only", Embedding.normalized(rng.normal(size=16)), f"g{i}")
            for i in range(5)
        ]
        probes = [
            LabeledEmbedding("only", Embedding.normalized(rng.normal(size=16)), f"p{i}")
            for i in range(7)
        ]
        assert reid_rank1(gallery, probes) == 1.0

    def test_empty_gallery(self):
        rng = np.random.default_rng(2)
        with pytest.raises(MetricError):
            reid_rank1([], random_items(rng, 3, 2))

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(2, 60))
            k = int(rng.integers(1, 8))
            gallery = random_items(rng, n, k, prefix="g")
            probes = random_items(rng, int(rng.integers(1, 40)), k, prefix="p")
            assert reid_rank1(gallery, probes) == oracle_rank1(gallery, probes)

    def test_tie_breaks_match_oracle(self):
        # Duplicate embeddings with different identities: exact similarity
        # ties that only the item_id rule can resolve.
        gallery = [
            basis_item(8, 0, "alice", "g_b"),
            basis_item(8, 0, "bob", "g_a"),  # same vector, lower item_id
            basis_item(8, 1, "carol", "g_c"),
        ]
        probes = [basis_item(8, 0, "bob", "p_0"), basis_item(8, 0, "alice", "p_1")]
        assert reid_rank1(gallery, probes) == oracle_rank1(gallery, probes) == 0.5

    def test_permutation_of_gallery_is_irrelevant(self):
        rng = np.random.default_rng(4)
        gallery = random_items(rng, 30, 4)
        probes = random_items(rng, 20, 4, prefix="p")
        expected = reid_rank1(gallery, probes)
        for _ in range(5):
            rng.shuffle(gallery)
            assert reid_rank1(gallery, probes) == expected

    def test_shuffled_labels_concentrate_near_chance(self):
        rng = np.random.default_rng(5)
        k, n = 5, 400
        gallery = [
            LabeledEmbedding(f"id{i % k}", Embedding.normalized(rng.normal(size=64)), f"g{i:04d}")
            for i in range(n)
        ]
        probes = [
            LabeledEmbedding(f"id{int(rng.integers(k))}", Embedding.normalized(rng.normal(size=64)), f"p{i:04d}")
            for i in range(n)
        ]
        rate = reid_rank1(gallery, probes)
        p = 1.0 / k
        sigma = (p * (1 - p) / n) ** 0.5
        assert abs(rate - p) <= 5 * sigma


class TestPoseGazeMae:
    def test_identical_pairs(self):
        pairs = [((0.1, 0.2), (0.1, 0.2))] * 4
        assert pose_gaze_mae(pairs) == (0.0, None)

    def test_constant_offset(self):
        pairs = [((p, y), (p + 0.1, y + 0.1)) for p, y in ((0.0, 0.5), (-0.3, 0.2))]
        pose, _ = pose_gaze_mae(pairs)
        assert pose == pytest.approx(0.1)

    def test_mixed_offsets_hand_computed(self):
        # ((0.02+0.04)/2 + (0.0+0.02)/2) / 2 = 0.02
        pairs = [((0.0, 0.0), (0.02, 0.04)), ((1.0, -1.0), (1.0, -1.02))]
        pose, _ = pose_gaze_mae(pairs)
        assert pose == pytest.approx(0.02)

    def test_gaze_supplied(self):
        pose, gaze = pose_gaze_mae(
            [((0.0, 0.0), (0.0, 0.0))], [((0.0, 0.0), (0.2, 0.0))]
        )
        assert pose == 0.0
        assert gaze == pytest.approx(0.1)

    def test_empty_raises(self):
        with pytest.raises(MetricError):
            pose_gaze_mae([])


class TestExpressionRetention:
    def test_all_equal(self):
        assert expression_retention([("happy", "happy")] * 3) == 1.0

    def test_none_equal(self):
        assert expression_retention([("happy", "sad"), ("neutral", "angry")]) == 0.0

    def test_three_of_four(self):
        pairs = [("a", "a"), ("b", "b"), ("c", "c"), ("d", "x")]
        assert expression_retention(pairs) == 0.75

    def test_case_insensitive(self):
        assert expression_retention([("Happy", "happy")]) == 1.0

    def test_empty_raises(self):
        with pytest.raises(MetricError):
            expression_retention([])


def emb(axis, dim=8):
    v = np.zeros(dim)
    v[axis] = 1.0
    return Embedding(v)


class TestTemporalConsistency:
    def test_constant_sequence(self):
        assert temporal_consistency([emb(0)] * 5) == 0.0

    def test_alternating_orthogonal(self):
        seq = [emb(0), emb(1), emb(0), emb(1)]
        assert temporal_consistency(seq) == 1.0

    def test_hand_mean(self):
        # Unit 2-vectors at angles 0, acos(0.8), acos(0.8)+acos(0.6):
        # consecutive distances 0.2 and 0.4, mean 0.3.
        t1 = np.arccos(0.8)
        t2 = t1 + np.arccos(0.6)
        seq = [
            Embedding(np.array([1.0, 0.0])),
            Embedding(np.array([np.cos(t1), np.sin(t1)])),
            Embedding(np.array([np.cos(t2), np.sin(t2)])),
        ]
        assert temporal_consistency(seq) == pytest.approx(0.3, abs=1e-12)

    def test_too_short_raises(self):
        with pytest.raises(MetricError):
            temporal_consistency([emb(0)])


class TestAttributeStats:
    def test_identical_pairs(self):
        rec = {"race": "asian", "gender": "female", "age": 30.0, "emotion": "neutral"}
        out = attribute_stats([(rec, dict(rec))] * 3)
        assert out["race_pct"] == 100.0
        assert out["gender_pct"] == 100.0
        assert out["expression_pct"] == 100.0
        assert out["age_mean"] == 0.0
        assert out["age_std"] == 0.0

    def test_one_gender_flip_in_two(self):
        a = {"gender": "female"}
        pairs = [(a, {"gender": "female"}), (a, {"gender": "male"})]
        assert attribute_stats(pairs)["gender_pct"] == 50.0

    def test_age_stats(self):
        pairs = [
            ({"age": 30.0}, {"age": 32.0}),
            ({"age": 40.0}, {"age": 36.0}),
        ]
        out = attribute_stats(pairs)
        assert out["age_mean"] == pytest.approx(3.0)  # |2| and |4|
        assert out["age_std"] == pytest.approx(1.0)

    def test_empty_raises(self):
        with pytest.raises(MetricError):
            attribute_stats([])


class TestEvalReport:
    def test_table_shapes_render(self):
        report = EvalReport(
            re_at_1=0.042,
            pose_mae=0.015,
            gaze_mae=0.172,
            expression_retention=0.747,
            temporal_consistency=0.013,
            temporal_consistency_orig=0.011,
            attributes={
                "race_pct": 79.5,
                "gender_pct": 99.4,
                "age_mean": 1.87,
                "age_std": 4.23,
                "expression_pct": 74.7,
            },
            counts={
                "total": 30000,
                "successes": 29997,
                "anonymization_failures": 3,
                "detection_failures": 0,
            },
        )
        md = report.to_markdown()
        assert "radians" in md
        assert "| Re@1 (lower is better) | 0.042 |" in md
        assert "| 0.015 | 0.172 |" in md
        assert "| Race (%) | 79.5 |" in md
        assert "| Age (mean ± std) | (1.87, 4.23) |" in md
        assert "| Anonymization failures | 3 |" in md

    def test_fraction_bounds_enforced(self):
        with pytest.raises(ValueError):
            EvalReport(re_at_1=1.5)

    def test_counts_consistency_enforced(self):
        with pytest.raises(ValueError):
            EvalReport(counts={"total": 10, "successes": 5, "anonymization_failures": 1, "detection_failures": 0})


class TestEvaluate:
    def manifests(self):
        rng = np.random.default_rng(11)
        orig, anon = [], []
        for i in range(6):
            e = rng.normal(size=16)
            e /= np.linalg.norm(e)
            orig.append(
                {
                    "item_id": f"item{i}",
                    "identity_id": f"id{i % 2}",
                    "embedding": e.tolist(),
                    "pitch": 0.1 * i,
                    "yaw": -0.05 * i,
                    "emotion": "happy",
                    "age": 30 + i,
                    "gender": "female",
                    "race": "asian",
                    "quality": 4.0,
                    "aesthetics": 3.0,
                }
            )
            e2 = rng.normal(size=16)
            e2 /= np.linalg.norm(e2)
            anon.append(
                {
                    "item_id": f"item{i}",
                    "identity_id": f"id{i % 2}",
                    "embedding": e2.tolist(),
                    "pitch": 0.1 * i + 0.01,
                    "yaw": -0.05 * i,
                    "emotion": "happy" if i else "sad",
                    "age": 31 + i,
                    "gender": "female",
                    "race": "asian",
                    "quality": 4.1,
                    "aesthetics": 3.2,
                }
            )
        return orig, anon

    def test_full_sweep(self):
        orig, anon = self.manifests()
        report = evaluate(orig, anon, ["reid", "pose", "expr", "attrs", "quality"])
        assert 0.0 <= report.re_at_1 <= 1.0
        assert report.pose_mae == pytest.approx(0.005)
        assert report.expression_retention == pytest.approx(5 / 6)
        assert report.attributes["gender_pct"] == 100.0
        assert report.attributes["age_mean"] == pytest.approx(1.0)
        assert report.quality["anon_quality"] == pytest.approx(4.1)
        assert report.counts["total"] == 6
        assert report.counts["successes"] == 6

    def test_temporal_columns(self):
        def tc_records(distance, n_items=2):
            out = []
            for i in range(n_items):
                a = np.zeros(8)
                a[0] = 1.0
                b = np.zeros(8)
                b[0] = 1.0 - distance
                b[1] = np.sqrt(1 - (1 - distance) ** 2)
                out.append(
                    {"item_id": f"v{i}", "frame_embeddings": [a.tolist(), b.tolist()]}
                )
            return out

        report = evaluate(tc_records(0.1), tc_records(0.3), ["temporal"])
        assert report.temporal_consistency_orig == pytest.approx(0.1)
        assert report.temporal_consistency == pytest.approx(0.3)

    def test_unknown_metric_rejected(self):
        orig, anon = self.manifests()
        with pytest.raises(MetricError):
            evaluate(orig, anon, ["magic"])

    def test_failure_counts(self):
        orig, anon = self.manifests()
        anon[0]["anonymization_failed"] = True
        anon[1]["detection_failed"] = True
        report = evaluate(orig, anon, ["attrs"])
        assert report.counts == {
            "total": 6,
            "successes": 4,
            "anonymization_failures": 1,
            "detection_failures": 1,
        }
