"""Evaluation metric suite: re-identification, pose/gaze, expression,
temporal consistency, and attribute preservation statistics.

All metrics are pure functions with fixed reduction order, so results are
bitwise reproducible and safe to compute in parallel chunks. Angles are
radians throughout, and the report header states the unit explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Embedding, cosine_distance
from .errors import MetricError

ANGLES_UNIT = "radians"


@dataclass(frozen=True)
class LabeledEmbedding:
    """One gallery or probe item: identity label plus unit embedding."""

    identity_id: str
    embedding: Embedding
    item_id: str

    def __post_init__(self):
        if not self.identity_id:
            raise ValueError("identity_id must be non-empty")


def reid_rank1(gallery: list[LabeledEmbedding], probes: list[LabeledEmbedding]) -> float:
    """Rank-1 re-identification rate of probes against the original gallery.

    Each probe retrieves its most cosine-similar gallery item (ties go to
    the lowest item_id, which makes the result order-free); a hit is a
    matching identity. Lower is better for anonymization.
    """
    if not gallery:
        raise MetricError("empty gallery")
    if not probes:
        raise MetricError("no probes")
    dims = {e.embedding.dim for e in gallery} | {e.embedding.dim for e in probes}
    if len(dims) > 1:
        raise MetricError(f"mixed embedding dimensions: {sorted(dims)}")

    hits = 0
    for probe in probes:
        # Per-pair dot products, not one matrix product: blocked BLAS kernels
        # round differently per row, which breaks exact-tie semantics between
        # byte-identical embeddings.
        sims = np.array(
            [np.dot(g.embedding.values, probe.embedding.values) for g in gallery]
        )
        best = sims.max()
        best_idx = min(
            (i for i in range(len(gallery)) if sims[i] == best),
            key=lambda i: gallery[i].item_id,
        )
        if gallery[best_idx].identity_id == probe.identity_id:
            hits += 1
    return hits / len(probes)


def angle_mae(pairs: list[tuple[tuple[float, float], tuple[float, float]]]) -> float:
    """Mean over pairs of (|d pitch| + |d yaw|) / 2, radians."""
    if not pairs:
        raise MetricError("no angle pairs")
    total = 0.0
    for (p0, y0), (p1, y1) in pairs:
        if not all(np.isfinite([p0, y0, p1, y1])):
            raise MetricError("non-finite angle")
        total += (abs(p0 - p1) + abs(y0 - y1)) / 2.0
    return total / len(pairs)


def pose_gaze_mae(
    pose_pairs: list[tuple[tuple[float, float], tuple[float, float]]],
    gaze_pairs: list[tuple[tuple[float, float], tuple[float, float]]] | None = None,
) -> tuple[float, float | None]:
    """Pose MAE over pitch/yaw pairs; gaze MAE when gaze pairs are supplied."""
    pose = angle_mae(pose_pairs)
    gaze = angle_mae(gaze_pairs) if gaze_pairs else None
    return pose, gaze


def expression_retention(pairs: list[tuple[str, str]]) -> float:
    """Fraction of pairs whose predominant expression label is retained."""
    if not pairs:
        raise MetricError("no expression pairs")
    hits = sum(1 for a, b in pairs if a.strip().lower() == b.strip().lower())
    return hits / len(pairs)


def temporal_consistency(frame_embeddings: list[Embedding]) -> float:
    """Mean cosine distance between consecutive frame embeddings."""
    if len(frame_embeddings) < 2:
        raise MetricError("need at least two frame embeddings")
    total = 0.0
    for a, b in zip(frame_embeddings, frame_embeddings[1:]):
        total += cosine_distance(a, b)
    return total / (len(frame_embeddings) - 1)


def attribute_stats(pairs: list[tuple[dict, dict]]) -> dict:
    """Attribute-preservation table: match percentages and age error.

    Label comparisons are case-insensitive; the age row is the mean and
    population standard deviation of |age_orig - age_anon|. Pairs missing
    a field are excluded from that row only.
    """
    if not pairs:
        raise MetricError("no attribute pairs")

    def pct(key):
        vals = [
            (str(o[key]).strip().lower(), str(a[key]).strip().lower())
            for o, a in pairs
            if o.get(key) is not None and a.get(key) is not None
        ]
        if not vals:
            return None
        return 100.0 * sum(1 for x, y in vals if x == y) / len(vals)

    ages = [
        abs(float(o["age"]) - float(a["age"]))
        for o, a in pairs
        if o.get("age") is not None and a.get("age") is not None
    ]
    return {
        "race_pct": pct("race"),
        "gender_pct": pct("gender"),
        "age_mean": float(np.mean(ages)) if ages else None,
        "age_std": float(np.std(ages)) if ages else None,
        "expression_pct": pct("emotion"),
    }


@dataclass
class EvalReport:
    """Metric results, renderable as the standard evaluation tables."""

    re_at_1: float | None = None
    pose_mae: float | None = None
    gaze_mae: float | None = None
    expression_retention: float | None = None
    temporal_consistency: float | None = None
    temporal_consistency_orig: float | None = None
    attributes: dict | None = None
    quality: dict | None = None
    counts: dict = field(default_factory=dict)
    angles_unit: str = ANGLES_UNIT

    def __post_init__(self):
        for name in ("re_at_1", "expression_retention"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        for name in ("temporal_consistency", "temporal_consistency_orig"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 2.0:
                raise ValueError(f"{name} = {v} outside [0, 2]")
        if self.counts:
            total = self.counts.get("total", 0)
            anon_fail = self.counts.get("anonymization_failures", 0)
            det_fail = self.counts.get("detection_failures", 0)
            success = self.counts.get("successes")
            if success is not None and success + anon_fail + det_fail != total:
                raise ValueError("counts do not add up to total")

    def to_dict(self) -> dict:
        return {
            "angles_unit": self.angles_unit,
            "re_at_1": self.re_at_1,
            "pose_mae": self.pose_mae,
            "gaze_mae": self.gaze_mae,
            "expression_retention": self.expression_retention,
            "temporal_consistency": self.temporal_consistency,
            "temporal_consistency_orig": self.temporal_consistency_orig,
            "attributes": self.attributes,
            "quality": self.quality,
            "counts": self.counts,
        }

    def to_markdown(self) -> str:
        """Render in the evaluation-table shapes (angles in radians)."""
        lines = [f"# Evaluation report (angles in {self.angles_unit})", ""]
        if self.re_at_1 is not None or self.quality:
            lines += ["## Identity and quality", "", "| Metric | Value |", "|---|---|"]
            if self.re_at_1 is not None:
                lines.append(f"| Re@1 (lower is better) | {self.re_at_1:.3f} |")
            for key, label in (
                ("orig_quality", "Quality (original)"),
                ("orig_aesthetics", "Aesthetics (original)"),
                ("anon_quality", "Quality (anonymized)"),
                ("anon_aesthetics", "Aesthetics (anonymized)"),
            ):
                if self.quality and self.quality.get(key) is not None:
                    lines.append(f"| {label} | {self.quality[key]:.3f} |")
            lines.append("")
        if self.pose_mae is not None or self.gaze_mae is not None:
            lines += ["## Pose and gaze preservation", "", "| Pose | Gaze |", "|---|---|"]
            pose = f"{self.pose_mae:.3f}" if self.pose_mae is not None else "-"
            gaze = f"{self.gaze_mae:.3f}" if self.gaze_mae is not None else "-"
            lines += [f"| {pose} | {gaze} |", ""]
        if self.temporal_consistency is not None:
            lines += [
                "## Temporal identity consistency",
                "",
                "| Original | Anonymized |",
                "|---|---|",
            ]
            orig = (
                f"{self.temporal_consistency_orig:.4f}"
                if self.temporal_consistency_orig is not None
                else "-"
            )
            lines += [f"| {orig} | {self.temporal_consistency:.4f} |", ""]
        if self.attributes or self.counts:
            lines += ["## Anonymization statistics and attribute preservation", ""]
            lines += ["| Metric | Value |", "|---|---|"]
            for key, label in (
                ("total", "Total images"),
                ("successes", "Successfully anonymized"),
                ("anonymization_failures", "Anonymization failures"),
                ("detection_failures", "Face detection failures"),
            ):
                if key in self.counts:
                    lines.append(f"| {label} | {self.counts[key]} |")
            a = self.attributes or {}
            if a.get("race_pct") is not None:
                lines.append(f"| Race (%) | {a['race_pct']:.1f} |")
            if a.get("gender_pct") is not None:
                lines.append(f"| Gender (%) | {a['gender_pct']:.1f} |")
            if a.get("age_mean") is not None:
                lines.append(f"| Age (mean ± std) | ({a['age_mean']:.2f}, {a['age_std']:.2f}) |")
            if a.get("expression_pct") is not None:
                lines.append(f"| Expression (%) | {a['expression_pct']:.1f} |")
            if self.expression_retention is not None:
                lines.append(
                    f"| Expression retention (fraction) | {self.expression_retention:.3f} |"
                )
            lines.append("")
        return "\n".join(lines)


def load_manifest(path: str | Path) -> list[dict]:
    """A manifest is a JSON array of per-item records keyed by item_id."""
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise MetricError(f"{path}: manifest must be a JSON array")
    for rec in records:
        if "item_id" not in rec:
            raise MetricError(f"{path}: every record needs an item_id")
    return records


def _paired(orig: list[dict], anon: list[dict]) -> list[tuple[dict, dict]]:
    anon_by_id = {rec["item_id"]: rec for rec in anon}
    pairs = []
    for rec in orig:
        other = anon_by_id.get(rec["item_id"])
        if other is not None:
            pairs.append((rec, other))
    if not pairs:
        raise MetricError("manifests share no item_ids")
    return pairs


def _embedding_of(rec: dict) -> Embedding:
    return Embedding.normalized(np.asarray(rec["embedding"], dtype=np.float64))


def evaluate(
    orig: list[dict], anon: list[dict], metrics: list[str]
) -> EvalReport:
    """Compute the requested metrics over a pair of manifests.

    Supported names: reid, pose, expr, temporal, attrs, quality.
    """
    known = {"reid", "pose", "expr", "temporal", "attrs", "quality"}
    unknown = set(metrics) - known
    if unknown:
        raise MetricError(f"unknown metrics: {sorted(unknown)}")
    pairs = _paired(orig, anon)
    report = EvalReport()

    if "reid" in metrics:
        gallery = [
            LabeledEmbedding(r["identity_id"], _embedding_of(r), r["item_id"])
            for r in orig
            if "embedding" in r and "identity_id" in r
        ]
        probes = [
            LabeledEmbedding(r["identity_id"], _embedding_of(r), r["item_id"])
            for r in anon
            if "embedding" in r and "identity_id" in r
        ]
        report.re_at_1 = reid_rank1(gallery, probes)

    if "pose" in metrics:
        pose_pairs = [
            ((o["pitch"], o["yaw"]), (a["pitch"], a["yaw"]))
            for o, a in pairs
            if all(k in o and k in a for k in ("pitch", "yaw"))
        ]
        gaze_pairs = [
            ((o["gaze_pitch"], o["gaze_yaw"]), (a["gaze_pitch"], a["gaze_yaw"]))
            for o, a in pairs
            if all(k in o and k in a for k in ("gaze_pitch", "gaze_yaw"))
        ]
        report.pose_mae, report.gaze_mae = pose_gaze_mae(pose_pairs, gaze_pairs)

    if "expr" in metrics:
        label_pairs = [
            (o["emotion"], a["emotion"])
            for o, a in pairs
            if o.get("emotion") is not None and a.get("emotion") is not None
        ]
        report.expression_retention = expression_retention(label_pairs)

    if "temporal" in metrics:
        def mean_tc(records):
            values = [
                temporal_consistency([Embedding.normalized(np.asarray(e)) for e in r["frame_embeddings"]])
                for r in records
                if r.get("frame_embeddings")
            ]
            return float(np.mean(values)) if values else None

        report.temporal_consistency = mean_tc(anon)
        report.temporal_consistency_orig = mean_tc(orig)

    if "attrs" in metrics:
        report.attributes = attribute_stats([(o, a) for o, a in pairs])

    if "quality" in metrics:
        def mean_of(records, key):
            vals = [float(r[key]) for r in records if r.get(key) is not None]
            return float(np.mean(vals)) if vals else None

        report.quality = {
            "orig_quality": mean_of(orig, "quality"),
            "orig_aesthetics": mean_of(orig, "aesthetics"),
            "anon_quality": mean_of(anon, "quality"),
            "anon_aesthetics": mean_of(anon, "aesthetics"),
        }

    total = len(anon)
    anon_failures = sum(1 for r in anon if r.get("anonymization_failed"))
    det_failures = sum(1 for r in anon if r.get("detection_failed"))
    report.counts = {
        "total": total,
        "successes": total - anon_failures - det_failures,
        "anonymization_failures": anon_failures,
        "detection_failures": det_failures,
    }
    return report
