"""End-to-end per-video anonymization flow.

Execution order per video: shot/scene analysis, per-segment face detection
and frontal-frame selection, per-scene identity clustering, cluster-level
attribute recognition and prompt construction, the inpaint/verify retry
loop, motion transfer onto every segment frame, and lossless reassembly.

A segment that fails any backend stage degrades to passthrough with the
failure recorded in the run report; the whole video aborts only on media
errors. Scenes sharing an identity cluster always inpaint with the same
seed and the same positive prompt, so one synthetic identity persists
across a video.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from .backends.client import BackendClient
from .backends.protocol import FaceBox
from .core import AttributeSet, FrameRef, PipelineConfig, Scene
from .errors import (
    BackendError,
    NoFrontalFrameError,
    PoseSolveError,
    ProtocolError,
    SceneError,
)
from .facegeom import CameraModel, LandmarkSet, landmark_coverage, select_frontal, select_pnp_points, solve_pnp
from .identity import IdentityCluster, VerificationOutcome, cluster_scenes, retry_schedule, verify_anonymity
from .scenedetect import detect_scenes
from .videoio import SceneOutput, decode_frames, probe, reassemble

logger = logging.getLogger(__name__)

REPORT_VERSION = 1

NEGATIVE_PROMPT = (
    "distortions, unrealistic textures, cartoon-like features, deformed anatomy, "
    "asymmetric face, blurry, oversaturated, watermark, text"
)

# At most this many evenly spaced frames per segment are inspected when
# hunting for the frontal frame.
FRONTAL_CANDIDATE_LIMIT = 12

FLAG_NO_FACE = "no_face"
FLAG_NO_FRONTAL = "no_frontal_frame"
FLAG_UNVERIFIED = "anonymity_unverified"


@dataclass(frozen=True)
class PromptPair:
    """Positive prompt built from attributes; fixed negative template."""

    positive: str
    negative: str = NEGATIVE_PROMPT

    def __post_init__(self):
        if not self.positive.strip():
            raise ValueError("positive prompt must be non-empty")
        if self.negative != NEGATIVE_PROMPT:
            raise ValueError("negative prompt is the fixed artifact-wide template")


def age_band(age: float) -> str:
    if age < 13:
        return "child"
    if age < 30:
        return "young"
    if age < 55:
        return "middle-aged"
    return "elderly"


def build_prompt(attrs: AttributeSet) -> PromptPair:
    """Attribute-conditioned positive prompt in the fixed template.

    Missing attributes fall back to neutral wording: unknown age reads as
    middle-aged, unknown gender as 'person', unknown race is omitted, and
    unknown emotion defaults to neutral.
    """
    band = age_band(attrs.age if attrs.age is not None else 35.0)
    subject = " ".join(p for p in (band, attrs.race or "", attrs.gender or "person") if p)
    emotion = attrs.emotion or "neutral"
    return PromptPair(
        positive=f"A photorealistic portrait of a {subject}, with a {emotion} expression."
    )


def detect_faces(frame: np.ndarray, client: BackendClient) -> list[FaceBox]:
    """Face boxes sorted largest first; backend failures become SceneError."""
    try:
        return client.detect(frame)
    except (BackendError, ProtocolError) as exc:
        raise SceneError(f"face detection failed: {exc}") from exc


@dataclass
class SegmentPlan:
    """Stage-2 outcome for one segment: where (and whether) to anonymize."""

    scene: Scene
    face_box: FaceBox | None = None
    flags: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    error: str | None = None
    verification: VerificationOutcome | None = None
    cluster_id: int | None = None
    attributes: AttributeSet | None = None
    prompt: PromptPair | None = None


def _candidate_indices(scene: Scene) -> list[int]:
    n = scene.frame_count
    stride = max(1, -(-n // FRONTAL_CANDIDATE_LIMIT))
    return list(range(scene.start_frame, scene.end_frame + 1, stride))


def plan_segment(
    scene: Scene, frames: Sequence[FrameRef], client: BackendClient, cfg: PipelineConfig
) -> SegmentPlan:
    """Find the segment's frontal frame, or flag why it has none."""
    plan = SegmentPlan(scene=scene)
    cam = CameraModel.for_image(frames[0].width, frames[0].height)
    candidates: list[tuple[int, object, float]] = []
    boxes: dict[int, FaceBox] = {}
    any_face = False
    for idx in _candidate_indices(scene):
        pixels = frames[idx].pixels
        found = detect_faces(pixels, client)
        if not found:
            continue
        any_face = True
        if len(found) > 1:
            plan.notes.append(
                f"frame {idx}: {len(found) - 1} smaller face(s) ignored (single-person scope)"
            )
        box = found[0]
        points = client.landmarks(pixels, box)
        lm = LandmarkSet(points=points)
        coverage = landmark_coverage(lm, frames[idx].width, frames[idx].height)
        try:
            pose = solve_pnp(select_pnp_points(lm), cam=cam)
        except PoseSolveError as exc:
            plan.notes.append(f"frame {idx}: pose solve failed ({exc})")
            continue
        candidates.append((idx, pose, coverage))
        boxes[idx] = box

    if not any_face:
        plan.flags.append(FLAG_NO_FACE)
        return plan
    try:
        frontal = select_frontal(candidates, cfg.landmark_coverage_min)
    except NoFrontalFrameError:
        plan.flags.append(FLAG_NO_FRONTAL)
        return plan
    plan.scene = scene.with_face(frontal)
    plan.face_box = boxes[frontal]
    return plan


def anonymize_scene(
    scene: Scene,
    frames: Sequence[FrameRef],
    cluster: IdentityCluster,
    prompt: PromptPair,
    client: BackendClient,
    cfg: PipelineConfig,
    face_box: FaceBox | None = None,
) -> tuple[SceneOutput, VerificationOutcome]:
    """Inpaint the frontal frame, verify anonymity, animate the segment.

    Precondition: the scene has a face and a selected frontal frame. The
    cluster supplies the seed and the prompt, so sibling scenes converge
    on one synthetic identity. On verification failure the inpaint is
    re-dispatched on the retry schedule; after max_retries the last
    attempt ships flagged as unverified.
    """
    if not scene.has_face or scene.frontal_frame is None:
        raise SceneError(f"segment {scene.segment_id}: no frontal frame selected")
    frontal = frames[scene.frontal_frame].pixels
    try:
        if face_box is None:
            found = detect_faces(frontal, client)
            if not found:
                raise SceneError(f"segment {scene.segment_id}: face vanished at frontal frame")
            face_box = found[0]
        orig_emb = client.embed(frontal, face_box)
        base = replace(
            cfg.inpaint,
            seed=cluster.anon_seed,
            prompt_pair=(prompt.positive, prompt.negative),
        )
        anon_frame = None
        accepted = False
        distance = 0.0
        params = base
        attempts = 0
        for attempt in range(cfg.max_retries + 1):
            params = retry_schedule(attempt, base, cfg.retry, cfg.max_retries)
            anon_frame, _, _ = client.inpaint(frontal, face_box, params)
            anon_emb = client.embed(anon_frame, face_box)
            accepted, distance = verify_anonymity(
                orig_emb, anon_emb, cfg.anonymity_distance_threshold
            )
            attempts = attempt + 1
            if accepted:
                break
            logger.info(
                "segment %d attempt %d leaked (distance %.3f < %.3f); retrying",
                scene.segment_id,
                attempts,
                distance,
                cfg.anonymity_distance_threshold,
            )
        outcome = VerificationOutcome(
            distance=distance, accepted=accepted, attempts=attempts, final_params=params
        )
        driving = [frames[i].pixels for i in range(scene.start_frame, scene.end_frame + 1)]
        animated = client.animate(anon_frame, driving)
    except (BackendError, ProtocolError) as exc:
        raise SceneError(f"segment {scene.segment_id}: {exc}") from exc
    out_frames = tuple(
        FrameRef(
            frame_index=frames[scene.start_frame + k].frame_index,
            timestamp=frames[scene.start_frame + k].timestamp,
            width=frames[scene.start_frame + k].width,
            height=frames[scene.start_frame + k].height,
            pixels=animated[k],
        )
        for k in range(len(animated))
    )
    return SceneOutput(segment_id=scene.segment_id, frames=out_frames), outcome


def _passthrough_output(scene: Scene, frames: Sequence[FrameRef]) -> SceneOutput:
    return SceneOutput(
        segment_id=scene.segment_id,
        frames=tuple(frames[scene.start_frame : scene.end_frame + 1]),
        passthrough=True,
    )


@dataclass
class RunReport:
    """Per-run record written alongside the output video."""

    video: str
    output: str
    run_seed: int
    media: dict
    scenes: list[dict]
    clusters: list[dict]
    totals: dict
    stage_seconds: dict
    report_version: int = REPORT_VERSION
    engine_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "report_version": self.report_version,
            "engine_version": self.engine_version,
            "video": self.video,
            "output": self.output,
            "run_seed": self.run_seed,
            "media": self.media,
            "clusters": self.clusters,
            "scenes": self.scenes,
            "totals": self.totals,
            "stage_seconds": self.stage_seconds,
        }

    @property
    def degraded(self) -> bool:
        """True when any scene shipped less anonymized than requested.

        no_face is informational (face-free scenes pass through by
        design); the degradation flags and per-scene errors mean a face
        may have leaked.
        """
        bad = {FLAG_UNVERIFIED, FLAG_NO_FRONTAL}
        return any(set(s["flags"]) & bad or s.get("error") for s in self.scenes)


class _StageClock:
    def __init__(self):
        self.seconds: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.seconds[name] = round(now - self._t, 6)
        self._t = now


def run_pipeline(
    video_path: str,
    out_path: str,
    cfg: PipelineConfig,
    client: BackendClient,
    run_seed: int = 0,
    workers: int = 1,
) -> RunReport:
    """Stages 1-7 for one video; returns the run report.

    Identical inputs, config, run_seed, and backends give byte-identical
    output frames and equal reports up to the wall-clock fields.
    """
    clock = _StageClock()
    info = probe(video_path)
    frames = decode_frames(video_path)
    clock.lap("decode")

    scenes = detect_scenes(frames, cfg.scene_threshold, cfg.merge_tolerance)
    clock.lap("scene_detection")

    plans = []
    for scene in scenes:
        try:
            plans.append(plan_segment(scene, frames, client, cfg))
        except (SceneError, BackendError, ProtocolError) as exc:
            logger.warning("segment %d planning failed: %s", scene.segment_id, exc)
            failed = SegmentPlan(scene=scene)
            failed.error = str(exc)
            plans.append(failed)
    clock.lap("frontal_selection")

    # One representative embedding per scene_id: its first face-bearing
    # segment whose embedding call succeeds.
    reps = {}
    rep_plans = {}
    for plan in plans:
        sid = plan.scene.scene_id
        if plan.scene.has_face and sid not in reps:
            frontal = frames[plan.scene.frontal_frame].pixels
            try:
                reps[sid] = client.embed(frontal, plan.face_box)
                rep_plans[sid] = plan
            except (BackendError, ProtocolError) as exc:
                plan.notes.append(f"identity embedding failed: {exc}")
    clusters = cluster_scenes(reps, cfg.cluster_distance_threshold, run_seed=run_seed)
    cluster_of_scene = {
        sid: cluster for cluster in clusters for sid in cluster.scene_ids
    }
    clock.lap("identity_clustering")

    # Attributes and prompt are resolved once per cluster, on the frontal
    # frame of the cluster's first scene, and reused by every member
    # segment (parallel attribute/control branches of the inpaint stage).
    cluster_attrs: dict[int, AttributeSet] = {}
    cluster_prompts: dict[int, PromptPair] = {}
    for cluster in clusters:
        rep = rep_plans[min(cluster.scene_ids)]
        try:
            attrs = client.attributes(frames[rep.scene.frontal_frame].pixels, rep.face_box)
        except (BackendError, ProtocolError) as exc:
            logger.warning("cluster %d attributes failed: %s", cluster.cluster_id, exc)
            continue
        cluster_attrs[cluster.cluster_id] = attrs
        cluster_prompts[cluster.cluster_id] = build_prompt(attrs)
    clock.lap("attributes")

    for plan in plans:
        if not plan.scene.has_face:
            continue
        cluster = cluster_of_scene.get(plan.scene.scene_id)
        if cluster is None or cluster.cluster_id not in cluster_prompts:
            plan.error = plan.error or "identity stage failed for this scene"
            plan.scene = Scene(
                segment_id=plan.scene.segment_id,
                scene_id=plan.scene.scene_id,
                start_frame=plan.scene.start_frame,
                end_frame=plan.scene.end_frame,
                mean_rgb=plan.scene.mean_rgb,
            )
            continue
        plan.cluster_id = cluster.cluster_id
        plan.attributes = cluster_attrs[cluster.cluster_id]
        plan.prompt = cluster_prompts[cluster.cluster_id]

    def process(plan: SegmentPlan) -> SceneOutput:
        if not plan.scene.has_face:
            return _passthrough_output(plan.scene, frames)
        cluster = cluster_of_scene[plan.scene.scene_id]
        try:
            output, outcome = anonymize_scene(
                plan.scene, frames, cluster, plan.prompt, client, cfg, face_box=plan.face_box
            )
        except SceneError as exc:
            logger.warning("segment %d degraded to passthrough: %s", plan.scene.segment_id, exc)
            plan.error = str(exc)
            return _passthrough_output(plan.scene, frames)
        plan.verification = outcome
        if not outcome.accepted:
            plan.flags.append(FLAG_UNVERIFIED)
        return output

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(process, plans))
    else:
        outputs = [process(plan) for plan in plans]
    clock.lap("anonymization")

    reassemble(outputs, video_path, out_path)
    clock.lap("reassembly")

    scene_rows = []
    for plan in plans:
        row = {
            "segment_id": plan.scene.segment_id,
            "scene_id": plan.scene.scene_id,
            "start_frame": plan.scene.start_frame,
            "end_frame": plan.scene.end_frame,
            "has_face": plan.scene.has_face,
            "frontal_frame": plan.scene.frontal_frame,
            "cluster_id": plan.cluster_id,
            "attributes": None,
            "verification": None,
            "flags": sorted(plan.flags),
            "notes": plan.notes,
            "error": plan.error,
        }
        if plan.attributes is not None:
            row["attributes"] = {
                "age": plan.attributes.age,
                "gender": plan.attributes.gender,
                "race": plan.attributes.race,
                "emotion": plan.attributes.emotion,
            }
        if plan.prompt is not None:
            row["prompt"] = plan.prompt.positive
        if plan.verification is not None:
            row["verification"] = {
                "distance": plan.verification.distance,
                "attempts": plan.verification.attempts,
                "accepted": plan.verification.accepted,
                "final_steps": plan.verification.final_params.steps,
                "final_guidance": plan.verification.final_params.guidance,
                "seed": plan.verification.final_params.seed,
            }
        scene_rows.append(row)

    verified = sum(
        1 for p in plans if p.verification is not None and p.verification.accepted
    )
    totals = {
        "frames": info.frame_count,
        "segments": len(plans),
        "scenes": len({p.scene.scene_id for p in plans}),
        "face_segments": sum(1 for p in plans if p.scene.has_face),
        "verified_segments": verified,
        "flagged_segments": sum(1 for p in plans if p.flags),
        "errored_segments": sum(1 for p in plans if p.error),
    }
    report = RunReport(
        video=str(video_path),
        output=str(out_path),
        run_seed=run_seed,
        media={
            "frame_count": info.frame_count,
            "fps": str(info.fps),
            "duration": info.duration,
            "width": info.width,
            "height": info.height,
            "has_audio": info.has_audio,
        },
        scenes=scene_rows,
        clusters=[
            {
                "cluster_id": c.cluster_id,
                "scene_ids": sorted(c.scene_ids),
                "anon_seed": c.anon_seed,
            }
            for c in clusters
        ],
        totals=totals,
        stage_seconds=clock.seconds,
    )
    logger.info("pipeline done: %s", totals)
    return report
