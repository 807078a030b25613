"""Request/response models for the engine service endpoints."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(_Model):
    status: str
    version: str
    protocol: str


class ScenesRequest(_Model):
    video_path: str
    scene_threshold: float | None = None
    merge_tolerance: float | None = None


class SegmentModel(_Model):
    segment_id: int
    scene_id: int
    start_frame: int
    end_frame: int
    mean_rgb: tuple[float, float, float]


class ScenesResponse(_Model):
    video_path: str
    frame_count: int
    fps: str
    threshold: float
    segments: list[SegmentModel]


class PoseRequest(_Model):
    points: list[tuple[float, float]] = Field(min_length=68, max_length=68)
    width: int = Field(gt=0)
    height: int = Field(gt=0)


class PoseResponse(_Model):
    pitch: float
    yaw: float
    roll: float
    reprojection_rmse: float
    rotation: tuple[float, float, float]
    translation: tuple[float, float, float]


class EvaluateRequest(_Model):
    orig: list[dict]
    anon: list[dict]
    metrics: list[str]


class AnonymizeRequest(_Model):
    """Paths are resolved on the engine host; the service wraps local runs."""

    video_path: str
    output_path: str
    config: dict | None = None
    run_seed: int | None = None
    mock_backends: bool = False
    workers: int = Field(default=1, ge=1)


class VerificationModel(_Model):
    distance: float
    attempts: int
    accepted: bool
    final_steps: int
    final_guidance: float
    seed: int


class SceneRowModel(_Model):
    segment_id: int
    scene_id: int
    start_frame: int
    end_frame: int
    has_face: bool
    frontal_frame: int | None
    cluster_id: int | None
    attributes: dict | None
    verification: VerificationModel | None
    flags: list[str]
    notes: list[str]
    error: str | None
    prompt: str | None = None


class ClusterModel(_Model):
    cluster_id: int
    scene_ids: list[int]
    anon_seed: int


class RunReportModel(_Model):
    """Published schema of the anonymize run report (report_version 1)."""

    report_version: int
    engine_version: str
    video: str
    output: str
    run_seed: int
    media: dict
    clusters: list[ClusterModel]
    scenes: list[SceneRowModel]
    totals: dict
    stage_seconds: dict


class EvalReportModel(_Model):
    """Published schema of the evaluation report."""

    angles_unit: str
    re_at_1: float | None
    pose_mae: float | None
    gaze_mae: float | None
    expression_retention: float | None
    temporal_consistency: float | None
    temporal_consistency_orig: float | None
    attributes: dict | None
    quality: dict | None
    counts: dict


class PoseCliOutput(_Model):
    """Published schema of `pose --json`."""

    pitch: float
    yaw: float
    roll: float
    reprojection_rmse: float


class ErrorResponse(_Model):
    detail: str
