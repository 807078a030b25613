"""Engine service: the pipeline's operations behind HTTP endpoints.

Wraps the core package for long-running, multi-client use; the CLI calls
the same underlying functions directly. Media and config faults map to
4xx responses, backend faults to 502.
"""

from __future__ import annotations

import secrets

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import PROTOCOL_VERSION, __version__
from ..backends.client import BackendClient, mock_backend_client
from ..core import validate_config
from ..errors import BackendError, ConfigError, MediaError, PoseSolveError
from ..facegeom import CameraModel, LandmarkSet, select_pnp_points, solve_pnp
from ..metrics import MetricError, evaluate
from ..scenedetect import detect_scenes
from ..videoio import decode_frames, probe
from .models import (
    AnonymizeRequest,
    EvalReportModel,
    EvaluateRequest,
    HealthResponse,
    PoseRequest,
    PoseResponse,
    RunReportModel,
    ScenesRequest,
    ScenesResponse,
    SegmentModel,
)


def create_app() -> FastAPI:
    app = FastAPI(title="anonpipe engine", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__, protocol=PROTOCOL_VERSION)

    @app.post("/scenes", response_model=ScenesResponse)
    def scenes(req: ScenesRequest) -> ScenesResponse:
        try:
            cfg = validate_config({})
            threshold = req.scene_threshold if req.scene_threshold is not None else cfg.scene_threshold
            tolerance = req.merge_tolerance if req.merge_tolerance is not None else cfg.merge_tolerance
            info = probe(req.video_path)
            frames = decode_frames(req.video_path)
            found = detect_scenes(frames, threshold, tolerance)
        except MediaError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return ScenesResponse(
            video_path=req.video_path,
            frame_count=info.frame_count,
            fps=str(info.fps),
            threshold=threshold,
            segments=[
                SegmentModel(
                    segment_id=s.segment_id,
                    scene_id=s.scene_id,
                    start_frame=s.start_frame,
                    end_frame=s.end_frame,
                    mean_rgb=s.mean_rgb,
                )
                for s in found
            ],
        )

    @app.post("/pose", response_model=PoseResponse)
    def pose(req: PoseRequest) -> PoseResponse:
        lm = LandmarkSet(points=np.asarray(req.points, dtype=np.float64))
        cam = CameraModel.for_image(req.width, req.height)
        try:
            result = solve_pnp(select_pnp_points(lm), cam=cam)
        except PoseSolveError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return PoseResponse(
            pitch=result.pitch,
            yaw=result.yaw,
            roll=result.roll,
            reprojection_rmse=result.reprojection_rmse,
            rotation=result.rotation,
            translation=result.translation,
        )

    @app.post("/evaluate", response_model=EvalReportModel)
    def evaluate_endpoint(req: EvaluateRequest) -> dict:
        try:
            return evaluate(req.orig, req.anon, req.metrics).to_dict()
        except MetricError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/anonymize", response_model=RunReportModel)
    def anonymize(req: AnonymizeRequest) -> dict:
        from ..orchestrator import run_pipeline

        try:
            cfg = validate_config(req.config)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        run_seed = req.run_seed if req.run_seed is not None else secrets.randbits(63)
        if req.mock_backends:
            client: BackendClient = mock_backend_client()
        else:
            if not cfg.backend_url:
                raise HTTPException(
                    status_code=422,
                    detail="no backend_url configured; pass config.backend_url or mock_backends",
                )
            client = BackendClient(
                cfg.backend_url,
                timeout=cfg.backend_timeout,
                transport_retries=cfg.backend_transport_retries,
            )
        try:
            report = run_pipeline(
                req.video_path,
                req.output_path,
                cfg,
                client,
                run_seed=run_seed,
                workers=req.workers,
            )
        except MediaError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except BackendError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return report.to_dict()

    return app
