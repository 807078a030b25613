"""HTTP client for the v1 backend protocol.

Transport failures (connect errors, timeouts) are retried a configured
number of times; a response with status=error is never retried, keeping
at-most-once semantics for semantic failures. Each call is independent,
so one client may be shared across worker threads.
"""

from __future__ import annotations

import logging

import httpx
import numpy as np

from ..core import AttributeSet, Embedding, InpaintParams
from ..errors import BackendError, BackendTimeout, ProtocolError
from .protocol import (
    AnimatePayload,
    AttributesPayload,
    BackendRequest,
    BackendResponse,
    ControlStrengthsModel,
    DetectPayload,
    EmbedPayload,
    FaceBox,
    InpaintParamsModel,
    InpaintPayload,
    LandmarksPayload,
    PromptPairModel,
    decode_image,
    encode_image,
    make_request,
    parse_response,
)

logger = logging.getLogger(__name__)


class BackendClient:
    """Typed access to one backend service endpoint."""

    def __init__(
        self,
        base_url: str | None = None,
        *,
        timeout: float = 120.0,
        transport_retries: int = 2,
        http_client: httpx.Client | None = None,
    ):
        if http_client is None:
            if not base_url:
                raise ValueError("base_url is required without an injected http client")
            http_client = httpx.Client(base_url=base_url, timeout=timeout)
        self._http = http_client
        self._transport_retries = transport_retries

    def close(self) -> None:
        self._http.close()

    def call(self, req: BackendRequest) -> BackendResponse:
        """One protocol round trip; raises on transport or protocol faults."""
        body = req.model_dump(mode="json")
        url = f"/v1/{req.op}"
        attempts = self._transport_retries + 1
        last_exc: Exception | None = None
        for attempt in range(attempts):
            try:
                http_resp = self._http.post(url, json=body)
            except httpx.TimeoutException as exc:
                last_exc = exc
                logger.warning("backend %s timed out (attempt %d/%d)", req.op, attempt + 1, attempts)
                continue
            except httpx.TransportError as exc:
                last_exc = exc
                logger.warning(
                    "backend %s transport failure (attempt %d/%d): %s",
                    req.op,
                    attempt + 1,
                    attempts,
                    exc,
                )
                continue
            if http_resp.status_code != 200:
                raise BackendError(f"{req.op}: backend replied HTTP {http_resp.status_code}")
            resp = parse_response(http_resp.content)
            if resp.request_id != req.request_id:
                raise ProtocolError(
                    f"{req.op}: request_id mismatch "
                    f"(sent {req.request_id}, got {resp.request_id})"
                )
            if resp.status == "error":
                raise BackendError(f"{req.op}: {resp.error_message}")
            if resp.result is None:
                raise ProtocolError(f"{req.op}: ok response without a result")
            return resp
        if isinstance(last_exc, httpx.TimeoutException):
            raise BackendTimeout(f"{req.op}: timed out after {attempts} attempts") from last_exc
        raise BackendError(f"{req.op}: transport failed after {attempts} attempts: {last_exc}")

    # Typed per-op helpers -------------------------------------------------

    def detect(self, image: np.ndarray) -> list[FaceBox]:
        req = make_request("detect", DetectPayload(image=encode_image(image)))
        result = self.call(req).typed_result("detect")
        return sorted(result.faces, key=lambda b: b.area, reverse=True)

    def landmarks(self, image: np.ndarray, box: FaceBox) -> np.ndarray:
        req = make_request("landmarks", LandmarksPayload(image=encode_image(image), box=box))
        result = self.call(req).typed_result("landmarks")
        return np.asarray(result.points, dtype=np.float64)

    def embed(self, image: np.ndarray, box: FaceBox | None = None) -> Embedding:
        req = make_request("embed", EmbedPayload(image=encode_image(image), box=box))
        result = self.call(req).typed_result("embed")
        # Normalized on ingestion regardless of what the backend returned.
        return Embedding.normalized(np.asarray(result.embedding))

    def attributes(self, image: np.ndarray, box: FaceBox | None = None) -> AttributeSet:
        req = make_request("attributes", AttributesPayload(image=encode_image(image), box=box))
        result = self.call(req).typed_result("attributes")
        return AttributeSet(
            age=result.age,
            gender=result.gender,
            race=result.race,
            emotion=result.emotion,
            confidences={k: min(max(v, 0.0), 1.0) for k, v in result.confidences.items()},
        )

    def inpaint(
        self, image: np.ndarray, face_box: FaceBox, params: InpaintParams
    ) -> tuple[np.ndarray, int, int]:
        payload = InpaintPayload(
            image=encode_image(image),
            face_box=face_box,
            prompt=PromptPairModel(positive=params.prompt_pair[0], negative=params.prompt_pair[1]),
            params=InpaintParamsModel(
                steps=params.steps,
                guidance=params.guidance,
                control_strengths=ControlStrengthsModel(**dict(params.control_strengths)),
                seed=params.seed,
            ),
        )
        result = self.call(make_request("inpaint", payload)).typed_result("inpaint")
        return decode_image(result.image), result.steps_used, result.seed_used

    def animate(self, source: np.ndarray, driving: list[np.ndarray]) -> list[np.ndarray]:
        payload = AnimatePayload(
            source=encode_image(source), driving=[encode_image(f) for f in driving]
        )
        result = self.call(make_request("animate", payload)).typed_result("animate")
        if len(result.frames) != len(driving):
            raise ProtocolError(
                f"animate returned {len(result.frames)} frames for {len(driving)} driving frames"
            )
        return [decode_image(f) for f in result.frames]

    def health(self) -> dict:
        try:
            resp = self._http.get("/v1/health")
        except httpx.TransportError as exc:
            raise BackendError(f"health check failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"health endpoint replied HTTP {resp.status_code}")
        return resp.json()


def mock_backend_client() -> BackendClient:
    """Client bound to the in-process mock FastAPI app (no sockets)."""
    from fastapi.testclient import TestClient

    from .mock_app import mock_app

    return BackendClient(http_client=TestClient(mock_app))
