"""v1 wire protocol to the neural backends.

JSON over HTTP POST, one endpoint per op (/v1/detect ... /v1/animate).
Images travel as base64 PNG. Request payloads and response results are
typed per op; the envelope carries the op name, a unique request id, and
either a result or an error message.

The canonical JSON form (sorted keys, compact separators, trailing
newline) is what golden files store; it must stay byte-stable across
releases.
"""

from __future__ import annotations

import base64
import io
import json
import uuid
from typing import Literal

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ProtocolError

PROTOCOL_VERSION = "v1"

OpName = Literal["detect", "landmarks", "embed", "attributes", "inpaint", "animate"]
OPS: tuple[str, ...] = ("detect", "landmarks", "embed", "attributes", "inpaint", "animate")


def encode_image(pixels: np.ndarray) -> str:
    """RGB uint8 array -> base64 PNG string (deterministic encoding)."""
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 RGB array, got shape {arr.shape}")
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG", optimize=False)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(data: str) -> np.ndarray:
    """base64 PNG string -> RGB uint8 array."""
    try:
        raw = base64.b64decode(data, validate=True)
        img = Image.open(io.BytesIO(raw))
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ProtocolError(f"undecodable image payload: {exc}") from exc


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FaceBox(_Model):
    """Axis-aligned face region in pixel coordinates."""

    x: int
    y: int
    w: int = Field(gt=0)
    h: int = Field(gt=0)
    score: float = 1.0

    @property
    def area(self) -> int:
        return self.w * self.h


class DetectPayload(_Model):
    image: str


class DetectResult(_Model):
    faces: list[FaceBox]


class LandmarksPayload(_Model):
    image: str
    box: FaceBox


class LandmarksResult(_Model):
    points: list[tuple[float, float]] = Field(min_length=68, max_length=68)


class EmbedPayload(_Model):
    image: str
    box: FaceBox | None = None


class EmbedResult(_Model):
    embedding: list[float]
    dim: int


class AttributesPayload(_Model):
    image: str
    box: FaceBox | None = None


class AttributesResult(_Model):
    age: float
    gender: str
    race: str
    emotion: str
    confidences: dict[str, float] = Field(default_factory=dict)


class PromptPairModel(_Model):
    positive: str
    negative: str


class ControlStrengthsModel(_Model):
    mask: float = Field(ge=0.0, le=1.0)
    lineart: float = Field(ge=0.0, le=1.0)
    pose: float = Field(ge=0.0, le=1.0)


class InpaintParamsModel(_Model):
    steps: int = Field(ge=1, le=150)
    guidance: float = Field(gt=0.0)
    control_strengths: ControlStrengthsModel
    # Wire seeds stay within the IEEE-754 safe-integer range so JSON
    # consumers in any language parse them exactly.
    seed: int = Field(ge=0, lt=2**53)


class InpaintPayload(_Model):
    """The backend derives its mask and control maps from face_box."""

    image: str
    face_box: FaceBox
    prompt: PromptPairModel
    params: InpaintParamsModel


class InpaintResult(_Model):
    image: str
    steps_used: int
    seed_used: int


class AnimatePayload(_Model):
    """motion_code is an opaque blob owned by the animate backend."""

    source: str
    driving: list[str] = Field(min_length=1)
    motion_code: str | None = None


class AnimateResult(_Model):
    frames: list[str]
    motion_code: str | None = None


PAYLOAD_MODELS: dict[str, type[_Model]] = {
    "detect": DetectPayload,
    "landmarks": LandmarksPayload,
    "embed": EmbedPayload,
    "attributes": AttributesPayload,
    "inpaint": InpaintPayload,
    "animate": AnimatePayload,
}

RESULT_MODELS: dict[str, type[_Model]] = {
    "detect": DetectResult,
    "landmarks": LandmarksResult,
    "embed": EmbedResult,
    "attributes": AttributesResult,
    "inpaint": InpaintResult,
    "animate": AnimateResult,
}


class BackendRequest(_Model):
    op: OpName
    request_id: str
    payload: dict

    def typed_payload(self) -> _Model:
        try:
            return PAYLOAD_MODELS[self.op].model_validate(self.payload)
        except ValidationError as exc:
            raise ProtocolError(f"invalid {self.op} payload: {exc}") from exc


class BackendResponse(_Model):
    request_id: str
    status: Literal["ok", "error"]
    result: dict | None = None
    error_message: str | None = None

    def typed_result(self, op: str) -> _Model:
        if self.status != "ok" or self.result is None:
            raise ProtocolError("typed_result called on a non-ok response")
        try:
            return RESULT_MODELS[op].model_validate(self.result)
        except ValidationError as exc:
            raise ProtocolError(f"invalid {op} result: {exc}") from exc


def make_request(op: str, payload: _Model, request_id: str | None = None) -> BackendRequest:
    if op not in OPS:
        raise ValueError(f"unknown op {op!r}")
    if not isinstance(payload, PAYLOAD_MODELS[op]):
        raise ValueError(f"payload type {type(payload).__name__} does not match op {op!r}")
    return BackendRequest(
        op=op,
        request_id=request_id or str(uuid.uuid4()),
        payload=payload.model_dump(mode="json"),
    )


def ok_response(request_id: str, result: _Model) -> BackendResponse:
    return BackendResponse(
        request_id=request_id, status="ok", result=result.model_dump(mode="json")
    )


def error_response(request_id: str, message: str) -> BackendResponse:
    return BackendResponse(request_id=request_id, status="error", error_message=message)


def canonical_json(model: BaseModel) -> bytes:
    """Stable byte form used for golden files."""
    doc = model.model_dump(mode="json")
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode(
        "utf-8"
    )


def parse_request(data: bytes | str) -> BackendRequest:
    try:
        return BackendRequest.model_validate_json(data)
    except ValidationError as exc:
        raise ProtocolError(f"malformed request: {exc}") from exc


def parse_response(data: bytes | str) -> BackendResponse:
    try:
        return BackendResponse.model_validate_json(data)
    except ValidationError as exc:
        raise ProtocolError(f"malformed response: {exc}") from exc
