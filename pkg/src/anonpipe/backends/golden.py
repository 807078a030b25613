"""Golden request/response examples for the v1 protocol.

One request and one response file per op, stored in canonical JSON. The
requests double as the cross-language conformance inputs: any backend
implementation must accept them and answer with schema-valid responses.
Request ids are fixed so the files are byte-stable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mock import FACE_FILL, HANDLERS
from .protocol import (
    OPS,
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
    canonical_json,
    encode_image,
    make_request,
    ok_response,
)


def _golden_frame() -> np.ndarray:
    """Deterministic 48x64 frame with a marker-tone face at (24, 10)."""
    frame = np.empty((48, 64, 3), np.uint8)
    frame[:] = (16, 48, 96)
    frame[10:42, 24:48] = FACE_FILL
    frame[18:21, 30:33] = (40, 30, 30)
    frame[18:21, 39:42] = (40, 30, 30)
    frame[34:37, 32:40] = (90, 40, 40)
    return frame


GOLDEN_BOX = FaceBox(x=24, y=10, w=24, h=32, score=1.0)


def build_golden_requests() -> dict[str, BackendRequest]:
    frame = _golden_frame()
    image = encode_image(frame)
    driving = [encode_image(np.roll(frame, i, axis=1)) for i in range(3)]
    payloads = {
        "detect": DetectPayload(image=image),
        "landmarks": LandmarksPayload(image=image, box=GOLDEN_BOX),
        "embed": EmbedPayload(image=image, box=GOLDEN_BOX),
        "attributes": AttributesPayload(image=image, box=GOLDEN_BOX),
        "inpaint": InpaintPayload(
            image=image,
            face_box=GOLDEN_BOX,
            prompt=PromptPairModel(
                positive="A photorealistic portrait of a middle-aged asian female, "
                "with a neutral expression.",
                negative="distortions, unrealistic textures, cartoon-like features",
            ),
            params=InpaintParamsModel(
                steps=35,
                guidance=12.0,
                control_strengths=ControlStrengthsModel(mask=1.0, lineart=1.0, pose=1.0),
                seed=42,
            ),
        ),
        "animate": AnimatePayload(source=image, driving=driving),
    }
    return {
        op: make_request(op, payloads[op], request_id=f"golden-{op}-0001") for op in OPS
    }


def build_golden_examples() -> dict[str, tuple[BackendRequest, BackendResponse]]:
    out = {}
    for op, req in build_golden_requests().items():
        result = HANDLERS[op](req.typed_payload())
        out[op] = (req, ok_response(req.request_id, result))
    return out


def write_goldens(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for op, (req, resp) in build_golden_examples().items():
        for suffix, model in (("request", req), ("response", resp)):
            path = directory / f"{op}_{suffix}.json"
            path.write_bytes(canonical_json(model))
            written.append(path)
    return written


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "goldens/v1"
    for p in write_goldens(target):
        print(p)
