"""Deterministic mock backends used by the primary test suite.

Every function here is a pure function of its inputs plus the declared
seed: repeated calls give byte-identical results, so end-to-end runs are
reproducible without any neural model.

The mocks share one convention with the test fixture generator: a "face"
is a rectangle filled with FACE_FILL plus darker feature dots. Detection
simply finds that marker tone, which keeps detect/landmarks/embed mutually
consistent on synthetic material.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import BackendError
from ..facegeom import HEAD_MODEL_POINTS, CameraModel, project_points
from .protocol import (
    AnimatePayload,
    AnimateResult,
    AttributesPayload,
    AttributesResult,
    DetectPayload,
    DetectResult,
    EmbedPayload,
    EmbedResult,
    FaceBox,
    InpaintPayload,
    InpaintResult,
    LandmarksPayload,
    LandmarksResult,
    decode_image,
    encode_image,
)

# Marker tone drawn by fixture generators; the band absorbs codec noise.
FACE_FILL = (198, 152, 118)
_FACE_TONE_TOL = 12
_MIN_FACE_PIXELS = 16

EMBED_DIM = 64

_GENDERS = ("female", "male")
_RACES = ("asian", "white", "black", "hispanic", "middle eastern", "indian")
_EMOTIONS = ("neutral", "happy", "sad", "angry", "surprise", "fear", "disgust")


def _digest(data: bytes, label: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=16, person=label).digest()


def _crop(image: np.ndarray, box: FaceBox | None) -> np.ndarray:
    if box is None:
        return image
    h, w = image.shape[:2]
    x0, y0 = max(box.x, 0), max(box.y, 0)
    x1, y1 = min(box.x + box.w, w), min(box.y + box.h, h)
    if x1 <= x0 or y1 <= y0:
        raise BackendError(f"box {box} lies outside the {w}x{h} image")
    return image[y0:y1, x0:x1]


def mock_detect(image: np.ndarray) -> list[FaceBox]:
    """Bounding box of marker-tone pixels; empty when too few match."""
    tone = np.asarray(FACE_FILL, dtype=np.int16)
    close = np.all(np.abs(image.astype(np.int16) - tone) <= _FACE_TONE_TOL, axis=2)
    ys, xs = np.nonzero(close)
    if xs.size < _MIN_FACE_PIXELS:
        return []
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return [FaceBox(x=x0, y=y0, w=x1 - x0 + 1, h=y1 - y0 + 1, score=1.0)]


def mock_landmarks(image: np.ndarray, box: FaceBox) -> np.ndarray:
    """68 synthetic landmarks placed as an exact frontal head projection.

    The six PnP keypoints are a true pinhole projection of the rigid head
    model at identity rotation, positioned so the face fills the box; the
    pose solver therefore recovers a frontal pose on mock material. The
    remaining 62 points sit on an ellipse inside the box.
    """
    h, w = image.shape[:2]
    cam = CameraModel.for_image(w, h)
    # Depth such that the projected inter-eye span (450 model units) maps
    # to 75% of the box width; then shift laterally to the box centre.
    tz = cam.focal * 450.0 / max(box.w * 0.75, 1.0)
    bx = box.x + box.w / 2.0
    by = box.y + box.h / 2.0
    tx = (bx - cam.cx) * tz / cam.focal
    ty = (by - cam.cy) * tz / cam.focal
    key_points = project_points(
        HEAD_MODEL_POINTS, np.eye(3), np.array([tx, ty, tz]), cam
    )

    pts = np.zeros((68, 2))
    angles = np.linspace(0.0, 2.0 * np.pi, 62, endpoint=False)
    pts[:62, 0] = bx + 0.45 * box.w * np.cos(angles)
    pts[:62, 1] = by + 0.45 * box.h * np.sin(angles)
    # Overwrite the iBUG slots used by the solver with the projection.
    for slot, idx in enumerate((30, 8, 36, 45, 48, 54)):
        pts[idx] = key_points[slot]
    return pts


def mock_embed(image: np.ndarray, box: FaceBox | None = None) -> np.ndarray:
    """Unit 64-vector from 8x8 block-mean grayscale content.

    Perceptually similar crops land close together (best effort); flat
    crops fall back to a content-hash-seeded direction so the result is
    always well defined. Determinism is the contract.
    """
    crop = _crop(image, box)
    gray = crop.astype(np.float64).mean(axis=2)
    rows = np.array_split(gray, 8, axis=0)
    cells = np.empty((8, 8))
    for i, row in enumerate(rows):
        for j, cell in enumerate(np.array_split(row, 8, axis=1)):
            cells[i, j] = cell.mean() if cell.size else 0.0
    v = cells.ravel() - cells.mean()
    norm = np.linalg.norm(v)
    if norm < 1e-9:
        seed = int.from_bytes(_digest(crop.tobytes(), b"anonpipe-emb")[:8], "big")
        v = np.random.default_rng(seed).normal(size=EMBED_DIM)
        norm = np.linalg.norm(v)
    return v / norm


def mock_attributes(image: np.ndarray, box: FaceBox | None = None) -> AttributesResult:
    """Stable pseudo-attributes derived from the crop content hash."""
    crop = _crop(image, box)
    d = _digest(crop.tobytes(), b"anonpipe-attr")
    return AttributesResult(
        age=float(25 + d[0] % 40),
        gender=_GENDERS[d[1] % len(_GENDERS)],
        race=_RACES[d[2] % len(_RACES)],
        emotion=_EMOTIONS[d[3] % len(_EMOTIONS)],
        confidences={
            "age": 0.5 + (d[4] % 50) / 100.0,
            "gender": 0.5 + (d[5] % 50) / 100.0,
            "race": 0.5 + (d[6] % 50) / 100.0,
            "emotion": 0.5 + (d[7] % 50) / 100.0,
        },
    )


def _synthetic_face_patch(width: int, height: int, seed: int) -> np.ndarray:
    """Seed-keyed stand-in for a generated face.

    A coarse seeded mosaic dominates the block-mean signature mock_embed
    reads, so different seeds give near-orthogonal embeddings and the
    verification loop sees realistic distances; feature blobs at seeded
    positions keep the patch face-like rather than pure noise.
    """
    rng = np.random.default_rng(seed ^ (width << 20) ^ (height << 4))
    base = rng.integers(60, 200, size=3)
    mosaic = rng.integers(-70, 71, size=(8, 8, 3))
    cell_y = np.minimum(np.arange(height) * 8 // max(height, 1), 7)
    cell_x = np.minimum(np.arange(width) * 8 // max(width, 1), 7)
    patch = base[None, None, :] + mosaic[cell_y[:, None], cell_x[None, :]]
    yy = np.arange(height)[:, None]
    xx = np.arange(width)[None, :]
    feature = rng.integers(0, 60, size=3)
    for _ in range(3):
        cx, cy = rng.uniform(0.2, 0.8) * width, rng.uniform(0.2, 0.8) * height
        r = max(min(width, height) * 0.08, 1.0)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        patch[mask] = feature
    return np.clip(patch, 0, 255).astype(np.uint8)


def mock_inpaint(
    image: np.ndarray, face_box: FaceBox, steps: int, seed: int
) -> tuple[np.ndarray, int, int]:
    """Replace the masked face region with a seed-keyed synthetic pattern.

    The pattern depends only on the seed and the region size, so scenes
    sharing a cluster seed and an equally-sized face get byte-identical
    anonymized regions. Pixels outside the mask are byte-identical to the
    input.
    """
    h, w = image.shape[:2]
    x0, y0 = max(face_box.x, 0), max(face_box.y, 0)
    x1, y1 = min(face_box.x + face_box.w, w), min(face_box.y + face_box.h, h)
    if x1 <= x0 or y1 <= y0:
        raise BackendError("mask region lies outside the image")
    out = image.copy()
    out[y0:y1, x0:x1] = _synthetic_face_patch(x1 - x0, y1 - y0, seed)
    return out, steps, seed


_SHIFT_X = (0, 1, 2, 1, 0, -1, -2, -1)
_SHIFT_Y = (0, 1, 0, -1)


def mock_animate(source: np.ndarray, driving_count: int) -> list[np.ndarray]:
    """One output frame per driving frame: integer-shift warps of the source.

    Frame 0 is the source itself; later frames cycle through small fixed
    translations derived from the driving index, standing in for
    flow-based warping.
    """
    if driving_count < 1:
        raise BackendError("animate requires a non-empty driving sequence")
    frames = []
    for i in range(driving_count):
        dx = _SHIFT_X[i % len(_SHIFT_X)]
        dy = _SHIFT_Y[i % len(_SHIFT_Y)]
        frames.append(np.roll(source, shift=(dy, dx), axis=(0, 1)))
    return frames


def _motion_code(source: np.ndarray, driving_count: int) -> str:
    import base64

    tag = _digest(source.tobytes() + driving_count.to_bytes(4, "big"), b"anonpipe-mot")
    return base64.b64encode(tag).decode("ascii")


# Payload-level dispatchers: decode the wire payload, run the mock, encode
# the wire result. The FastAPI mock app and the in-process client share
# these, so both paths exercise identical logic.


def handle_detect(payload: DetectPayload) -> DetectResult:
    return DetectResult(faces=mock_detect(decode_image(payload.image)))


def handle_landmarks(payload: LandmarksPayload) -> LandmarksResult:
    pts = mock_landmarks(decode_image(payload.image), payload.box)
    return LandmarksResult(points=[(float(x), float(y)) for x, y in pts])


def handle_embed(payload: EmbedPayload) -> EmbedResult:
    v = mock_embed(decode_image(payload.image), payload.box)
    return EmbedResult(embedding=[float(x) for x in v], dim=EMBED_DIM)


def handle_attributes(payload: AttributesPayload) -> AttributesResult:
    return mock_attributes(decode_image(payload.image), payload.box)


def handle_inpaint(payload: InpaintPayload) -> InpaintResult:
    out, steps_used, seed_used = mock_inpaint(
        decode_image(payload.image),
        payload.face_box,
        steps=payload.params.steps,
        seed=payload.params.seed,
    )
    return InpaintResult(image=encode_image(out), steps_used=steps_used, seed_used=seed_used)


def handle_animate(payload: AnimatePayload) -> AnimateResult:
    source = decode_image(payload.source)
    frames = mock_animate(source, len(payload.driving))
    return AnimateResult(
        frames=[encode_image(f) for f in frames],
        motion_code=_motion_code(source, len(payload.driving)),
    )


HANDLERS = {
    "detect": handle_detect,
    "landmarks": handle_landmarks,
    "embed": handle_embed,
    "attributes": handle_attributes,
    "inpaint": handle_inpaint,
    "animate": handle_animate,
}
