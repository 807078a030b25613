"""Shared fixture builders for video tests.

Videos are written straight through cv2 (not through anonpipe.videoio) so
the decoder under test is checked against an independent encode path. The
synthetic face marker matches what the mock backends detect.
"""

from __future__ import annotations

import numpy as np

FACE_FILL = (198, 152, 118)  # must match anonpipe.backends.mock.FACE_FILL


def draw_face(frame: np.ndarray, x: int, y: int, w: int, h: int, variant: int = 0) -> np.ndarray:
    """Paint the marker-tone face rectangle with eye/mouth features."""
    frame[y : y + h, x : x + w] = FACE_FILL
    ex = max(w // 6, 1)
    eye_y = y + h // 4 + (variant % 3)
    frame[eye_y : eye_y + ex, x + w // 4 : x + w // 4 + ex] = (40, 30, 30)
    frame[eye_y : eye_y + ex, x + 3 * w // 4 - ex : x + 3 * w // 4] = (40, 30, 30)
    frame[y + 3 * h // 4 : y + 3 * h // 4 + ex, x + w // 3 : x + 2 * w // 3] = (90, 40, 40)
    return frame


def solid_frames(n: int, rgb, w: int = 64, h: int = 48) -> list[np.ndarray]:
    out = []
    for _ in range(n):
        f = np.empty((h, w, 3), np.uint8)
        f[:] = rgb
        out.append(f)
    return out


def face_scene_frames(
    n: int, bg, box: tuple[int, int, int, int], w: int = 160, h: int = 120, variant: int = 0
) -> list[np.ndarray]:
    """One scene's frames: constant background with a marker face."""
    base = np.full((h, w, 3), bg, np.uint8)
    draw_face(base, *box, variant=variant)
    return [base.copy() for _ in range(n)]


def write_video_cv2(path, frames, fps: float = 25.0, fourcc: str = "FFV1") -> None:
    import cv2

    h, w = frames[0].shape[:2]
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*fourcc), fps, (w, h))
    assert writer.isOpened(), f"cannot open writer for {path}"
    for f in frames:
        writer.write(cv2.cvtColor(f, cv2.COLOR_RGB2BGR))
    writer.release()


def sine_pcm(seconds: float, rate: int = 8000, freq: float = 440.0) -> np.ndarray:
    t = np.arange(int(seconds * rate))
    return (12000 * np.sin(2 * np.pi * freq * t / rate)).astype(np.int16)


def write_video_with_audio(path, frames, fps: float = 25.0) -> np.ndarray:
    """Fixture with a PCM sine track exactly as long as the video."""
    import tempfile
    from pathlib import Path

    from anonpipe import riffavi

    path = Path(path)
    with tempfile.TemporaryDirectory() as td:
        silent = Path(td) / "video.avi"
        write_video_cv2(silent, frames, fps=fps)
        samples = sine_pcm(len(frames) / fps)
        riffavi.mux_audio(silent, riffavi.pcm_track(samples, 8000), path)
    return samples


def three_scene_frames() -> tuple[list[np.ndarray], dict]:
    """The standard e2e fixture: face A / no face / face A again.

    Scenes 0 and 2 are pixel-identical, so their mock embeddings cluster
    together; scene 1 has no face and must pass through untouched.
    """
    box = (60, 40, 40, 48)
    scene0 = face_scene_frames(10, (20, 60, 110), box)
    scene1 = solid_frames(8, (120, 190, 60), w=160, h=120)
    scene2 = [f.copy() for f in scene0[:9]]
    frames = scene0 + scene1 + scene2
    meta = {
        "spans": [(0, 9), (10, 17), (18, 26)],
        "face_box": box,
        "face_scenes": [0, 2],
        "no_face_scenes": [1],
    }
    return frames, meta
