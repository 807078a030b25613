"""Video decode, probe, and reassembly on the bundled libav engine.

Frames move through the pipeline as RGB24 arrays; output video is written
losslessly (FFV1 in AVI), so passthrough segments survive a full
decode/reassemble round trip bit-exactly. Audio is never re-encoded: the
source container's audio stream is byte-copied into the output at the
RIFF level. Every engine operation is logged for reproducibility.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from . import riffavi
from .core import FrameRef
from .errors import MediaError, ReassemblyError

logger = logging.getLogger(__name__)

OUTPUT_FOURCC = "FFV1"  # lossless; "visually lossless" with zero tolerance


@dataclass(frozen=True)
class MediaInfo:
    """Probe result; frame_count comes from decoding, not the header."""

    frame_count: int
    fps: Fraction
    duration: float
    has_audio: bool
    width: int
    height: int

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if self.fps <= 0:
            raise ValueError("fps must be > 0")


@dataclass(frozen=True)
class SceneOutput:
    """Frames for one segment, anonymized or passthrough."""

    segment_id: int
    frames: tuple[FrameRef, ...]
    passthrough: bool = False

    def __post_init__(self):
        if not self.frames:
            raise ValueError(f"segment {self.segment_id}: no frames")
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def start_frame(self) -> int:
        return self.frames[0].frame_index

    @property
    def end_frame(self) -> int:
        return self.frames[-1].frame_index


def _open_capture(path: str | Path) -> cv2.VideoCapture:
    p = Path(path)
    if not p.is_file() or p.stat().st_size == 0:
        raise MediaError(f"{path}: missing or empty file")
    cap = cv2.VideoCapture(str(p))
    if not cap.isOpened():
        raise MediaError(f"{path}: cannot open as video")
    return cap


def _rational_fps(path: str | Path, cap: cv2.VideoCapture) -> Fraction:
    if riffavi.is_avi(path):
        try:
            for stream in riffavi.parse_avi(path).streams:
                if stream.fcc_type == "vids" and stream.strh["dwScale"] > 0:
                    return Fraction(stream.strh["dwRate"], stream.strh["dwScale"])
        except MediaError:
            pass
    fps = cap.get(cv2.CAP_PROP_FPS)
    if not fps or fps <= 0:
        raise MediaError(f"{path}: container reports no frame rate")
    return Fraction(fps).limit_denominator(100000)


def _decode_loop(path: str | Path, cap: cv2.VideoCapture):
    """Yield RGB frames; raise with the frame index on mid-stream failure."""
    header_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    index = 0
    while True:
        ok, bgr = cap.read()
        if not ok:
            break
        yield cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
        index += 1
    if header_count > 0 and index < header_count:
        raise MediaError(
            f"{path}: decode stopped at frame {index} of {header_count}", frame_index=index
        )


def probe(path: str | Path) -> MediaInfo:
    """Decode-verified media info for one video file."""
    cap = _open_capture(path)
    try:
        fps = _rational_fps(path, cap)
        count = 0
        width = height = 0
        for frame in _decode_loop(path, cap):
            if count == 0:
                height, width = frame.shape[:2]
            count += 1
    finally:
        cap.release()
    if count == 0:
        raise MediaError(f"{path}: no decodable frames")
    info = MediaInfo(
        frame_count=count,
        fps=fps,
        duration=float(count / fps),
        has_audio=riffavi.container_has_audio(path),
        width=width,
        height=height,
    )
    logger.info("probe %s: %s", path, info)
    return info


def decode_frames(path: str | Path) -> list[FrameRef]:
    """All frames of the video in presentation order, as RGB8."""
    cap = _open_capture(path)
    try:
        fps = _rational_fps(path, cap)
        frames = []
        for i, rgb in enumerate(_decode_loop(path, cap)):
            h, w = rgb.shape[:2]
            frames.append(
                FrameRef(frame_index=i, timestamp=Fraction(i) / fps, width=w, height=h, pixels=rgb)
            )
    finally:
        cap.release()
    if not frames:
        raise MediaError(f"{path}: no decodable frames")
    logger.info("decode %s: %d frames", path, len(frames))
    return frames


def write_video(path: str | Path, frames: Sequence[np.ndarray], fps: Fraction) -> None:
    """Lossless FFV1/AVI writer used for fixtures and outputs."""
    path = Path(path)
    h, w = np.asarray(frames[0]).shape[:2]
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*OUTPUT_FOURCC), float(fps), (w, h)
    )
    if not writer.isOpened():
        raise MediaError(f"{path}: cannot open video writer ({OUTPUT_FOURCC})")
    try:
        for frame in frames:
            writer.write(cv2.cvtColor(np.asarray(frame, np.uint8), cv2.COLOR_RGB2BGR))
    finally:
        writer.release()
    logger.info("encode %s: %d frames %s %sfps", path, len(frames), OUTPUT_FOURCC, fps)


def _validate_coverage(outputs: Sequence[SceneOutput], info: MediaInfo) -> list[SceneOutput]:
    seen_segments = set()
    for out in outputs:
        if out.segment_id in seen_segments:
            raise ReassemblyError(f"segment {out.segment_id} supplied twice")
        seen_segments.add(out.segment_id)
        for ref in out.frames:
            if (ref.width, ref.height) != (info.width, info.height):
                raise ReassemblyError(
                    f"segment {out.segment_id}: frame {ref.frame_index} is "
                    f"{ref.width}x{ref.height}, source is {info.width}x{info.height}"
                )
    ordered = sorted(outputs, key=lambda o: o.start_frame)
    expected = 0
    for out in ordered:
        indices = [f.frame_index for f in out.frames]
        if indices != list(range(out.start_frame, out.end_frame + 1)):
            raise ReassemblyError(f"segment {out.segment_id}: frame indices not contiguous")
        if out.start_frame != expected:
            verb = "overlap" if out.start_frame < expected else "gap"
            raise ReassemblyError(
                f"coverage {verb} at frame {expected} (segment {out.segment_id})"
            )
        expected = out.end_frame + 1
    if expected != info.frame_count:
        raise ReassemblyError(
            f"outputs cover {expected} frames, source has {info.frame_count}"
        )
    return ordered


def reassemble(
    outputs: Sequence[SceneOutput], source_path: str | Path, out_path: str | Path
) -> MediaInfo:
    """Merge segment outputs back into one video at the source's timing.

    Every segment must appear exactly once and cover the source. Frames of
    passthrough segments are emitted from the freshly decoded source, so a
    passthrough pipeline is bit-exact. The audio stream, when the source
    has one, is byte-copied into the output container.
    """
    out_path = Path(out_path)
    info = probe(source_path)
    ordered = _validate_coverage(outputs, info)

    source_frames = decode_frames(source_path)
    sequence: list[np.ndarray] = []
    for out in ordered:
        if out.passthrough:
            sequence.extend(
                source_frames[i].pixels for i in range(out.start_frame, out.end_frame + 1)
            )
        else:
            sequence.extend(ref.pixels for ref in out.frames)

    if out_path.suffix.lower() != ".avi":
        logger.warning(
            "%s: container %r is unverified on this engine; writing FFV1 anyway",
            out_path,
            out_path.suffix,
        )
    tmp_video = out_path.with_name(f".{out_path.stem}.tmp{out_path.suffix}")
    tmp_muxed = out_path.with_name(f".{out_path.stem}.tmpmux{out_path.suffix}")
    try:
        write_video(tmp_video, sequence, info.fps)
        final_tmp = tmp_video
        if info.has_audio:
            if riffavi.is_avi(source_path) and out_path.suffix.lower() == ".avi":
                track = riffavi.extract_audio(source_path)
                riffavi.mux_audio(tmp_video, track, tmp_muxed)
                final_tmp = tmp_muxed
                logger.info(
                    "audio stream-copied: %.3fs @ %s Hz", track.duration, track.sample_rate
                )
            else:
                logger.warning(
                    "%s: audio passthrough requires AVI in and out on this engine; "
                    "writing video-only output",
                    out_path,
                )
        os.replace(final_tmp, out_path)
    finally:
        for tmp in (tmp_video, tmp_muxed):
            if tmp.exists():
                tmp.unlink()
    return probe(out_path)
