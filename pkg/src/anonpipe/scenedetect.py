"""Shot-boundary detection and visual grouping of segments.

Boundary scores come from per-channel 64-bin histogram differences between
consecutive frames, calibrated to [0, 1] so the scene threshold behaves
like the familiar transcoder scene filter. Segments whose mean RGB colors
are close are grouped under a shared scene_id without concatenating them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import FrameRef, Scene
from .errors import DimensionError

HIST_BINS = 64  # fixed: keeps scores comparable across runs, not user-tunable
MIN_SEGMENT_FRAMES = 5  # boundaries closer than this to the previous one are dropped


@dataclass(frozen=True)
class SceneScore:
    """Histogram-difference score between frame_index - 1 and frame_index."""

    frame_index: int
    score: float

    def __post_init__(self):
        if self.frame_index < 1:
            raise ValueError("scores start at frame 1")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def _pixels(frame) -> np.ndarray:
    if isinstance(frame, FrameRef):
        return frame.pixels
    return np.asarray(frame, dtype=np.uint8)


def _channel_histograms(px: np.ndarray) -> np.ndarray:
    """Normalized HIST_BINS-bin histogram per channel, shape (3, HIST_BINS)."""
    n = px.shape[0] * px.shape[1]
    hists = np.empty((3, HIST_BINS))
    for c in range(3):
        binned = px[:, :, c] >> 2  # 256 values -> 64 bins of width 4
        hists[c] = np.bincount(binned.ravel(), minlength=HIST_BINS) / n
    return hists


def frame_score(prev, cur) -> float:
    """Mean over channels of the total-variation distance between histograms."""
    a, b = _pixels(prev), _pixels(cur)
    if a.shape != b.shape:
        raise DimensionError(f"frame shapes differ: {a.shape} vs {b.shape}")
    ha, hb = _channel_histograms(a), _channel_histograms(b)
    tv = 0.5 * np.abs(ha - hb).sum(axis=1)
    return float(tv.mean())


def compute_scores(frames: Sequence) -> list[SceneScore]:
    return [
        SceneScore(frame_index=i, score=frame_score(frames[i - 1], frames[i]))
        for i in range(1, len(frames))
    ]


def detect_boundaries(frames: Sequence, scene_threshold: float) -> list[int]:
    """Indices i where the score between frames i-1 and i exceeds the threshold.

    Pure thresholding: monotone in the threshold by construction (raising it
    never adds a boundary). Minimum-length suppression happens when segments
    are built, not here.
    """
    if len(frames) < 1:
        raise ValueError("need at least one frame")
    return [s.frame_index for s in compute_scores(frames) if s.score > scene_threshold]


def build_segments(frame_count: int, boundaries: Sequence[int], min_len: int = MIN_SEGMENT_FRAMES) -> list[tuple[int, int]]:
    """Split [0, frame_count) at the boundaries, as (start, end_inclusive) pairs.

    Boundaries closer than min_len to the previously kept split are dropped
    to avoid flicker-induced over-segmentation.
    """
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    kept = []
    prev = 0
    for b in sorted(boundaries):
        if b - prev >= min_len and b < frame_count:
            kept.append(b)
            prev = b
    starts = [0] + kept
    ends = [b - 1 for b in kept] + [frame_count - 1]
    return list(zip(starts, ends))


def segment_mean_rgb(frames: Sequence, start: int, end: int) -> tuple[float, float, float]:
    """Mean RGB over all pixels of frames[start..end] on the 0-255 scale."""
    total = np.zeros(3)
    for i in range(start, end + 1):
        total += _pixels(frames[i]).mean(axis=(0, 1))
    mean = total / (end - start + 1)
    return (float(mean[0]), float(mean[1]), float(mean[2]))


def merge_segments(segments: Sequence[Scene], merge_tolerance: float) -> list[Scene]:
    """Assign each segment the scene_id of the earliest similar predecessor.

    A segment joins the first earlier segment whose mean RGB lies within
    merge_tolerance (L2 on the 0-255 scale); otherwise it founds a fresh
    scene_id. Segment boundaries are preserved: this groups, never
    concatenates.
    """
    out: list[Scene] = []
    next_scene_id = 0
    for seg in segments:
        mine = np.asarray(seg.mean_rgb)
        assigned = None
        for prior in out:
            if np.linalg.norm(mine - np.asarray(prior.mean_rgb)) <= merge_tolerance:
                assigned = prior.scene_id
                break
        if assigned is None:
            assigned = next_scene_id
            next_scene_id += 1
        out.append(replace(seg, scene_id=assigned))
    return out


def detect_scenes(frames: Sequence, scene_threshold: float, merge_tolerance: float) -> list[Scene]:
    """Full stage-1 pass: boundaries, segments, mean colors, scene grouping."""
    boundaries = detect_boundaries(frames, scene_threshold)
    spans = build_segments(len(frames), boundaries)
    segments = [
        Scene(
            segment_id=k,
            scene_id=k,
            start_frame=start,
            end_frame=end,
            mean_rgb=segment_mean_rgb(frames, start, end),
        )
        for k, (start, end) in enumerate(spans)
    ]
    return merge_segments(segments, merge_tolerance)
