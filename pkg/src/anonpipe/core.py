"""Shared data model and configuration schema consumed by every stage.

All types here are immutable value objects: numpy buffers are frozen
(``writeable=False``) so instances can be shared between worker threads
without synchronization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DimensionError

CONTROL_KEYS = ("mask", "lineart", "pose")

STEPS_MIN, STEPS_MAX = 1, 150
GUIDANCE_MAX = 20.0

# Largest possible L2 distance between two RGB triples on the 0-255 scale.
_RGB_L2_MAX = 255.0 * math.sqrt(3.0)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FrameRef:
    """One decoded video frame: row-major RGB, 8 bits per channel."""

    frame_index: int
    timestamp: Fraction
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid frame size {self.width}x{self.height}")
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer shape {px.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        object.__setattr__(self, "pixels", _freeze(px))


@dataclass(frozen=True)
class Scene:
    """A contiguous shot segment, grouped with similar segments by scene_id."""

    segment_id: int
    scene_id: int
    start_frame: int
    end_frame: int  # inclusive
    mean_rgb: tuple[float, float, float]
    has_face: bool = False
    frontal_frame: int | None = None

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError(
                f"segment {self.segment_id}: start {self.start_frame} > end {self.end_frame}"
            )
        if self.frontal_frame is not None and not (
            self.start_frame <= self.frontal_frame <= self.end_frame
        ):
            raise ValueError(
                f"segment {self.segment_id}: frontal frame {self.frontal_frame} "
                f"outside [{self.start_frame}, {self.end_frame}]"
            )

    @property
    def frame_count(self) -> int:
        return self.end_frame - self.start_frame + 1

    def with_face(self, frontal_frame: int) -> "Scene":
        return replace(self, has_face=True, frontal_frame=frontal_frame)


class Embedding:
    """Unit-L2-norm face feature vector of backend-declared dimension d >= 2."""

    __slots__ = ("values",)

    _NORM_TOL = 1e-6

    def __init__(self, values):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1 or v.size < 2:
            raise ValueError(f"embedding must be a vector of dimension >= 2, got shape {v.shape}")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > self._NORM_TOL:
            raise ValueError(f"embedding is not unit-norm (|v| = {norm:.8f})")
        self.values = _freeze(v)

    @classmethod
    def normalized(cls, values) -> "Embedding":
        """Build an Embedding by L2-normalizing arbitrary backend output."""
        v = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(v / norm)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, Embedding) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"Embedding(dim={self.dim})"


def cosine_distance(a: Embedding, b: Embedding) -> float:
    """1 minus the inner product of two unit-norm embeddings, in [0, 2]."""
    if a.dim != b.dim:
        raise DimensionError(f"embedding dimensions differ: {a.dim} vs {b.dim}")
    d = 1.0 - float(np.dot(a.values, b.values))
    # Unit vectors can overshoot [0, 2] by float rounding only.
    return min(max(d, 0.0), 2.0)


@dataclass(frozen=True)
class AttributeSet:
    """Coarse demographic and affective attributes of one face.

    Fields a backend could not estimate are None; prompt construction
    falls back to neutral wording for those.
    """

    age: float | None = None
    gender: str | None = None
    race: str | None = None
    emotion: str | None = None
    confidences: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.age is not None and self.age < 0:
            raise ValueError(f"age must be non-negative, got {self.age}")
        for name in ("gender", "race", "emotion"):
            v = getattr(self, name)
            if v is not None and not v.strip():
                raise ValueError(f"{name} label must be non-empty when present")
        for key, conf in self.confidences.items():
            if not 0.0 <= conf <= 1.0:
                raise ValueError(f"confidence[{key}] = {conf} outside [0, 1]")
        object.__setattr__(self, "confidences", dict(self.confidences))


@dataclass(frozen=True)
class InpaintParams:
    """Diffusion dispatch parameters for one inpaint call."""

    steps: int
    guidance: float
    control_strengths: Mapping[str, float]
    seed: int
    prompt_pair: tuple[str, str] = ("", "")

    def __post_init__(self):
        if not STEPS_MIN <= self.steps <= STEPS_MAX:
            raise ValueError(f"steps = {self.steps} outside [{STEPS_MIN}, {STEPS_MAX}]")
        if self.guidance <= 0:
            raise ValueError(f"guidance must be > 0, got {self.guidance}")
        strengths = dict(self.control_strengths)
        if set(strengths) != set(CONTROL_KEYS):
            raise ValueError(f"control_strengths must have keys {CONTROL_KEYS}, got {sorted(strengths)}")
        for key, val in strengths.items():
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"control_strengths[{key}] = {val} outside [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        object.__setattr__(self, "control_strengths", strengths)
        object.__setattr__(self, "prompt_pair", (str(self.prompt_pair[0]), str(self.prompt_pair[1])))


@dataclass(frozen=True)
class RetryDeltas:
    """Per-attempt parameter shifts for the anonymity retry loop.

    ``control`` is the amount *subtracted* from every control strength
    per attempt; steps and guidance are added.
    """

    steps: int = 5
    guidance: float = 2.0
    control: float = 0.15

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"retry.steps must be >= 0, got {self.steps}")
        if self.guidance < 0:
            raise ValueError(f"retry.guidance must be >= 0, got {self.guidance}")
        if not 0.0 <= self.control <= 1.0:
            raise ValueError(f"retry.control = {self.control} outside [0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    """Fully defaulted, range-checked pipeline configuration."""

    scene_threshold: float = 0.3
    merge_tolerance: float = 15.0
    landmark_coverage_min: float = 0.8
    anonymity_distance_threshold: float = 0.3
    cluster_distance_threshold: float = 0.5
    inpaint: InpaintParams = field(
        default_factory=lambda: InpaintParams(
            steps=35,
            guidance=12.0,
            control_strengths={k: 1.0 for k in CONTROL_KEYS},
            seed=0,
        )
    )
    retry: RetryDeltas = field(default_factory=RetryDeltas)
    max_retries: int = 3
    backend_url: str | None = None
    backend_timeout: float = 120.0
    backend_transport_retries: int = 2

    def __post_init__(self):
        _require(0.0 < self.scene_threshold < 1.0, "scene_threshold", "(0, 1)", self.scene_threshold)
        _require(
            0.0 <= self.merge_tolerance <= _RGB_L2_MAX,
            "merge_tolerance",
            f"[0, {_RGB_L2_MAX:.1f}]",
            self.merge_tolerance,
        )
        _require(
            0.0 < self.landmark_coverage_min <= 1.0,
            "landmark_coverage_min",
            "(0, 1]",
            self.landmark_coverage_min,
        )
        _require(
            0.0 < self.anonymity_distance_threshold < 2.0,
            "anonymity_distance_threshold",
            "(0, 2)",
            self.anonymity_distance_threshold,
        )
        _require(
            0.0 < self.cluster_distance_threshold < 2.0,
            "cluster_distance_threshold",
            "(0, 2)",
            self.cluster_distance_threshold,
        )
        _require(self.max_retries >= 0, "max_retries", ">= 0", self.max_retries)
        _require(self.backend_timeout > 0, "backend_timeout", "> 0", self.backend_timeout)
        _require(
            self.backend_transport_retries >= 0,
            "backend_transport_retries",
            ">= 0",
            self.backend_transport_retries,
        )

    def to_dict(self) -> dict[str, Any]:
        """Plain-document form; validate_config(to_dict()) round-trips exactly."""
        return {
            "scene_threshold": self.scene_threshold,
            "merge_tolerance": self.merge_tolerance,
            "landmark_coverage_min": self.landmark_coverage_min,
            "anonymity_distance_threshold": self.anonymity_distance_threshold,
            "cluster_distance_threshold": self.cluster_distance_threshold,
            "inpaint": {
                "steps": self.inpaint.steps,
                "guidance": self.inpaint.guidance,
                "control_strengths": dict(self.inpaint.control_strengths),
                "seed": self.inpaint.seed,
            },
            "retry": {
                "steps": self.retry.steps,
                "guidance": self.retry.guidance,
                "control": self.retry.control,
            },
            "max_retries": self.max_retries,
            "backend_url": self.backend_url,
            "backend_timeout": self.backend_timeout,
            "backend_transport_retries": self.backend_transport_retries,
        }


def _require(cond: bool, name: str, bounds: str, value) -> None:
    if not cond:
        raise ConfigError(f"{name}: value {value!r} outside {bounds}")


def _check_type(path: str, value, kinds, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(f"{path}: expected number, got boolean")
    if not isinstance(value, kinds):
        raise ConfigError(f"{path}: expected {kinds}, got {type(value).__name__}")
    return value


def _pop_scalar(doc: dict, key: str, default, kinds, allow_none=False):
    if key not in doc:
        return default
    return _check_type(key, doc.pop(key), kinds, allow_none=allow_none)


def validate_config(raw: Mapping[str, Any] | None) -> PipelineConfig:
    """Turn a parsed key-value document into a PipelineConfig.

    Every field is optional and falls back to its default; unknown keys
    are rejected with their path. Idempotent: feeding ``cfg.to_dict()``
    back in returns an equal config.
    """
    doc = dict(raw or {})
    defaults = PipelineConfig()

    inpaint_doc = doc.pop("inpaint", None)
    if inpaint_doc is None:
        inpaint = defaults.inpaint
    else:
        _check_type("inpaint", inpaint_doc, dict)
        inpaint_doc = dict(inpaint_doc)
        strengths_doc = inpaint_doc.pop("control_strengths", None)
        if strengths_doc is None:
            strengths = dict(defaults.inpaint.control_strengths)
        else:
            _check_type("inpaint.control_strengths", strengths_doc, dict)
            strengths_doc = dict(strengths_doc)
            strengths = {}
            for key in CONTROL_KEYS:
                strengths[key] = float(
                    _pop_scalar(strengths_doc, key, defaults.inpaint.control_strengths[key], (int, float))
                )
            if strengths_doc:
                raise ConfigError(
                    f"inpaint.control_strengths.{next(iter(strengths_doc))}: unknown key"
                )
        seed = _pop_scalar(inpaint_doc, "seed", defaults.inpaint.seed, int)
        if not 0 <= seed < 2**53:
            # JSON wire constraint: seeds above 2^53 - 1 cannot be parsed
            # exactly by every consumer language.
            raise ConfigError(f"inpaint.seed: value {seed} outside [0, 2**53)")
        try:
            inpaint = InpaintParams(
                steps=_pop_scalar(inpaint_doc, "steps", defaults.inpaint.steps, int),
                guidance=float(
                    _pop_scalar(inpaint_doc, "guidance", defaults.inpaint.guidance, (int, float))
                ),
                control_strengths=strengths,
                seed=seed,
            )
        except ValueError as exc:
            raise ConfigError(f"inpaint: {exc}") from exc
        if inpaint_doc:
            raise ConfigError(f"inpaint.{next(iter(inpaint_doc))}: unknown key")

    retry_doc = doc.pop("retry", None)
    if retry_doc is None:
        retry = defaults.retry
    else:
        _check_type("retry", retry_doc, dict)
        retry_doc = dict(retry_doc)
        try:
            retry = RetryDeltas(
                steps=_pop_scalar(retry_doc, "steps", defaults.retry.steps, int),
                guidance=float(
                    _pop_scalar(retry_doc, "guidance", defaults.retry.guidance, (int, float))
                ),
                control=float(
                    _pop_scalar(retry_doc, "control", defaults.retry.control, (int, float))
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"retry: {exc}") from exc
        if retry_doc:
            raise ConfigError(f"retry.{next(iter(retry_doc))}: unknown key")

    cfg = PipelineConfig(
        scene_threshold=float(
            _pop_scalar(doc, "scene_threshold", defaults.scene_threshold, (int, float))
        ),
        merge_tolerance=float(
            _pop_scalar(doc, "merge_tolerance", defaults.merge_tolerance, (int, float))
        ),
        landmark_coverage_min=float(
            _pop_scalar(doc, "landmark_coverage_min", defaults.landmark_coverage_min, (int, float))
        ),
        anonymity_distance_threshold=float(
            _pop_scalar(
                doc,
                "anonymity_distance_threshold",
                defaults.anonymity_distance_threshold,
                (int, float),
            )
        ),
        cluster_distance_threshold=float(
            _pop_scalar(
                doc, "cluster_distance_threshold", defaults.cluster_distance_threshold, (int, float)
            )
        ),
        inpaint=inpaint,
        retry=retry,
        max_retries=_pop_scalar(doc, "max_retries", defaults.max_retries, int),
        backend_url=_pop_scalar(doc, "backend_url", None, str, allow_none=True),
        backend_timeout=float(
            _pop_scalar(doc, "backend_timeout", defaults.backend_timeout, (int, float))
        ),
        backend_transport_retries=_pop_scalar(
            doc, "backend_transport_retries", defaults.backend_transport_retries, int
        ),
    )
    if doc:
        raise ConfigError(f"{next(iter(doc))}: unknown key")
    return cfg


def load_config_file(path: str) -> PipelineConfig:
    """Read a JSON or YAML config document from disk and validate it."""
    import json

    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        raw = json.loads(text)
    else:
        raw = yaml.safe_load(text)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    return validate_config(raw)
