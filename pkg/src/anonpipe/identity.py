"""Identity clustering across scenes and the anonymity verification policy.

Scenes whose face embeddings fall within the cluster distance threshold
share one cluster, and with it one anon_seed, so every scene of a person
is inpainted toward the same synthetic identity. Verification compares
original and anonymized embeddings; leakage below the distance threshold
re-triggers inpainting with a stronger parameter schedule.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .core import Embedding, InpaintParams, RetryDeltas, cosine_distance, GUIDANCE_MAX, STEPS_MAX
from .errors import DimensionError, RetryExhaustedError


@dataclass(frozen=True)
class IdentityCluster:
    """One synthetic identity shared by a group of scenes."""

    cluster_id: int
    scene_ids: frozenset[int]
    centroid: Embedding
    anon_seed: int

    def __post_init__(self):
        if not self.scene_ids:
            raise ValueError("cluster must contain at least one scene")


@dataclass(frozen=True)
class VerificationOutcome:
    """Accept/retry state of the anonymity loop for one scene."""

    distance: float
    accepted: bool
    attempts: int
    final_params: InpaintParams

    def __post_init__(self):
        if not 0.0 <= self.distance <= 2.0:
            raise ValueError(f"distance {self.distance} outside [0, 2]")
        if self.attempts < 1:
            raise ValueError("attempts counts from 1")


def derive_anon_seed(run_seed: int, cluster_id: int) -> int:
    """Deterministic per-cluster seed for one run.

    Kept inside the IEEE-754 safe-integer range so the value survives the
    JSON wire protocol in every consumer language.
    """
    digest = hashlib.blake2b(
        f"anonpipe/anon-seed/{run_seed}/{cluster_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") & (2**53 - 1)


def cluster_scenes(
    reps: Mapping[int, Embedding], cluster_distance_threshold: float, run_seed: int = 0
) -> list[IdentityCluster]:
    """Greedy first-fit clustering of per-scene embeddings.

    Scenes are visited in ascending scene_id; each joins the first existing
    cluster whose centroid lies within the threshold, else founds a new
    one. Centroids are renormalized running means. The outcome depends only
    on the mapping contents, never on its insertion order.
    """
    order = sorted(reps)
    dims = {reps[s].dim for s in order}
    if len(dims) > 1:
        raise DimensionError(f"mixed embedding dimensions: {sorted(dims)}")

    sums: list[np.ndarray] = []
    members: list[list[int]] = []
    centroids: list[Embedding] = []
    for scene_id in order:
        emb = reps[scene_id]
        placed = False
        for k, centroid in enumerate(centroids):
            if cosine_distance(emb, centroid) <= cluster_distance_threshold:
                sums[k] = sums[k] + emb.values
                members[k].append(scene_id)
                centroids[k] = Embedding.normalized(sums[k])
                placed = True
                break
        if not placed:
            sums.append(emb.values.copy())
            members.append([scene_id])
            centroids.append(emb)

    return [
        IdentityCluster(
            cluster_id=k,
            scene_ids=frozenset(members[k]),
            centroid=centroids[k],
            anon_seed=derive_anon_seed(run_seed, k),
        )
        for k in range(len(members))
    ]


def verify_anonymity(
    orig: Embedding, anon: Embedding, threshold: float
) -> tuple[bool, float]:
    """Accept iff the embedding distance reaches the leakage threshold.

    Distance exactly at the threshold accepts: the leakage condition is
    strictly 'below'.
    """
    distance = cosine_distance(orig, anon)
    return distance >= threshold, distance


def retry_schedule(
    attempt: int, base: InpaintParams, deltas: RetryDeltas, max_retries: int
) -> InpaintParams:
    """Inpaint parameters for the given attempt (0 = first try).

    Each attempt extends denoising steps, raises guidance (clamped to 20),
    lowers every control strength (clamped to 0), and shifts the seed for
    fresh stochasticity.
    """
    if attempt < 0:
        raise ValueError("attempt must be >= 0")
    if attempt > max_retries:
        raise RetryExhaustedError(f"attempt {attempt} exceeds max_retries {max_retries}")
    if attempt == 0:
        return base
    return replace(
        base,
        steps=min(base.steps + attempt * deltas.steps, STEPS_MAX),
        guidance=min(base.guidance + attempt * deltas.guidance, GUIDANCE_MAX),
        control_strengths={
            key: max(val - attempt * deltas.control, 0.0)
            for key, val in base.control_strengths.items()
        },
        seed=(base.seed + attempt) % 2**64,
    )
