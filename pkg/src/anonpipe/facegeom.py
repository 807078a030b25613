"""Head pose from facial landmarks and per-scene frontal-frame selection.

Six of the 68 iBUG landmarks are matched to a generic rigid head model and
the pose is recovered by minimizing reprojection error with a damped
Gauss-Newton (Levenberg-Marquardt) iteration. Everything here is a pure
function of its inputs; identical inputs give bit-identical poses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoFrontalFrameError, PoseSolveError

# iBUG-68 indices of the six PnP keypoints, in model-point order:
# nose tip, chin, left-eye outer corner, right-eye outer corner,
# left mouth corner, right mouth corner.
PNP_LANDMARK_INDICES = (30, 8, 36, 45, 48, 54)

# Generic rigid head, nose-tip origin, model units (Y up, Z toward camera).
HEAD_MODEL_POINTS = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.0, -330.0, -65.0],
        [-225.0, 170.0, -135.0],
        [225.0, 170.0, -135.0],
        [-150.0, -150.0, -125.0],
        [150.0, -150.0, -125.0],
    ]
)
HEAD_MODEL_POINTS.flags.writeable = False

_MAX_ITERATIONS = 100
_STEP_TOL = 1e-8
_DIVERGED_RMSE_PX = 1e3
_LAMBDA_INIT = 1e-3

# Fixed solver start: identity rotation, head centred five bounding
# diagonals in front of the camera.
_MODEL_DIAG = float(np.linalg.norm(HEAD_MODEL_POINTS.max(axis=0) - HEAD_MODEL_POINTS.min(axis=0)))
_T_INIT = np.array([0.0, 0.0, 5.0 * _MODEL_DIAG])

# Restart schedule for the mirrored-pose local minimum: when the identity
# start converges with an implausibly large residual, retry from these
# fixed rotations (degrees) and keep the lowest-cost solution. The list is
# constant, so solves stay bit-deterministic.
_RESTART_EULER_DEG = ((35.0, 35.0), (-35.0, 35.0), (35.0, -35.0), (-35.0, -35.0))
_RESTART_RMSE_PX = 2.0


@dataclass(frozen=True)
class LandmarkSet:
    """68 (x, y) pixel coordinates in iBUG-68 ordering."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (68, 2):
            raise ValueError(f"landmark set must be 68x2, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with zero distortion."""

    focal: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError(f"focal length must be > 0, got {self.focal}")

    @classmethod
    def for_image(cls, width: int, height: int) -> "CameraModel":
        """Uncalibrated-portrait default: focal = width, principal point = centre."""
        return cls(focal=float(width), cx=width / 2.0, cy=height / 2.0)


@dataclass(frozen=True)
class HeadPose:
    """Recovered head rotation with Euler angles in degrees."""

    rotation: tuple[float, float, float]  # axis-angle, radians
    translation: tuple[float, float, float]  # model units
    pitch: float
    yaw: float
    roll: float
    reprojection_rmse: float

    def __post_init__(self):
        for name in ("pitch", "yaw", "roll"):
            v = getattr(self, name)
            if not -180.0 < v <= 180.0:
                raise ValueError(f"{name} = {v} outside (-180, 180]")
        if self.reprojection_rmse < 0:
            raise ValueError("reprojection_rmse must be >= 0")


def select_pnp_points(lm: LandmarkSet) -> np.ndarray:
    """The six keypoints used for the pose solve, in model-point order."""
    return lm.points[list(PNP_LANDMARK_INDICES)]


def rotation_from_axis_angle(rvec: np.ndarray) -> np.ndarray:
    """Rodrigues: axis-angle vector to rotation matrix."""
    r = np.asarray(rvec, dtype=np.float64)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        return np.eye(3)
    k = r / theta
    kx = _skew(k)
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def axis_angle_from_rotation(rot: np.ndarray) -> np.ndarray:
    """Log map: rotation matrix to axis-angle vector."""
    cos_theta = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta < 1e-12:
        return np.zeros(3)
    if theta > np.pi - 1e-6:
        # Near pi the off-diagonal extraction degenerates; recover the axis
        # from the dominant diagonal entry instead.
        axis_sq = np.clip((np.diag(rot) + 1.0) / 2.0, 0.0, None)
        axis = np.sqrt(axis_sq)
        i = int(np.argmax(axis))
        if axis[i] > 0:
            axis[(i + 1) % 3] = rot[i, (i + 1) % 3] / (2.0 * axis[i])
            axis[(i + 2) % 3] = rot[i, (i + 2) % 3] / (2.0 * axis[i])
        axis /= np.linalg.norm(axis)
        return theta * axis
    axis = (
        np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
        / (2.0 * np.sin(theta))
    )
    return theta * axis


def rotation_from_euler(pitch_deg: float, yaw_deg: float, roll_deg: float) -> np.ndarray:
    """Compose R = Ry(yaw) @ Rx(pitch) @ Rz(roll), angles in degrees."""
    p, y, r = np.radians([pitch_deg, yaw_deg, roll_deg])
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    cr, sr = np.cos(r), np.sin(r)
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return ry @ rx @ rz


def euler_from_rotation(rot: np.ndarray) -> tuple[float, float, float]:
    """Invert rotation_from_euler; returns (pitch, yaw, roll) in degrees."""
    pitch = np.degrees(np.arcsin(np.clip(-rot[1, 2], -1.0, 1.0)))
    yaw = np.degrees(np.arctan2(rot[0, 2], rot[2, 2]))
    roll = np.degrees(np.arctan2(rot[1, 0], rot[1, 1]))
    return float(pitch), float(yaw), float(roll)


def project_points(model3d: np.ndarray, rot: np.ndarray, tvec: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Pinhole projection of 3D model points under (R, t); camera looks down +Z."""
    pc = model3d @ rot.T + tvec
    z = pc[:, 2]
    if np.any(z <= 1e-9):
        raise PoseSolveError("model point at or behind the camera plane")
    uv = np.empty((model3d.shape[0], 2))
    uv[:, 0] = cam.focal * pc[:, 0] / z + cam.cx
    uv[:, 1] = cam.focal * pc[:, 1] / z + cam.cy
    return uv


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def _collinear(points2d: np.ndarray) -> bool:
    centered = points2d - points2d.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[1] <= 1e-6 * max(1.0, s[0])


def _residuals(points2d, model3d, rot, tvec, cam):
    pc = model3d @ rot.T + tvec
    z = pc[:, 2]
    if np.any(z <= 1e-9):
        return None, None
    uv = np.empty_like(points2d)
    uv[:, 0] = cam.focal * pc[:, 0] / z + cam.cx
    uv[:, 1] = cam.focal * pc[:, 1] / z + cam.cy
    return (uv - points2d).ravel(), pc


def _lm_solve(pts, mdl, cam, rot0, t0):
    """One damped Gauss-Newton run; returns (rot, tvec, cost, init_cost)."""
    rot = rot0.copy()
    tvec = t0.copy()
    res, _ = _residuals(pts, mdl, rot, tvec, cam)
    if res is None:
        return None
    cost = float(res @ res)
    init_cost = cost
    lam = _LAMBDA_INIT

    for _ in range(_MAX_ITERATIONS):
        res, pc = _residuals(pts, mdl, rot, tvec, cam)
        jac = np.empty((12, 6))
        for i in range(6):
            x, y, z = pc[i]
            d_uv = np.array(
                [
                    [cam.focal / z, 0.0, -cam.focal * x / (z * z)],
                    [0.0, cam.focal / z, -cam.focal * y / (z * z)],
                ]
            )
            jac[2 * i : 2 * i + 2, 0:3] = d_uv @ (-rot @ _skew(mdl[i]))
            jac[2 * i : 2 * i + 2, 3:6] = d_uv
        jtj = jac.T @ jac
        jtr = jac.T @ res
        diag = np.diag(jtj).copy()
        diag[diag < 1e-12] = 1e-12
        try:
            step = np.linalg.solve(jtj + lam * np.diag(diag), -jtr)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        if float(np.linalg.norm(step)) < _STEP_TOL:
            break
        new_rot = rot @ rotation_from_axis_angle(step[:3])
        new_t = tvec + step[3:]
        new_res, _ = _residuals(pts, mdl, new_rot, new_t, cam)
        new_cost = float(new_res @ new_res) if new_res is not None else np.inf
        if new_cost < cost:
            rot, tvec, cost = new_rot, new_t, new_cost
            lam = max(lam / 10.0, 1e-12)
        else:
            lam *= 10.0
    return rot, tvec, cost, init_cost


def solve_pnp(points2d: np.ndarray, model3d: np.ndarray | None = None, cam: CameraModel | None = None) -> HeadPose:
    """Recover head pose from six 2D-3D correspondences.

    Damped Gauss-Newton from a fixed start (identity rotation, head well in
    front of the camera); converged when the update norm drops below 1e-8
    or after 100 iterations. The rotation is perturbed multiplicatively
    (R <- R expm(skew(dw))) so the Jacobian stays exact and cheap. If the
    identity start lands in the mirrored local minimum (residual far above
    landmark noise), the fixed restart schedule kicks in and the
    lowest-cost solution wins; solves stay bit-deterministic.

    Raises PoseSolveError for collinear 2D input or divergence. The model
    points must be non-coplanar as a set (true of HEAD_MODEL_POINTS).
    """
    if model3d is None:
        model3d = HEAD_MODEL_POINTS
    if cam is None:
        raise ValueError("a CameraModel is required")
    pts = np.asarray(points2d, dtype=np.float64)
    mdl = np.asarray(model3d, dtype=np.float64)
    if pts.shape != (6, 2) or mdl.shape != (6, 3):
        raise ValueError(f"need 6 correspondences, got {pts.shape} / {mdl.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("2D points must be finite")
    if _collinear(pts):
        raise PoseSolveError("2D points are collinear; pose is unobservable")

    first = _lm_solve(pts, mdl, cam, np.eye(3), _T_INIT)
    if first is None:
        raise PoseSolveError("initialization places the model behind the camera")
    rot, tvec, cost, init_cost = first
    if np.sqrt(cost / 6.0) > _RESTART_RMSE_PX:
        for pitch0, yaw0 in _RESTART_EULER_DEG:
            retry = _lm_solve(pts, mdl, cam, rotation_from_euler(pitch0, yaw0, 0.0), _T_INIT)
            if retry is not None and retry[2] < cost:
                rot, tvec, cost = retry[0], retry[1], retry[2]
            if np.sqrt(cost / 6.0) <= _RESTART_RMSE_PX:
                break

    rmse = float(np.sqrt(cost / 6.0))
    if rmse > _DIVERGED_RMSE_PX:
        raise PoseSolveError(f"solve diverged: reprojection RMSE {rmse:.1f} px")
    if cost > init_cost * (1.0 + 1e-12) + 1e-12:
        raise PoseSolveError("solver ended above its starting cost")

    pitch, yaw, roll = euler_from_rotation(rot)
    rvec = axis_angle_from_rotation(rot)
    return HeadPose(
        rotation=tuple(float(v) for v in rvec),
        translation=tuple(float(v) for v in tvec),
        pitch=pitch,
        yaw=yaw,
        roll=roll,
        reprojection_rmse=rmse,
    )


def landmark_coverage(lm: LandmarkSet, width: int, height: int) -> float:
    """Fraction of the 68 landmarks inside [0, width) x [0, height)."""
    if width <= 0 or height <= 0:
        raise ValueError(f"invalid image size {width}x{height}")
    pts = lm.points
    inside = (pts[:, 0] >= 0) & (pts[:, 0] < width) & (pts[:, 1] >= 0) & (pts[:, 1] < height)
    return float(np.count_nonzero(inside)) / 68.0


def select_frontal(
    candidates: list[tuple[int, HeadPose, float]], coverage_min: float
) -> int:
    """Frame index of the most frontal candidate.

    Candidates are (frame_index, pose, coverage). Frames under the
    coverage requirement are discarded; the remaining one with the
    smallest |pitch| + |yaw| wins, ties broken by lower frame index.
    """
    eligible = [
        (abs(pose.pitch) + abs(pose.yaw), frame_index)
        for frame_index, pose, coverage in candidates
        if coverage >= coverage_min
    ]
    if not eligible:
        raise NoFrontalFrameError(
            f"no candidate reaches landmark coverage {coverage_min}"
        )
    return min(eligible)[1]
