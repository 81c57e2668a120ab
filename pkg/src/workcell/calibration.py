"""Calibration math: camera pose from fiducial markers, robot pose by ICP.

Camera estimation: each detected marker yields a candidate camera world
pose (marker world pose composed with the inverted observation).  The
candidates are fused with weights favoring close, face-on markers:
``w = 1/max(d, 0.05m) * max(0, cos theta)`` where ``d`` is the camera to
marker distance and ``theta`` the angle between the viewing ray and the
marker face normal.  Positions fuse as the weighted mean; orientations via
the dominant eigenvector of the weighted quaternion outer-product sum.

Robot refinement: sample the robot's primitive models into a synthetic
surface cloud at the currently stored pose, crop the observed cloud to the
robot's surroundings, and register with point-to-point ICP under a Tukey
kernel (cutoff from the per-iteration MAD of residuals unless fixed).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import WorkcellError
from .geometry import Orientation, Pose, Position, compose, invert
from .model import ObjectModel

DISTANCE_FLOOR = 0.05  # meters; avoids the 1/d singularity near the lens


# -- quaternion/matrix interop -------------------------------------------------


def quat_to_matrix(q: Orientation) -> np.ndarray:
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> Orientation:
    # Shepperd's method: pick the largest diagonal pivot for stability.
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        return Orientation(
            0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s
        )
    i = int(np.argmax(np.diag(m)))
    if i == 0:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        return Orientation(
            (m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s
        )
    if i == 1:
        s = np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2]) * 2
        return Orientation(
            (m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s
        )
    s = np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2]) * 2
    return Orientation(
        (m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s
    )


def pose_to_matrix(p: Pose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix(p.orientation)
    m[:3, 3] = (p.position.x, p.position.y, p.position.z)
    return m


def matrix_to_pose(m: np.ndarray) -> Pose:
    return Pose(Position(*m[:3, 3]), matrix_to_quat(m[:3, :3]))


# -- marker types ---------------------------------------------------------------


@dataclass(frozen=True)
class MarkerConfig:
    marker_id: int
    pose: Pose  # marker pose in the world frame
    size: float  # edge length, meters

    def to_dict(self) -> dict:
        return {"marker_id": self.marker_id, "pose": self.pose.to_dict(), "size": self.size}

    @classmethod
    def from_dict(cls, data: dict) -> "MarkerConfig":
        return cls(int(data["marker_id"]), Pose.from_dict(data["pose"]), float(data["size"]))


@dataclass(frozen=True)
class MarkerObservation:
    marker_id: int
    pose: Pose  # marker pose in the camera frame, from an external detector

    def to_dict(self) -> dict:
        return {"marker_id": self.marker_id, "pose": self.pose.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "MarkerObservation":
        return cls(int(data["marker_id"]), Pose.from_dict(data["pose"]))


def load_marker_configs(path) -> list:
    import json

    data = json.loads(Path(path).read_text())
    return [MarkerConfig.from_dict(entry) for entry in data]


# -- quaternion averaging --------------------------------------------------------


def average_quaternions(quaternions: list, weights: Optional[list] = None) -> Orientation:
    """Weighted rotation mean: dominant eigenvector of sum(w * q q^T).

    Sign-invariant in every input (q and -q contribute identically) and
    invariant under uniform weight scaling.
    """
    if not quaternions:
        raise WorkcellError("DEGENERATE", "no quaternions to average")
    if weights is None:
        weights = [1.0] * len(quaternions)
    if len(weights) != len(quaternions):
        raise WorkcellError("DEGENERATE", "weights length mismatch")
    if any(w < 0 for w in weights):
        raise WorkcellError("DEGENERATE", "weights must be non-negative")
    if not any(w > 0 for w in weights):
        raise WorkcellError("DEGENERATE", "all weights are zero")

    m = np.zeros((4, 4))
    for q, w in zip(quaternions, weights):
        vec = np.array([q.w, q.x, q.y, q.z])
        m += w * np.outer(vec, vec)
    eigenvalues, eigenvectors = np.linalg.eigh(m)
    best = eigenvectors[:, int(np.argmax(eigenvalues))]
    return Orientation(*best)


# -- camera pose from markers ----------------------------------------------------


def estimate_camera_pose(observations: list, config: list) -> tuple:
    """Fuse per-marker camera pose candidates; returns (pose, weights)."""
    if not observations:
        raise WorkcellError("DEGENERATE", "no marker observations")
    by_id = {c.marker_id: c for c in config}

    candidates = []
    weights = []
    for obs in observations:
        cfg = by_id.get(obs.marker_id)
        if cfg is None:
            raise WorkcellError("UNKNOWN_MARKER", f"marker {obs.marker_id} not configured")
        candidates.append(compose(cfg.pose, invert(obs.pose)))

        t = np.array([obs.pose.position.x, obs.pose.position.y, obs.pose.position.z])
        d = float(np.linalg.norm(t))
        if d < 1e-12:
            facing = 1.0  # marker at the optical center; treat as face-on
        else:
            ray = t / d
            normal = quat_to_matrix(obs.pose.orientation) @ np.array([0.0, 0.0, 1.0])
            # A face-on marker's outward normal points back along the ray.
            facing = max(0.0, float(-ray @ normal))
        weights.append((1.0 / max(d, DISTANCE_FLOOR)) * facing)

    total = sum(weights)
    if total <= 0.0:
        raise WorkcellError("DEGENERATE", "all marker weights are zero")

    position = np.zeros(3)
    for cand, w in zip(candidates, weights):
        position += w * np.array(
            [cand.position.x, cand.position.y, cand.position.z]
        )
    position /= total
    orientation = average_quaternions([c.orientation for c in candidates], weights)
    return Pose(Position(*position), orientation), weights


# -- synthetic surface clouds ------------------------------------------------------


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder allocation of ``total`` samples proportional to weights."""
    if total == 0 or weights.sum() <= 0:
        return np.zeros(len(weights), dtype=int)
    exact = weights / weights.sum() * total
    counts = np.floor(exact).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(exact - counts))
    counts[order[:remainder]] += 1
    return counts


def _sample_box(rng, sx: float, sy: float, sz: float, n: int) -> np.ndarray:
    faces = [
        ((sy, sz), lambda u, v: np.column_stack([np.full_like(u, sx / 2), u, v])),
        ((sy, sz), lambda u, v: np.column_stack([np.full_like(u, -sx / 2), u, v])),
        ((sx, sz), lambda u, v: np.column_stack([u, np.full_like(u, sy / 2), v])),
        ((sx, sz), lambda u, v: np.column_stack([u, np.full_like(u, -sy / 2), v])),
        ((sx, sy), lambda u, v: np.column_stack([u, v, np.full_like(u, sz / 2)])),
        ((sx, sy), lambda u, v: np.column_stack([u, v, np.full_like(u, -sz / 2)])),
    ]
    areas = np.array([a * b for (a, b), _build in faces])
    counts = _allocate(areas, n)
    parts = []
    for ((a, b), build), count in zip(faces, counts):
        if count == 0:
            continue
        u = rng.uniform(-a / 2, a / 2, count)
        v = rng.uniform(-b / 2, b / 2, count)
        parts.append(build(u, v))
    return np.vstack(parts) if parts else np.zeros((0, 3))


def _sample_sphere(rng, radius: float, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius


def _sample_cylinder(rng, radius: float, height: float, n: int) -> np.ndarray:
    side = 2 * np.pi * radius * height
    cap = np.pi * radius * radius
    counts = _allocate(np.array([side, cap, cap]), n)
    parts = []
    if counts[0]:
        theta = rng.uniform(0, 2 * np.pi, counts[0])
        z = rng.uniform(-height / 2, height / 2, counts[0])
        parts.append(np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z]))
    for count, z in ((counts[1], height / 2), (counts[2], -height / 2)):
        if count:
            theta = rng.uniform(0, 2 * np.pi, count)
            r = radius * np.sqrt(rng.uniform(0, 1, count))
            parts.append(
                np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(count, z)])
            )
    return np.vstack(parts) if parts else np.zeros((0, 3))


def model_surface_area(model: ObjectModel) -> float:
    if model.kind == "box":
        return 2 * (
            model.size_x * model.size_y
            + model.size_y * model.size_z
            + model.size_x * model.size_z
        )
    if model.kind == "sphere":
        return 4 * np.pi * model.radius**2
    if model.kind == "cylinder":
        return 2 * np.pi * model.radius * model.height + 2 * np.pi * model.radius**2
    raise WorkcellError("UNSUPPORTED_MODEL", "mesh models cannot be sampled analytically")


def synth_cloud_from_model(posed_models: list, samples: int, seed: int = 0) -> np.ndarray:
    """Uniform surface samples over posed primitives; (N, 3) array.

    Counts split across primitives (and faces within them) proportionally
    to surface area; the sampler is deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    if samples == 0 or not posed_models:
        return np.zeros((0, 3))
    areas = np.array([model_surface_area(m) for _pose, m in posed_models])
    counts = _allocate(areas, samples)
    parts = []
    for (pose, model), count in zip(posed_models, counts):
        if count == 0:
            continue
        if model.kind == "box":
            local = _sample_box(rng, model.size_x, model.size_y, model.size_z, count)
        elif model.kind == "sphere":
            local = _sample_sphere(rng, model.radius, count)
        else:
            local = _sample_cylinder(rng, model.radius, model.height, count)
        r = quat_to_matrix(pose.orientation)
        t = np.array([pose.position.x, pose.position.y, pose.position.z])
        parts.append(local @ r.T + t)
    return np.vstack(parts) if parts else np.zeros((0, 3))


# -- robust ICP --------------------------------------------------------------------


def _tukey_rho(r: np.ndarray, c: float) -> np.ndarray:
    rho = np.full_like(r, c * c / 6.0)
    inside = r < c
    u = 1.0 - (r[inside] / c) ** 2
    rho[inside] = c * c / 6.0 * (1.0 - u**3)
    return rho


@dataclass(frozen=True)
class IcpResult:
    pose: Pose
    fitness: float  # inlier fraction at the final iteration
    iterations: int
    objectives: tuple  # Tukey objective per iteration (diagnostics/tests)


def robust_icp(source: np.ndarray, target: np.ndarray, initial: Pose = Pose(),
               max_iter: int = 50, tol: float = 1e-6,
               tukey_c: Optional[float] = None) -> IcpResult:
    """Point-to-point ICP with a Tukey kernel; returns the source->target pose.

    The cutoff ``c`` is recomputed each iteration as 3 * 1.4826 * MAD of the
    residuals unless ``tukey_c`` fixes it.  Alignment is the weighted SVD
    closed form with determinant correction.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape[0] < 3 or target.shape[0] < 3:
        raise WorkcellError("DEGENERATE_GEOMETRY", "clouds must have at least 3 points")

    sv = np.linalg.svd(source - source.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1.0):
        raise WorkcellError("DEGENERATE_GEOMETRY", "source points are collinear")

    tree = cKDTree(target)
    rotation = quat_to_matrix(initial.orientation)
    translation = np.array(
        [initial.position.x, initial.position.y, initial.position.z]
    )
    objectives = []
    fitness = 0.0
    iterations = 0

    for iteration in range(max_iter):
        iterations = iteration + 1
        moved = source @ rotation.T + translation
        distances, indices = tree.query(moved)
        matched = target[indices]

        if tukey_c is not None:
            c = tukey_c
        else:
            # Scale from the residual distribution: the median anchors the
            # cutoff so a coherent misalignment keeps its correspondences
            # weighted (MAD alone collapses onto the already-matched tail
            # and stalls), and the MAD term lets it tighten as the clouds
            # lock together.
            med = np.median(distances)
            c = med + 3.0 * 1.4826 * np.median(np.abs(distances - med))
        c = max(c, 1e-9)

        objectives.append(float(np.sum(_tukey_rho(distances, c))))
        w = np.where(distances < c, (1.0 - (distances / c) ** 2) ** 2, 0.0)
        fitness = float(np.count_nonzero(w)) / len(source)
        if w.sum() < 1e-12:
            # Every residual at or past the cutoff (e.g. zero MAD on a pure
            # translation): take an unweighted step instead of stalling.
            w = np.ones_like(w)

        ws = w / w.sum()
        centroid_s = ws @ moved
        centroid_t = ws @ matched
        h = (moved - centroid_s).T @ ((matched - centroid_t) * ws[:, None])
        u, s, vt = np.linalg.svd(h)
        if s[1] <= 1e-15 * max(s[0], 1e-300):
            raise WorkcellError("DEGENERATE_GEOMETRY", "weighted covariance is rank-deficient")
        d = np.sign(np.linalg.det(vt.T @ u.T))
        delta_r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
        delta_t = centroid_t - delta_r @ centroid_s

        rotation = delta_r @ rotation
        translation = delta_r @ translation + delta_t

        angle = np.arccos(np.clip((np.trace(delta_r) - 1.0) / 2.0, -1.0, 1.0))
        if np.linalg.norm(delta_t) < tol and angle < tol:
            break

    pose = Pose(Position(*translation), matrix_to_quat(rotation))
    return IcpResult(pose, fitness, iterations, tuple(objectives))


def refine_robot_pose(scene, robot_uid: str, observed: np.ndarray, registry,
                      joints=None, samples: int = 2000, crop_radius: Optional[float] = None,
                      seed: int = 0, **icp_params) -> Pose:
    """Refine a robot's base pose against an observed point cloud.

    The stored scene pose is the initial guess; the observed cloud is cropped
    to a ball around it (default 1.5x the robot reach) and registered against
    a synthetic cloud of the robot's primitive models.
    """
    from .objtypes import scara

    obj = scene.object(robot_uid)
    if obj is None or obj.pose is None:
        raise WorkcellError("UNKNOWN_ENTITY", f"no posed object {robot_uid!r} in scene")

    params = {name: tv.value for name, tv in obj.parameters}
    l1 = float(params.get("l1", scara.DEFAULT_L1))
    l2 = float(params.get("l2", scara.DEFAULT_L2))
    reach = l1 + l2
    radius = crop_radius if crop_radius is not None else 1.5 * reach

    joint_values = joints.as_mapping() if joints is not None else {}
    q = [joint_values.get(name, 0.0) for name in scara.JOINT_NAMES]
    models = scara.link_models(obj.pose, q, l1, l2)
    synth = synth_cloud_from_model(models, samples, seed=seed)

    observed = np.asarray(observed, dtype=float)
    center = np.array([obj.pose.position.x, obj.pose.position.y, obj.pose.position.z])
    cropped = observed[np.linalg.norm(observed - center, axis=1) <= radius]
    if cropped.shape[0] < 100:
        raise WorkcellError(
            "INSUFFICIENT_POINTS", f"{cropped.shape[0]} points near the robot after cropping"
        )

    result = robust_icp(synth, cropped, Pose(), **icp_params)
    return compose(result.pose, obj.pose)


# -- cloud I/O ----------------------------------------------------------------------

_CLOUD_MAGIC = b"WCC1"


def save_cloud(path, cloud: np.ndarray) -> Path:
    """Text ``x y z`` lines, or the binary form for a ``.bin`` suffix.

    Binary layout: magic ``WCC1``, uint32 little-endian count, then count
    little-endian float64 (x, y, z) triples.
    """
    path = Path(path)
    cloud = np.asarray(cloud, dtype=float)
    if path.suffix == ".bin":
        with path.open("wb") as fh:
            fh.write(_CLOUD_MAGIC)
            fh.write(struct.pack("<I", len(cloud)))
            fh.write(cloud.astype("<f8").tobytes())
    else:
        np.savetxt(path, cloud, fmt="%.9f")
    return path


def load_cloud(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".bin":
        raw = path.read_bytes()
        if raw[:4] != _CLOUD_MAGIC:
            raise WorkcellError("NOT_FOUND", f"{path} is not a cloud file")
        (count,) = struct.unpack("<I", raw[4:8])
        return np.frombuffer(raw[8:], dtype="<f8").reshape(count, 3).copy()
    data = np.loadtxt(path)
    return data.reshape(-1, 3)
