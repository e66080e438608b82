"""Core 3D math: rotations, the 6D rotation codec, SE(3) transforms, least-squares fits.

Vectors are float64 numpy arrays of shape (3,), rotation matrices are (3, 3)
with columns as basis vectors, and the 6D rotation representation stores the
first two *columns* of the rotation matrix as a flat (6,) array (a1 then a2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Degeneracy thresholds, chosen at double-precision noise scale.
PARALLEL_EPS_RAD = 1e-6
SINGULAR_VALUE_FLOOR = 1e-9
ORTHONORMAL_TOL = 1e-6


class DegenerateGeometry(ValueError):
    """Input geometry does not determine the requested quantity."""


class DegenerateRotation6D(DegenerateGeometry):
    """6D rotation with a vanishing or parallel column pair."""


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise DegenerateGeometry("cannot normalize zero-length vector")
    return v / n


def is_rotation(mat: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        return False
    return (
        np.allclose(mat.T @ mat, np.eye(3), atol=tol)
        and abs(np.linalg.det(mat) - 1.0) <= tol
    )


def encode_rot6d(rot: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix, flattened to (6,)."""
    rot = np.asarray(rot, dtype=float)
    return np.concatenate([rot[:, 0], rot[:, 1]])


def decode_rot6d(r6: np.ndarray) -> np.ndarray:
    """Gram-Schmidt decode of a 6D rotation back to a (3, 3) matrix.

    Raises DegenerateRotation6D when either column vanishes or the columns
    are parallel within PARALLEL_EPS_RAD.
    """
    r6 = np.asarray(r6, dtype=float).reshape(6)
    a1, a2 = r6[:3], r6[3:]
    n1, n2 = np.linalg.norm(a1), np.linalg.norm(a2)
    if n1 < 1e-12 or n2 < 1e-12:
        raise DegenerateRotation6D("6D rotation has a near-zero column")
    c1 = a1 / n1
    if np.linalg.norm(np.cross(c1, a2 / n2)) <= PARALLEL_EPS_RAD:
        raise DegenerateRotation6D("6D rotation columns are parallel")
    c2 = _unit(a2 - (a2 @ c1) * c1)
    c3 = np.cross(c1, c2)
    return np.column_stack([c1, c2, c3])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    k = _unit(np.asarray(axis, dtype=float))
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """ZYX convention: yaw about z, then pitch about y, then roll about x."""
    return (
        rotation_about_axis([0, 0, 1], yaw)
        @ rotation_about_axis([0, 1, 0], pitch)
        @ rotation_about_axis([1, 0, 0], roll)
    )


def rotation_log(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector (axis * angle) of a rotation matrix."""
    rot = np.asarray(rot, dtype=float)
    c = np.clip((np.trace(rot) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(c)
    if theta < 1e-9:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # Near pi the skew part vanishes; recover the axis from R + I.
        m = rot + np.eye(3)
        axis = _unit(m[:, int(np.argmax(np.diag(m)))])
        return axis * theta
    w = (rot - rot.T) / (2.0 * np.sin(theta))
    return np.array([w[2, 1], w[0, 2], w[1, 0]]) * theta


def rotation_angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle (rad) between two rotation matrices."""
    c = np.clip((np.trace(np.asarray(a).T @ np.asarray(b)) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.arccos(c))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element mapping points from one frame to another.

    Treated as immutable; the stored arrays must not be mutated after
    construction.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not is_rotation(rot):
            raise ValueError("rotation block is not orthonormal with det +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "RigidTransform":
        mat = np.asarray(mat, dtype=float)
        return cls(rotation=mat[:3, :3], translation=mat[:3, 3])

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rotation=rot_inv, translation=-rot_inv @ self.translation)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def apply_many(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares plane through >= 3 non-collinear points.

    Returns (unit normal, centroid, rms point-plane distance). The normal is
    oriented toward the origin of the frame the points live in (the camera
    viewpoint for camera-frame points), so repeated fits of a moving plane
    keep a temporally consistent sign; when the centroid lies on the plane
    through the origin the component of largest magnitude is made positive.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise DegenerateGeometry("plane fit needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[1] <= SINGULAR_VALUE_FLOOR:
        raise DegenerateGeometry("plane fit input is collinear")
    normal = vt[2]
    facing = normal @ -centroid
    if abs(facing) < 1e-12:
        if normal[int(np.argmax(np.abs(normal)))] < 0:
            normal = -normal
    elif facing < 0:
        normal = -normal
    rms = float(np.sqrt(np.mean((centered @ normal) ** 2)))
    return normal, centroid, rms


def fit_line(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Principal axis through >= 2 distinct points.

    The direction is oriented from the first listed point toward the last
    (proximal to distal for finger chains).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise DegenerateGeometry("line fit needs at least 2 points")
    centroid = pts.mean(axis=0)
    _, svals, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if svals[0] <= 1e-12:
        raise DegenerateGeometry("line fit input points coincide")
    direction = vt[0]
    if direction @ (pts[-1] - pts[0]) < 0:
        direction = -direction
    return direction, centroid
