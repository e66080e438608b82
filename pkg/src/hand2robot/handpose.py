"""21-landmark hand layout, anatomical hinge constraints, fingertip accessors.

Landmark layout is the standard 21-point ordering (right hand): 0 = wrist,
thumb chain {1,2,3,4}, index {5,6,7,8}, middle {9..12}, ring {13..16},
pinky {17..20}; tip of a chain is its last index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geometry import DegenerateGeometry, _unit

WRIST = 0
THUMB = (1, 2, 3, 4)
INDEX = (5, 6, 7, 8)
MIDDLE = (9, 10, 11, 12)
RING = (13, 14, 15, 16)
PINKY = (17, 18, 19, 20)
THUMB_TIP = THUMB[-1]
INDEX_TIP = INDEX[-1]

BONES = tuple(
    (chain[i - 1] if i else WRIST, chain[i])
    for chain in (THUMB, INDEX, MIDDLE, RING, PINKY)
    for i in range(len(chain))
)

BONE_LENGTH_MIN = 0.005
BONE_LENGTH_MAX = 0.12

MESH_VERTEX_COUNT = 778

# Constrained hinge joints as (p0, p1, p2, distal): the flexion plane is
# spanned by bones p0->p1 and p1->p2, the constrained bone is p2->distal.
# Ordered proximal to distal so each joint sees its updated parent.
CONSTRAINED_JOINTS = (
    ("thumb_ip", (1, 2, 3, 4)),
    ("index_pip", (0, 5, 6, 7)),
    ("index_dip", (5, 6, 7, 8)),
)

FLEXION_PLANE_EPS_RAD = 1e-4


@dataclass(frozen=True)
class JointLimits:
    """Flexion range in degrees applied to each constrained hinge joint."""

    ranges_deg: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {name: (-5.0, 115.0) for name, _ in CONSTRAINED_JOINTS}
    )

    def __post_init__(self):
        for name, (lo, hi) in self.ranges_deg.items():
            if lo >= hi:
                raise ValueError(f"joint {name}: min {lo} must be below max {hi}")

    @classmethod
    def uniform(cls, min_deg: float, max_deg: float) -> "JointLimits":
        return cls({name: (min_deg, max_deg) for name, _ in CONSTRAINED_JOINTS})


@dataclass(frozen=True)
class HandKeypoints:
    """21 camera-frame keypoints in meters, shape (21, 3)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (21, 3):
            raise ValueError(f"expected (21, 3) keypoints, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("keypoints contain non-finite values")
        lengths = np.linalg.norm(pts[[b for _, b in BONES]] - pts[[a for a, _ in BONES]], axis=1)
        if np.any(lengths <= BONE_LENGTH_MIN) or np.any(lengths >= BONE_LENGTH_MAX):
            bad = int(np.argmax((lengths <= BONE_LENGTH_MIN) | (lengths >= BONE_LENGTH_MAX)))
            raise ValueError(
                f"bone {BONES[bad]} length {lengths[bad]:.4f} m outside "
                f"({BONE_LENGTH_MIN}, {BONE_LENGTH_MAX})"
            )
        object.__setattr__(self, "points", pts)

    def transformed(self, t) -> "HandKeypoints":
        return HandKeypoints(t.apply_many(self.points))


@dataclass(frozen=True)
class HandMesh:
    """778 camera-frame mesh vertices in meters, shape (778, 3)."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.shape != (MESH_VERTEX_COUNT, 3):
            raise ValueError(f"expected ({MESH_VERTEX_COUNT}, 3) vertices, got {verts.shape}")
        if not np.all(np.isfinite(verts)):
            raise ValueError("mesh vertices contain non-finite values")
        object.__setattr__(self, "vertices", verts)

    def transformed(self, t) -> "HandMesh":
        return HandMesh(t.apply_many(self.vertices))


class ConstraintOutcome(NamedTuple):
    keypoints: HandKeypoints
    skipped: tuple[str, ...]  # joints left unmodified (degenerate flexion plane)


def constrain_finger_joints(
    kp: HandKeypoints, limits: JointLimits | None = None
) -> ConstraintOutcome:
    """Project constrained distal bones into their flexion planes and clamp.

    Each constrained joint keeps a single hinge degree of freedom: the
    original bone vector is projected into the plane spanned by the two
    preceding bone segments, its flexion angle (signed about the curl axis)
    is clamped to the joint's range, and the bone length is preserved
    exactly. Joints whose preceding bones are parallel within
    FLEXION_PLANE_EPS_RAD have no defined flexion plane; they are skipped
    and reported in the outcome. Idempotent.
    """
    limits = limits or JointLimits()
    orig = kp.points
    pts = orig.copy()
    skipped: list[str] = []
    for name, (p0, p1, p2, d) in CONSTRAINED_JOINTS:
        u = pts[p1] - pts[p0]
        v = pts[p2] - pts[p1]
        bone = orig[d] - orig[p2]
        normal = np.cross(u, v)
        sin_angle = np.linalg.norm(normal) / (np.linalg.norm(u) * np.linalg.norm(v))
        if sin_angle <= FLEXION_PLANE_EPS_RAD:
            skipped.append(name)
            continue
        n_hat = normal / np.linalg.norm(normal)
        v_hat = _unit(v)
        w_hat = np.cross(n_hat, v_hat)
        in_plane = bone - (bone @ n_hat) * n_hat
        if np.linalg.norm(in_plane) < 1e-12:
            # Bone perpendicular to the flexion plane: angle undefined.
            skipped.append(name)
            continue
        theta = np.arctan2(in_plane @ w_hat, in_plane @ v_hat)
        lo, hi = np.deg2rad(limits.ranges_deg[name])
        theta = np.clip(theta, lo, hi)
        length = np.linalg.norm(bone)
        pts[d] = pts[p2] + length * (np.cos(theta) * v_hat + np.sin(theta) * w_hat)
    return ConstraintOutcome(HandKeypoints(pts), tuple(skipped))


def fingertip_pair(kp: HandKeypoints) -> tuple[np.ndarray, np.ndarray]:
    """(thumb tip, index tip) camera-frame positions."""
    return kp.points[THUMB_TIP], kp.points[INDEX_TIP]


# --- file I/O ----------------------------------------------------------------


def load_keypoints(path: str | Path) -> HandKeypoints:
    """Per-frame JSON array of 21 [x, y, z] meter triples, camera frame."""
    with open(path) as f:
        data = json.load(f)
    return HandKeypoints(np.asarray(data, dtype=float))


def save_keypoints(kp: HandKeypoints, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(kp.points.tolist(), f)


def load_mesh_vertices(path: str | Path) -> HandMesh:
    """Per-frame little-endian float32 binary, 778x3 row-major (9336 bytes)."""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != MESH_VERTEX_COUNT * 3:
        raise ValueError(
            f"{path}: expected {MESH_VERTEX_COUNT * 3} float32 values, got {raw.size}"
        )
    return HandMesh(raw.reshape(MESH_VERTEX_COUNT, 3).astype(float))


def save_mesh_vertices(mesh: HandMesh, path: str | Path) -> None:
    mesh.vertices.astype("<f4").tofile(path)
