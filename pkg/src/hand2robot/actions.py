"""Robot actions extracted from refined hand keypoints.

An action is (position, 6D orientation, normalized gripper width). The
orientation convention: x-axis = normal of the plane fit through all thumb
and index keypoints (the closing direction), z-axis = thumb line direction
re-orthogonalized against x (the approach direction), y = z cross x. The
robot model's end-effector frame mirrors this convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import Extrinsics, to_robot_frame
from .geometry import DegenerateGeometry, _unit, decode_rot6d, encode_rot6d, fit_line, fit_plane
from .handpose import HandKeypoints, INDEX, THUMB, fingertip_pair


@dataclass(frozen=True)
class GripperCalibration:
    max_width: float = 0.08  # m fingertip distance mapping to g = 1
    close_percentile: float = 20.0

    def __post_init__(self):
        if self.max_width <= 0:
            raise ValueError("max_width must be positive")
        if not 0 <= self.close_percentile <= 100:
            raise ValueError("close_percentile must be in [0, 100]")


@dataclass(frozen=True)
class RobotAction:
    position: np.ndarray  # (3,) m, robot frame
    rot6d: np.ndarray  # (6,) first two rotation-matrix columns
    gripper: float  # normalized opening in [0, 1]

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        r6 = np.asarray(self.rot6d, dtype=float).reshape(6)
        if not 0.0 <= self.gripper <= 1.0:
            raise ValueError(f"gripper {self.gripper} outside [0, 1]")
        decode_rot6d(r6)  # raises if not decodable
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rot6d", r6)

    def rotation_matrix(self) -> np.ndarray:
        return decode_rot6d(self.rot6d)


@dataclass
class Trajectory:
    """Per-demo ordered action sequence with validity bookkeeping."""

    demo_id: str
    timestamps: list[float] = field(default_factory=list)
    actions: list[RobotAction | None] = field(default_factory=list)
    valid: list[bool] = field(default_factory=list)
    raw_widths: list[float] = field(default_factory=list)  # m, pre-normalization

    def append(self, t: float, action: RobotAction | None, valid: bool, raw_width: float):
        if self.timestamps and t <= self.timestamps[-1]:
            raise ValueError("timestamps must be strictly increasing")
        self.timestamps.append(t)
        self.actions.append(action)
        self.valid.append(valid)
        self.raw_widths.append(raw_width)

    def __len__(self) -> int:
        return len(self.timestamps)


def target_position(kp: HandKeypoints) -> np.ndarray:
    """Midpoint between thumb and index fingertips, camera frame."""
    thumb, index = fingertip_pair(kp)
    return (thumb + index) / 2.0


def target_orientation(kp: HandKeypoints) -> np.ndarray:
    """Rotation matrix built from the pinch plane and the thumb axis."""
    pinch_pts = kp.points[list(THUMB) + list(INDEX)]
    x_axis, _, _ = fit_plane(pinch_pts)
    thumb_dir, _ = fit_line(kp.points[list(THUMB)])
    z_raw = thumb_dir - (thumb_dir @ x_axis) * x_axis
    if np.linalg.norm(z_raw) < 1e-9:
        raise DegenerateGeometry("thumb axis is parallel to the pinch-plane normal")
    z_axis = _unit(z_raw)
    y_axis = np.cross(z_axis, x_axis)
    return np.column_stack([x_axis, y_axis, z_axis])


def fingertip_distance(kp: HandKeypoints) -> float:
    thumb, index = fingertip_pair(kp)
    return float(np.linalg.norm(thumb - index))


def raw_gripper_width(kp: HandKeypoints, cal: GripperCalibration) -> float:
    """Fingertip distance normalized by max_width, clamped to [0, 1]."""
    return float(np.clip(fingertip_distance(kp) / cal.max_width, 0.0, 1.0))


def nearest_rank_percentile(values: np.ndarray, percentile: float) -> float | None:
    """Value at 1-based index ceil(p/100 * n) of the sorted sample.

    Returns None for an empty sample or a rank below 1 (p = 0), meaning no
    threshold applies.
    """
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        return None
    rank = int(np.ceil(percentile / 100.0 * vals.size))
    if rank < 1:
        return None
    return float(vals[rank - 1])


def postprocess_gripper(traj: Trajectory, cal: GripperCalibration) -> Trajectory:
    """Snap the bottom close_percentile of raw fingertip distances to closed.

    The percentile is computed over this single trajectory's valid frames by
    the nearest-rank method; every valid frame at or below the threshold gets
    gripper = 0, all other frames are unchanged. Never raises a gripper value.
    """
    if len(traj) == 0:
        raise ValueError("trajectory is empty")
    valid_widths = [w for w, ok in zip(traj.raw_widths, traj.valid) if ok]
    threshold = nearest_rank_percentile(np.array(valid_widths), cal.close_percentile)
    out = Trajectory(demo_id=traj.demo_id)
    for t, action, ok, w in zip(traj.timestamps, traj.actions, traj.valid, traj.raw_widths):
        if ok and action is not None and threshold is not None and w <= threshold:
            action = replace(action, gripper=0.0)
        out.append(t, action, ok, w)
    return out


def extract_action(
    kp_refined: HandKeypoints, e: Extrinsics, cal: GripperCalibration
) -> RobotAction:
    """Action from refined (post-ICP, post-constraint) keypoints.

    Position and orientation are built in the camera frame, mapped through
    the extrinsics, and the orientation is encoded to 6D. The gripper value
    is the raw normalized width; the percentile rule is a trajectory-level
    pass applied afterwards.
    """
    p_cam = target_position(kp_refined)
    rot_cam = target_orientation(kp_refined)
    p_robot, rot_robot = to_robot_frame(p_cam, rot_cam, e)
    return RobotAction(
        position=p_robot,
        rot6d=encode_rot6d(rot_robot),
        gripper=raw_gripper_width(kp_refined, cal),
    )
