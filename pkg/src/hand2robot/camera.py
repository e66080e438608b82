"""Pinhole camera model, depth/mask image I/O, and point-cloud extraction.

Image conventions: RGB frames are (H, W, 3) uint8, depth frames are (H, W)
uint16 millimeters with 0 meaning missing, masks are (H, W) bool. Continuous
pixel coordinates put the center of pixel (row v, col u) at exactly (u, v).
No lens distortion model: inputs are assumed pre-rectified.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import RigidTransform

DEPTH_SCALE = 1000.0  # millimeters per meter in stored depth images


class InvalidDepth(ValueError):
    pass


class BehindCamera(ValueError):
    pass


class EmptyCloud(ValueError):
    """No mask pixel carries a valid depth value."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transform taking camera-frame coordinates to robot-base frame."""

    camera_to_robot: RigidTransform


def deproject(u: float, v: float, depth_m: float, k: Intrinsics) -> np.ndarray:
    """Back-project a pixel with metric depth to a camera-frame point."""
    if depth_m <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth_m}")
    return np.array(
        [(u - k.cx) * depth_m / k.fx, (v - k.cy) * depth_m / k.fy, depth_m]
    )


def project(p: np.ndarray, k: Intrinsics) -> tuple[float, float, float]:
    """Perspective-project a camera-frame point; no bounds clipping."""
    x, y, z = np.asarray(p, dtype=float)
    if z <= 0:
        raise BehindCamera(f"point has non-positive depth z={z}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy, z)


def masked_point_cloud(depth: np.ndarray, mask: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Deproject every masked pixel with valid depth, in row-major pixel order.

    Returns an (N, 3) float array of camera-frame points in meters.
    """
    if depth.shape != mask.shape:
        raise ValueError(f"depth {depth.shape} and mask {mask.shape} disagree")
    rows, cols = np.nonzero(np.asarray(mask, dtype=bool) & (depth > 0))
    if rows.size == 0:
        raise EmptyCloud("mask contains no pixel with valid depth")
    z = depth[rows, cols].astype(float) / DEPTH_SCALE
    x = (cols - k.cx) * z / k.fx
    y = (rows - k.cy) * z / k.fy
    return np.column_stack([x, y, z])


def to_robot_frame(
    position: np.ndarray, rotation: np.ndarray, e: Extrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Re-express a camera-frame pose in the robot-base frame."""
    t = e.camera_to_robot
    return t.apply(position), t.rotation @ np.asarray(rotation, dtype=float)


# --- image file I/O ---------------------------------------------------------


def load_rgb(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"))
    return arr.astype(np.uint8)


def save_rgb(rgb: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def load_depth(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise ValueError(f"depth image {path} is not single-channel")
    return arr.astype(np.uint16)


def save_depth(depth_mm: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(depth_mm, dtype=np.uint16)).save(path)


def load_mask(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return arr > 0


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)
