"""Software rendering of the posed robot and image editing.

Rendering is a deterministic perspective z-buffer rasterizer with flat
Lambertian shading under one fixed directional light; realism is not the
goal, train/test consistency is. Pixel centers sit at integer coordinates
(matching the camera module); coverage is inclusive of triangle edges and
depth ties keep the first-drawn triangle, so output is bit-reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import DEPTH_SCALE, Extrinsics, Intrinsics
from .geometry import RigidTransform
from .meshes import TriangleMesh
from .robot import KinematicChain, finger_poses, forward_kinematics

NEAR_PLANE = 0.01  # m; triangles reaching closer than this are dropped, not clipped

LIGHT_DIR = np.array([-0.3, -0.5, -0.8])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
AMBIENT = 0.35
DIFFUSE = 0.65


class DimensionMismatch(ValueError):
    pass


class EditMode(enum.Enum):
    INPAINT_FMM = "inpaint"
    MASK_ONLY = "mask"
    NO_EDIT = "none"


@dataclass
class RenderLayer:
    """RGB + per-pixel metric depth (+inf where empty) + coverage mask."""

    rgb: np.ndarray
    depth: np.ndarray
    mask: np.ndarray

    @classmethod
    def empty(cls, width: int, height: int) -> "RenderLayer":
        return cls(
            rgb=np.zeros((height, width, 3), dtype=np.uint8),
            depth=np.full((height, width), np.inf),
            mask=np.zeros((height, width), dtype=bool),
        )


def shade_face(color, normal: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    """Flat two-sided Lambertian shade of one camera-frame face."""
    n = np.linalg.norm(normal)
    if n < 1e-15:
        return np.asarray(color, dtype=np.uint8)
    normal = normal / n
    if normal @ centroid > 0:  # orient toward the camera at the origin
        normal = -normal
    intensity = AMBIENT + DIFFUSE * max(0.0, float(normal @ LIGHT_DIR))
    return np.clip(np.rint(np.asarray(color, dtype=float) * intensity), 0, 255).astype(np.uint8)


def rasterize_mesh(layer: RenderLayer, mesh: TriangleMesh, k: Intrinsics) -> None:
    """Rasterize a camera-frame mesh into the layer's z-buffer in place."""
    verts = mesh.vertices
    height, width = layer.depth.shape
    for face in mesh.faces:
        tri = verts[face]
        if np.min(tri[:, 2]) <= NEAR_PLANE:
            continue
        z = tri[:, 2]
        u = k.fx * tri[:, 0] / z + k.cx
        v = k.fy * tri[:, 1] / z + k.cy
        area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
        if area == 0.0:
            continue
        umin = max(int(np.ceil(u.min())), 0)
        umax = min(int(np.floor(u.max())), width - 1)
        vmin = max(int(np.ceil(v.min())), 0)
        vmax = min(int(np.floor(v.max())), height - 1)
        if umin > umax or vmin > vmax:
            continue
        px, py = np.meshgrid(
            np.arange(umin, umax + 1, dtype=float),
            np.arange(vmin, vmax + 1, dtype=float),
        )
        w0 = (u[2] - u[1]) * (py - v[1]) - (v[2] - v[1]) * (px - u[1])
        w1 = (u[0] - u[2]) * (py - v[2]) - (v[0] - v[2]) * (px - u[2])
        w2 = (u[1] - u[0]) * (py - v[0]) - (v[1] - v[0]) * (px - u[0])
        if area < 0:
            w0, w1, w2, area = -w0, -w1, -w2, -area
        covered = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not covered.any():
            continue
        inv_z = (w0 / z[0] + w1 / z[1] + w2 / z[2]) / area
        pix_z = np.where(covered, 1.0 / np.where(inv_z > 0, inv_z, 1.0), np.inf)
        window = layer.depth[vmin : vmax + 1, umin : umax + 1]
        wins = covered & (pix_z < window)
        if not wins.any():
            continue
        color = shade_face(
            mesh.color, np.cross(tri[1] - tri[0], tri[2] - tri[0]), tri.mean(axis=0)
        )
        window[wins] = pix_z[wins]
        layer.rgb[vmin : vmax + 1, umin : umax + 1][wins] = color
        layer.mask[vmin : vmax + 1, umin : umax + 1][wins] = True


def render_robot(
    chain: KinematicChain,
    q: np.ndarray,
    g: float,
    k: Intrinsics,
    e: Extrinsics,
) -> RenderLayer:
    """Render the posed robot (links, base, gripper fingers) in camera frame."""
    layer = RenderLayer.empty(k.width, k.height)
    cam_from_base = e.camera_to_robot.inverse()
    link_poses, ee_pose = forward_kinematics(chain, q)

    def draw(mesh: TriangleMesh | None, pose: RigidTransform):
        if mesh is None:
            return
        rasterize_mesh(layer, mesh.transformed(cam_from_base.compose(pose)), k)

    draw(chain.base_mesh, RigidTransform.identity())
    for joint, pose in zip(chain.joints, link_poses):
        draw(joint.mesh, pose)
    left, right = finger_poses(chain, ee_pose, g)
    draw(chain.gripper.finger_mesh, left)
    draw(chain.gripper.finger_mesh, right)
    return layer


def composite(
    scene_rgb: np.ndarray,
    scene_depth: np.ndarray,
    layer: RenderLayer,
    eps: float = 0.005,
) -> np.ndarray:
    """Overlay the rendered robot with depth-aware occlusion.

    A covered pixel draws the robot iff its depth is within eps in front of
    the scene depth, or the scene depth is missing (0): the embodiment stays
    visible over depth holes.
    """
    scene_rgb = np.asarray(scene_rgb)
    scene_depth = np.asarray(scene_depth)
    if scene_rgb.shape[:2] != scene_depth.shape or scene_depth.shape != layer.depth.shape:
        raise DimensionMismatch(
            f"scene {scene_rgb.shape[:2]}, depth {scene_depth.shape}, "
            f"layer {layer.depth.shape} disagree"
        )
    scene_m = scene_depth.astype(float) / DEPTH_SCALE
    draw = layer.mask & ((layer.depth < scene_m + eps) | (scene_depth == 0))
    out = scene_rgb.copy()
    out[draw] = layer.rgb[draw]
    return out


def mask_out(rgb: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Set masked pixels to black."""
    if rgb.shape[:2] != mask.shape:
        raise DimensionMismatch(f"rgb {rgb.shape[:2]} and mask {mask.shape} disagree")
    out = np.asarray(rgb).copy()
    out[np.asarray(mask, dtype=bool)] = 0
    return out


def dilate_mask(mask: np.ndarray, k: int) -> np.ndarray:
    """Morphological dilation with a (2k+1)^2 square structuring element."""
    if k < 0:
        raise ValueError("dilation size must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if k == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=np.ones((2 * k + 1, 2 * k + 1), dtype=bool))


def _disk_offsets(radius: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    d2 = dy**2 + dx**2
    keep = (d2 > 0) & (d2 <= radius**2)
    return dy[keep], dx[keep], 1.0 / d2[keep].astype(float)


def inpaint_fmm(rgb: np.ndarray, mask: np.ndarray, radius: int = 5) -> np.ndarray:
    """Fill masked pixels in increasing distance-from-boundary order.

    Each masked pixel becomes the 1/d^2-weighted average of the known pixels
    within `radius` (original pixels plus previously filled ones; pixels at
    equal boundary distance fill together from the earlier state). Values
    propagate in float and round once at the end. Pixels outside the mask
    are never touched.
    """
    if radius < 1:
        raise ValueError("inpaint radius must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    if rgb.shape[:2] != mask.shape:
        raise DimensionMismatch(f"rgb {rgb.shape[:2]} and mask {mask.shape} disagree")
    out = np.asarray(rgb, dtype=float).copy()
    if not mask.any():
        return np.asarray(rgb).copy()

    height, width = mask.shape
    dist, (near_r, near_c) = ndimage.distance_transform_edt(mask, return_indices=True)
    known = ~mask
    offs_y, offs_x, offs_w = _disk_offsets(radius)
    masked_dist = dist[mask]
    rows, cols = np.nonzero(mask)
    for level in np.unique(masked_dist):
        sel = masked_dist == level
        pr, pc = rows[sel], cols[sel]
        ny = pr[:, None] + offs_y[None, :]
        nx = pc[:, None] + offs_x[None, :]
        inside = (ny >= 0) & (ny < height) & (nx >= 0) & (nx < width)
        nyc = np.clip(ny, 0, height - 1)
        nxc = np.clip(nx, 0, width - 1)
        usable = inside & known[nyc, nxc]
        weights = np.where(usable, offs_w[None, :], 0.0)
        totals = weights.sum(axis=1)
        values = np.einsum("pn,pnc->pc", weights, out[nyc, nxc])
        have = totals > 0
        out[pr[have], pc[have]] = values[have] / totals[have, None]
        if not have.all():
            # No known neighbor in radius: fall back to the nearest
            # originally-known pixel (from the distance transform).
            miss = ~have
            out[pr[miss], pc[miss]] = np.asarray(rgb, dtype=float)[
                near_r[pr[miss], pc[miss]], near_c[pr[miss], pc[miss]]
            ]
        known[pr, pc] = True
    result = np.asarray(rgb).copy()
    result[mask] = np.clip(np.rint(out[mask]), 0, 255).astype(rgb.dtype)
    return result
