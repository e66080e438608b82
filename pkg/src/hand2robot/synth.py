"""Procedural pinch-grasp demo generator with exact ground-truth actions.

Builds a synthetic hand (21 keypoints plus a 778-vertex blob mesh in a
shared local frame), moves it along a smooth grasp path, renders its depth
against a flat background, and writes a complete input demo directory. The
keypoint/mesh files carry a deliberately perturbed pose (mimicking a
monocular estimator's absolute-pose error) while the depth image shows the
true pose, so the registration stage has real work to do. Ground-truth
actions are computed analytically and saved alongside for tests.

Local hand frame: the grasp midpoint is the origin, the pinch plane is
x = 0 (wrist, thumb, and index all lie in it), and the thumb runs along +z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Extrinsics, Intrinsics, save_depth, save_mask, save_rgb
from .compositor import RenderLayer, rasterize_mesh
from .geometry import RigidTransform, rotation_about_axis
from .handpose import HandKeypoints, HandMesh, save_keypoints, save_mesh_vertices
from .meshes import TriangleMesh, cylinder_mesh, uv_sphere_mesh

HAND_COLOR = (198, 158, 132)
WALL_DEPTH_MM = 1200
WALL_SHADES = (86, 82, 78), (132, 128, 122)

# Index finger built tip-backward: per-bone (length, in-plane angle from +z).
_INDEX_BONES = [(0.038, np.deg2rad(10)), (0.032, np.deg2rad(14)), (0.028, np.deg2rad(18))]
_THUMB_Z = (-0.09, -0.06, -0.03, 0.0)
_WRIST_LOCAL = np.array([0.0, 0.005, -0.16])


def _plane_dir(angle: float) -> np.ndarray:
    """Unit vector in the pinch plane, `angle` radians from +z toward -y."""
    return np.array([0.0, -np.sin(angle), np.cos(angle)])


def pinch_hand_keypoints(opening: float) -> np.ndarray:
    """(21, 3) local keypoints for a pinch at the given fingertip distance."""
    pts = np.zeros((21, 3))
    pts[0] = _WRIST_LOCAL
    for i, z in enumerate(_THUMB_Z):
        pts[1 + i] = [0.0, -opening / 2.0, z]
    cursor = np.array([0.0, opening / 2.0, 0.0])
    pts[8] = cursor
    for i, (length, angle) in enumerate(reversed(_INDEX_BONES)):
        cursor = cursor - length * _plane_dir(angle)
        pts[7 - i] = cursor
    # Curled filler fingers off-plane; they carry no action information.
    for f, y0 in enumerate((0.030, 0.012, -0.006)):
        mcp = np.array([0.020, y0, -0.095])
        step = np.array([0.012, -0.002, 0.026])
        for j in range(4):
            pts[9 + 4 * f + j] = mcp + j * step
    return pts


def pinch_hand_mesh(opening: float) -> TriangleMesh:
    """778-vertex blob mesh consistent with pinch_hand_keypoints.

    The splayed filler fingers and anisotropic palm give the registration
    stage enough rotational structure to lock all three axes.
    """
    palm = uv_sphere_mesh(
        (0.012, 0.005, -0.105), (0.020, 0.044, 0.050), rows=14, cols=35, color=HAND_COLOR
    )
    thumb = cylinder_mesh(
        (0.0, -opening / 2.0, -0.095),
        (0.0, -opening / 2.0, 0.004),
        0.0095,
        segments=10,
        rings=9,
        color=HAND_COLOR,
    )
    index = cylinder_mesh(
        (0.0, opening / 2.0 + 0.024, -0.10),
        (0.0, opening / 2.0 + 0.002, 0.004),
        0.0085,
        segments=10,
        rings=9,
        color=HAND_COLOR,
    )
    parts = [palm, thumb, index]
    splay = (
        np.array([0.016, -0.004, 0.020]),
        np.array([0.019, 0.000, 0.014]),
        np.array([0.017, 0.004, 0.008]),
    )
    for step, y0 in zip(splay, (0.032, 0.010, -0.012)):
        mcp = np.array([0.018, y0, -0.090])
        parts.append(
            cylinder_mesh(mcp, mcp + 3.2 * step, 0.008, segments=8, rings=4, color=HAND_COLOR)
        )
    verts = np.vstack([p.vertices for p in parts])
    faces, offset = [], 0
    for p in parts:
        faces.append(p.faces + offset)
        offset += p.vertices.shape[0]
    mesh = TriangleMesh(verts, np.vstack(faces), HAND_COLOR)
    assert mesh.vertices.shape[0] == 778, mesh.vertices.shape
    return mesh


def ground_truth_action(
    pose: RigidTransform, opening: float, extrinsics: Extrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic robot-frame (position, rotation matrix) for a hand pose.

    Mirrors the documented action conventions without calling the fitting
    code: the pinch plane is exactly x = 0 locally (normal = rotated local
    x, sign toward the camera origin) and the thumb line is exactly local +z.
    """
    local_pts = pinch_hand_keypoints(opening)
    pinch_centroid = pose.apply_many(local_pts[1:9]).mean(axis=0)
    normal = pose.rotation[:, 0].copy()
    facing = normal @ -pinch_centroid
    if abs(facing) < 1e-12:
        if normal[int(np.argmax(np.abs(normal)))] < 0:
            normal = -normal
    elif facing < 0:
        normal = -normal
    z_axis = pose.rotation[:, 2]
    rot_cam = np.column_stack([normal, np.cross(z_axis, normal), z_axis])
    c2r = extrinsics.camera_to_robot
    return c2r.apply(pose.translation), c2r.rotation @ rot_cam


@dataclass(frozen=True)
class SynthDemoParams:
    n_frames: int = 100
    width: int = 320
    height: int = 240
    seed: int = 7
    fps: float = 30.0
    max_rot_error: float = np.deg2rad(2.5)  # injected estimator pose error
    max_xy_error: float = 0.007
    max_z_error: float = 0.012
    open_width: float = 0.07
    closed_width: float = 0.022


def default_intrinsics(params: SynthDemoParams) -> Intrinsics:
    # Narrow FOV keeps the depth pixel pitch near 1 mm at the working
    # distance, which the registration accuracy target needs.
    return Intrinsics(
        fx=520.0,
        fy=520.0,
        cx=(params.width - 1) / 2.0,
        cy=(params.height - 1) / 2.0,
        width=params.width,
        height=params.height,
    )


def default_extrinsics() -> Extrinsics:
    # Camera axes (x right, y down, z forward) to robot base (x forward,
    # y left, z up); base sits 0.20 m behind and 0.45 m below the camera.
    rot = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return Extrinsics(
        RigidTransform(rotation=rot, translation=np.array([-0.20, 0.0, 0.45]))
    )


def _base_hand_orientation() -> np.ndarray:
    # Thumb (local +z) pointing mostly along camera +y (downward) and away
    # from the camera, i.e. a down-forward approach in the robot frame;
    # pinch plane normal roughly camera-horizontal.
    return rotation_about_axis([1.0, 0.0, 0.0], np.deg2rad(-70)) @ rotation_about_axis(
        [0.0, 0.0, 1.0], np.deg2rad(12)
    )


def hand_pose(s: float) -> RigidTransform:
    """True camera-frame hand pose along the demo path, s in [0, 1]."""
    pos = np.array(
        [
            0.022 * np.sin(2 * np.pi * 0.7 * s),
            0.074 + 0.016 * np.cos(2 * np.pi * 0.5 * s),
            0.54 + 0.025 * np.sin(2 * np.pi * 0.3 * s + 0.4),
        ]
    )
    wobble = rotation_about_axis([0.3, 1.0, 0.2], 0.18 * np.sin(2 * np.pi * 0.4 * s))
    return RigidTransform(rotation=wobble @ _base_hand_orientation(), translation=pos)


def opening_profile(s: float, open_w: float, closed_w: float) -> float:
    """Open, close for the grasp, reopen; smooth cosine ramps."""
    if s < 0.2:
        blend = 0.0
    elif s < 0.45:
        blend = 0.5 - 0.5 * np.cos(np.pi * (s - 0.2) / 0.25)
    elif s < 0.75:
        blend = 1.0
    else:
        blend = 0.5 + 0.5 * np.cos(np.pi * (s - 0.75) / 0.25)
    return open_w + (closed_w - open_w) * blend


def _estimator_error(rng: np.random.Generator, params: SynthDemoParams) -> RigidTransform:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-params.max_rot_error, params.max_rot_error)
    trans = np.array(
        [
            rng.uniform(-params.max_xy_error, params.max_xy_error),
            rng.uniform(-params.max_xy_error, params.max_xy_error),
            rng.uniform(-params.max_z_error, params.max_z_error),
        ]
    )
    return RigidTransform(rotation=rotation_about_axis(axis, angle), translation=trans)


def _background(params: SynthDemoParams) -> tuple[np.ndarray, np.ndarray]:
    h, w = params.height, params.width
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    checker = ((rows // 24) + (cols // 24)) % 2
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for c in range(3):
        rgb[..., c] = np.where(checker == 0, WALL_SHADES[0][c], WALL_SHADES[1][c])
    depth = np.full((h, w), WALL_DEPTH_MM, dtype=np.uint16)
    holes = (rows * w + cols) % 97 == 0  # sparse missing-depth pixels
    depth[holes] = 0
    return rgb, depth


def generate_demo(
    out_dir: str | Path,
    params: SynthDemoParams | None = None,
    demo_id: str = "synth0",
) -> Path:
    """Write a complete synthetic input demo; returns its directory.

    Layout: rgb/%06d.png, depth/%06d.png (16-bit mm), mask/%06d.png,
    keypoints/%06d.json, verts/%06d.bin, meta.json. A ground_truth.json
    sidecar holds per-frame analytic actions for test oracles (it is not
    part of the input contract).
    """
    params = params or SynthDemoParams()
    demo_dir = Path(out_dir) / f"demo_{demo_id}"
    for sub in ("rgb", "depth", "mask", "keypoints", "verts"):
        (demo_dir / sub).mkdir(parents=True, exist_ok=True)
    k = default_intrinsics(params)
    extrinsics = default_extrinsics()
    rng = np.random.default_rng(params.seed)
    bg_rgb, bg_depth = _background(params)

    timestamps = []
    truth = []
    for i in range(params.n_frames):
        s = i / max(params.n_frames - 1, 1)
        opening = opening_profile(s, params.open_width, params.closed_width)
        pose = hand_pose(s)
        kp_local = pinch_hand_keypoints(opening)
        mesh_local = pinch_hand_mesh(opening)

        layer = RenderLayer.empty(k.width, k.height)
        rasterize_mesh(layer, mesh_local.transformed(pose), k)
        depth = bg_depth.copy()
        rgb = bg_rgb.copy()
        hand_px = layer.mask
        depth[hand_px] = np.clip(
            np.rint(layer.depth[hand_px] * 1000.0), 1, 65535
        ).astype(np.uint16)
        rgb[hand_px] = layer.rgb[hand_px]

        err = _estimator_error(rng, params)
        est = err.inverse()
        kp_est = HandKeypoints(est.apply_many(pose.apply_many(kp_local)))
        verts_est = HandMesh(est.apply_many(pose.apply_many(mesh_local.vertices)))

        stem = f"{i:06d}"
        save_rgb(rgb, demo_dir / "rgb" / f"{stem}.png")
        save_depth(depth, demo_dir / "depth" / f"{stem}.png")
        save_mask(hand_px, demo_dir / "mask" / f"{stem}.png")
        save_keypoints(kp_est, demo_dir / "keypoints" / f"{stem}.json")
        save_mesh_vertices(verts_est, demo_dir / "verts" / f"{stem}.bin")

        timestamps.append(i / params.fps)
        p_robot, rot_robot = ground_truth_action(pose, opening, extrinsics)
        truth.append(
            {
                "frame": i,
                "p": p_robot.tolist(),
                "rotation": rot_robot.tolist(),
                "opening_m": opening,
            }
        )

    meta = {
        "demo_id": demo_id,
        "intrinsics": k.to_dict(),
        "extrinsics_camera_to_robot": extrinsics.camera_to_robot.as_matrix().tolist(),
        "timestamps": timestamps,
    }
    with open(demo_dir / "meta.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
    with open(demo_dir / "ground_truth.json", "w") as f:
        json.dump(truth, f)
    return demo_dir


def fixture_config(chain_path: str | Path, output_path: str | Path) -> "PipelineConfig":
    """Pipeline config tuned for the synthetic fixture demos."""
    from .config import AugmentationParams, PipelineConfig
    from .models import DEFAULT_HOME
    from .registration import IcpParams

    return PipelineConfig(
        chain_path=str(chain_path),
        output_path=str(output_path),
        home_config=DEFAULT_HOME,
        icp=IcpParams(
            max_iterations=80,
            convergence_eps=1e-8,
            trim_distance=0.002,
            min_correspondences=50,
            adaptive_trim=True,
        ),
        augmentation=AugmentationParams(n_variants=1, max_shift_x=0.20, rng_seed=0),
    )


def make_fixture(
    root: str | Path,
    params: SynthDemoParams | None = None,
    demo_id: str = "synth0",
) -> tuple[Path, Path, Path]:
    """Demo directory + robot model + config file under `root`.

    Returns (demo_dir, chain_path, config_path); the config's output path is
    root/out.
    """
    from .config import write_config
    from .models import export_default_chain

    root = Path(root)
    demo_dir = generate_demo(root, params=params, demo_id=demo_id)
    chain_path = export_default_chain(root / "robot" / "chain.toml")
    cfg = fixture_config(chain_path, root / "out")
    config_path = root / "config.toml"
    write_config(cfg, config_path)
    return demo_dir, chain_path, config_path
