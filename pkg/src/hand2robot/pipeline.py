"""Per-demo processing: refine, extract actions, IK, render, edit, composite.

Frames that fail (empty cloud, starved registration, degenerate geometry,
unconverged IK) are flagged invalid and carried through without an image;
a demo aborts only when the invalid fraction exceeds the configured
threshold. Augmentation variants re-express actions in shifted base frames;
the camera-frame refinement is computed once and shared across variants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import (
    GripperCalibration,
    RobotAction,
    Trajectory,
    extract_action,
    fingertip_distance,
    postprocess_gripper,
    raw_gripper_width,
    target_orientation,
    target_position,
)
from .camera import (
    EmptyCloud,
    Extrinsics,
    Intrinsics,
    load_depth,
    load_mask,
    load_rgb,
    masked_point_cloud,
)
from .compositor import EditMode, composite, dilate_mask, inpaint_fmm, mask_out, render_robot
from .config import PipelineConfig
from .geometry import DegenerateGeometry, RigidTransform, encode_rot6d
from .handpose import HandKeypoints, JointLimits, constrain_finger_joints, load_keypoints, load_mesh_vertices
from .registration import IcpResult, icp, stride_downsample
from .robot import IkSolution, KinematicChain, inverse_kinematics, load_chain


class FrameInvalid(Exception):
    def __init__(self, frame_index: int, reason: str):
        super().__init__(f"frame {frame_index}: {reason}")
        self.frame_index = frame_index
        self.reason = reason


class DemoInvalid(Exception):
    pass


@dataclass(frozen=True)
class FrameAssets:
    rgb: Path
    depth: Path
    mask: Path
    keypoints: Path
    verts: Path
    timestamp: float


@dataclass(frozen=True)
class DemoRecord:
    demo_id: str
    frames: tuple[FrameAssets, ...]
    intrinsics: Intrinsics
    extrinsics: Extrinsics


def load_demo(demo_dir: str | Path) -> DemoRecord:
    """Read a demo directory laid out as rgb/depth/mask/keypoints/verts + meta.json."""
    demo_dir = Path(demo_dir)
    meta_path = demo_dir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{demo_dir}: missing meta.json")
    with open(meta_path) as f:
        meta = json.load(f)
    intrinsics = Intrinsics.from_dict(meta["intrinsics"])
    extrinsics = Extrinsics(
        RigidTransform.from_matrix(np.asarray(meta["extrinsics_camera_to_robot"]))
    )
    timestamps = [float(t) for t in meta["timestamps"]]
    if any(b <= a for a, b in zip(timestamps, timestamps[1:])):
        raise ValueError(f"{demo_dir}: timestamps are not strictly increasing")
    frames = []
    for i, t in enumerate(timestamps):
        stem = f"{i:06d}"
        assets = FrameAssets(
            rgb=demo_dir / "rgb" / f"{stem}.png",
            depth=demo_dir / "depth" / f"{stem}.png",
            mask=demo_dir / "mask" / f"{stem}.png",
            keypoints=demo_dir / "keypoints" / f"{stem}.json",
            verts=demo_dir / "verts" / f"{stem}.bin",
            timestamp=t,
        )
        for p in (assets.rgb, assets.depth, assets.mask, assets.keypoints, assets.verts):
            if not p.exists():
                raise FileNotFoundError(f"{demo_dir}: missing frame asset {p}")
        frames.append(assets)
    demo_id = meta.get("demo_id", demo_dir.name.removeprefix("demo_"))
    return DemoRecord(demo_id, tuple(frames), intrinsics, extrinsics)


@dataclass
class RefinedFrame:
    """Camera-frame per-frame result, shared by all augmentation variants."""

    index: int
    timestamp: float
    valid: bool
    reason: str = ""
    keypoints: HandKeypoints | None = None
    icp_result: IcpResult | None = None
    position_cam: np.ndarray | None = None
    rotation_cam: np.ndarray | None = None
    raw_width: float = 0.0
    gripper_raw: float = 0.0
    skipped_joints: tuple[str, ...] = ()


def front_shell(vertices: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Approximately self-visible subset of a camera-frame vertex set.

    The depth cloud only sees the front surface, so registering back-surface
    vertices against it would bias a point-to-point solve toward the camera.
    Vertices are binned on an image grid at their own sampling scale (median
    nearest-neighbor spacing) and only those within that spacing of their
    bin's nearest depth survive.
    """
    from scipy.spatial import cKDTree

    verts = np.asarray(vertices, dtype=float)
    verts = verts[verts[:, 2] > 0]
    if verts.shape[0] < 4:
        return verts
    nn_dist, _ = cKDTree(verts).query(verts, k=2)
    spacing = float(np.median(nn_dist[:, 1]))
    z = verts[:, 2]
    bin_px = max(1.0, k.fx * 1.5 * spacing / float(np.median(z)))
    u = np.floor((k.fx * verts[:, 0] / z + k.cx) / bin_px).astype(np.int64)
    v = np.floor((k.fy * verts[:, 1] / z + k.cy) / bin_px).astype(np.int64)
    key = (v - v.min()) * (u.max() - u.min() + 1) + (u - u.min())
    order = np.argsort(key, kind="stable")
    key_sorted, z_sorted = key[order], z[order]
    starts = np.r_[0, np.nonzero(key_sorted[1:] != key_sorted[:-1])[0] + 1]
    min_z = np.minimum.reduceat(z_sorted, starts)
    bin_of = np.cumsum(np.r_[0, key_sorted[1:] != key_sorted[:-1]])
    keep_sorted = z_sorted <= min_z[bin_of] + 1.5 * spacing
    keep = np.zeros(verts.shape[0], dtype=bool)
    keep[order[keep_sorted]] = True
    return verts[keep]


def refine_hand_pose(
    depth: np.ndarray,
    mask: np.ndarray,
    mesh_vertices: np.ndarray,
    keypoints: HandKeypoints,
    k: Intrinsics,
    prev_transform: RigidTransform | None,
    cfg: PipelineConfig,
    frame_index: int = 0,
) -> tuple[HandKeypoints, IcpResult, tuple[str, ...]]:
    """Depth-align the predicted hand and constrain its finger joints.

    Builds the partial hand cloud from the masked depth, registers the
    predicted mesh vertices (front shell, downsampled) to it warm-started
    from the previous frame, applies the found transform to the keypoints,
    then enforces the hinge constraints.
    """
    try:
        cloud = masked_point_cloud(depth, mask, k)
    except EmptyCloud as exc:
        raise FrameInvalid(frame_index, str(exc)) from exc
    source = stride_downsample(front_shell(mesh_vertices, k), cfg.mesh_downsample_max)
    result = icp(source, cloud, init=prev_transform, params=cfg.icp)
    if result.failed:
        raise FrameInvalid(frame_index, "registration starved of correspondences")
    refined = keypoints.transformed(result.transform)
    limits = JointLimits.uniform(cfg.flexion_min_deg, cfg.flexion_max_deg)
    outcome = constrain_finger_joints(refined, limits)
    return outcome.keypoints, result, outcome.skipped


def refine_demo(demo: DemoRecord, cfg: PipelineConfig) -> list[RefinedFrame]:
    """Stage 1: per-frame refinement and camera-frame action geometry."""
    prev_transform: RigidTransform | None = None
    out: list[RefinedFrame] = []
    for i, assets in enumerate(demo.frames):
        frame = RefinedFrame(index=i, timestamp=assets.timestamp, valid=False)
        try:
            depth = load_depth(assets.depth)
            mask = load_mask(assets.mask)
            if depth.shape != (demo.intrinsics.height, demo.intrinsics.width):
                raise FrameInvalid(i, f"depth shape {depth.shape} mismatches intrinsics")
            if mask.shape != depth.shape:
                raise FrameInvalid(i, "mask shape mismatches depth")
            kps = load_keypoints(assets.keypoints)
            verts = load_mesh_vertices(assets.verts)
            refined, icp_res, skipped = refine_hand_pose(
                depth, mask, verts.vertices, kps, demo.intrinsics, prev_transform, cfg, i
            )
            frame.keypoints = refined
            frame.icp_result = icp_res
            frame.skipped_joints = skipped
            frame.position_cam = target_position(refined)
            frame.rotation_cam = target_orientation(refined)
            frame.raw_width = fingertip_distance(refined)
            frame.gripper_raw = raw_gripper_width(refined, cfg.gripper)
            frame.valid = True
            prev_transform = icp_res.transform  # temporal warm start
        except FrameInvalid as exc:
            frame.reason = exc.reason
        except (DegenerateGeometry, ValueError) as exc:
            frame.reason = str(exc)
        out.append(frame)
    n_invalid = sum(not f.valid for f in out)
    if out and n_invalid / len(out) > cfg.invalid_frame_threshold:
        raise DemoInvalid(
            f"demo {demo.demo_id}: {n_invalid}/{len(out)} frames invalid "
            f"(threshold {cfg.invalid_frame_threshold})"
        )
    return out


@dataclass(frozen=True)
class Provenance:
    demo_id: str
    frame_index: int
    variant: int
    base_shift: float  # m along the robot-base x-axis


@dataclass
class EditedSample:
    image: np.ndarray | None
    action: RobotAction | None
    valid: bool
    provenance: Provenance
    timestamp: float
    raw_width: float = 0.0
    reason: str = ""
    ik: IkSolution | None = None


@dataclass
class VariantResult:
    variant: int
    base_shift: float
    extrinsics: Extrinsics
    samples: list[EditedSample]


def _variant_extrinsics(base: Extrinsics, shift: float) -> Extrinsics:
    t = base.camera_to_robot
    return Extrinsics(
        RigidTransform(
            rotation=t.rotation,
            translation=t.translation - np.array([shift, 0.0, 0.0]),
        )
    )


def _edit_frame(rgb: np.ndarray, mask: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if cfg.pre_edited or cfg.edit_mode is EditMode.NO_EDIT:
        return rgb
    grown = dilate_mask(mask, cfg.mask_dilation)
    if cfg.edit_mode is EditMode.INPAINT_FMM:
        return inpaint_fmm(rgb, grown, cfg.inpaint_radius)
    return mask_out(rgb, grown)


def render_variant(
    demo: DemoRecord,
    refined: list[RefinedFrame],
    cfg: PipelineConfig,
    chain: KinematicChain,
    variant: int = 0,
    base_shift: float = 0.0,
    render_images: bool = True,
) -> VariantResult:
    """Stage 2: robot-frame actions, gripper post-pass, IK, render, composite.

    Variant positions relate to variant 0 exactly by the base shift:
    p_variant = p_0 - (shift, 0, 0); orientations are unchanged.
    """
    extrinsics = _variant_extrinsics(demo.extrinsics, base_shift)
    shift_vec = np.array([base_shift, 0.0, 0.0])
    traj = Trajectory(demo_id=demo.demo_id)
    rotations: list[np.ndarray | None] = []
    for frame in refined:
        if frame.valid:
            p0 = demo.extrinsics.camera_to_robot.apply(frame.position_cam)
            rot = demo.extrinsics.camera_to_robot.rotation @ frame.rotation_cam
            action = RobotAction(
                position=p0 - shift_vec,
                rot6d=encode_rot6d(rot),
                gripper=frame.gripper_raw,
            )
            traj.append(frame.timestamp, action, True, frame.raw_width)
            rotations.append(rot)
        else:
            traj.append(frame.timestamp, None, False, 0.0)
            rotations.append(None)
    traj = postprocess_gripper(traj, cfg.gripper)

    home = np.asarray(cfg.home_config, dtype=float) if cfg.home_config else np.zeros(chain.dof)
    q_prev = chain.clamp(home)
    samples: list[EditedSample] = []
    for frame, action, rot in zip(refined, traj.actions, rotations):
        prov = Provenance(demo.demo_id, frame.index, variant, base_shift)
        if not frame.valid or action is None:
            samples.append(
                EditedSample(None, None, False, prov, frame.timestamp, reason=frame.reason)
            )
            continue
        target = RigidTransform(rotation=rot, translation=action.position)
        sol = inverse_kinematics(chain, target, q_prev, cfg.ik)
        if not sol.converged:
            samples.append(
                EditedSample(
                    None, None, False, prov, frame.timestamp,
                    raw_width=frame.raw_width, reason="inverse kinematics did not converge",
                    ik=sol,
                )
            )
            continue
        q_prev = sol.q
        image = None
        if render_images:
            assets = demo.frames[frame.index]
            rgb = load_rgb(assets.rgb)
            depth = load_depth(assets.depth)
            mask = load_mask(assets.mask)
            edited = _edit_frame(rgb, mask, cfg)
            # Rendering uses the pre-percentile width: the human fingers in
            # the source frame were not snapped closed either.
            layer = render_robot(chain, sol.q, frame.gripper_raw, demo.intrinsics, extrinsics)
            scene_depth = depth.copy()
            scene_depth[dilate_mask(mask, cfg.mask_dilation)] = 0  # removed arm no longer occludes
            image = composite(edited, scene_depth, layer, cfg.occlusion_eps)
        samples.append(
            EditedSample(
                image, action, True, prov, frame.timestamp,
                raw_width=frame.raw_width, ik=sol,
            )
        )
    return VariantResult(variant, base_shift, extrinsics, samples)


def process_demo(
    demo: DemoRecord,
    cfg: PipelineConfig,
    chain: KinematicChain | None = None,
    render_images: bool = True,
) -> VariantResult:
    """Full single-variant pipeline for one demo (base shift 0)."""
    chain = chain or load_chain(cfg.chain_path)
    refined = refine_demo(demo, cfg)
    return render_variant(demo, refined, cfg, chain, render_images=render_images)


def variant_shifts(demo_id: str, cfg: PipelineConfig) -> list[float]:
    """Deterministic per-demo base shifts; variant 0 is always unshifted."""
    import zlib

    aug = cfg.augmentation
    seq = np.random.SeedSequence([aug.rng_seed, zlib.crc32(demo_id.encode())])
    rng = np.random.default_rng(seq)
    shifts = [0.0]
    for _ in range(aug.n_variants - 1):
        shifts.append(float(rng.uniform(-aug.max_shift_x, aug.max_shift_x)))
    return shifts


def augment_extrinsics(
    demo: DemoRecord,
    cfg: PipelineConfig,
    chain: KinematicChain | None = None,
    render_images: bool = True,
) -> list[VariantResult]:
    """Process a demo under n_variants randomly shifted robot bases.

    The camera-frame refinement runs once; each variant re-expresses actions
    in its shifted base frame and runs its own IK and rendering. IK warm
    starts never cross variants.
    """
    chain = chain or load_chain(cfg.chain_path)
    refined = refine_demo(demo, cfg)
    results = []
    for variant, shift in enumerate(variant_shifts(demo.demo_id, cfg)):
        results.append(
            render_variant(
                demo, refined, cfg, chain,
                variant=variant, base_shift=shift, render_images=render_images,
            )
        )
    return results
