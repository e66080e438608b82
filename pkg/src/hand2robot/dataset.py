"""Edited-dataset on-disk format: writer, reader, validator.

Layout:
    out/manifest.json
    out/robot/chain.toml (+ meshes/)
    out/demo_<id>_v<k>/frames/%06d.png      (valid frames only)
    out/demo_<id>_v<k>/actions.jsonl        (one record per frame)
    out/demo_<id>_v<k>/ik.jsonl             (joint solutions, when rendered)
    out/demo_<id>_v<k>/meta.json            (variant, base shift, extrinsics)

Action record: {"t": s, "p": [x,y,z], "r6": [6 floats], "g": g, "valid": bool};
invalid frames carry null p/r6/g and no image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .actions import RobotAction
from .camera import Intrinsics, load_rgb, save_rgb
from .config import PipelineConfig
from .geometry import DegenerateRotation6D, RigidTransform, decode_rot6d, rotation_angle_between
from .pipeline import VariantResult
from .robot import KinematicChain, forward_kinematics, load_chain, write_chain

FORMAT_VERSION = 1


class SchemaError(ValueError):
    pass


def variant_dir_name(demo_id: str, variant: int) -> str:
    return f"demo_{demo_id}_v{variant}"


def write_dataset(
    results_by_demo: dict[str, list[VariantResult]],
    cfg: PipelineConfig,
    chain: KinematicChain,
    camera: Intrinsics,
    out_path: str | Path,
    with_images: bool = True,
) -> Path:
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    write_chain(chain, out / "robot" / "chain.toml")
    demos_index = {}
    for demo_id, variants in results_by_demo.items():
        demos_index[demo_id] = {
            "frames": len(variants[0].samples),
            "variants": [v.variant for v in variants],
            "config_hash": cfg.config_hash(),
        }
        for var in variants:
            vdir = out / variant_dir_name(demo_id, var.variant)
            vdir.mkdir(parents=True, exist_ok=True)
            with open(vdir / "meta.json", "w") as f:
                json.dump(
                    {
                        "variant": var.variant,
                        "base_shift": [var.base_shift, 0.0, 0.0],
                        "extrinsics_camera_to_robot": var.extrinsics.camera_to_robot.as_matrix().tolist(),
                    },
                    f,
                    indent=1,
                    sort_keys=True,
                )
            with open(vdir / "actions.jsonl", "w") as f:
                for s in var.samples:
                    if s.valid and s.action is not None:
                        rec = {
                            "t": s.timestamp,
                            "p": s.action.position.tolist(),
                            "r6": s.action.rot6d.tolist(),
                            "g": s.action.gripper,
                            "valid": True,
                        }
                    else:
                        rec = {"t": s.timestamp, "p": None, "r6": None, "g": None, "valid": False}
                    f.write(json.dumps(rec) + "\n")
            if any(s.ik is not None for s in var.samples):
                with open(vdir / "ik.jsonl", "w") as f:
                    for s in var.samples:
                        if s.ik is None:
                            continue
                        f.write(
                            json.dumps(
                                {
                                    "frame": s.provenance.frame_index,
                                    "q": s.ik.q.tolist(),
                                    "converged": s.ik.converged,
                                    "pos_err": s.ik.pos_err,
                                    "rot_err": s.ik.rot_err,
                                }
                            )
                            + "\n"
                        )
            if with_images:
                frames_dir = vdir / "frames"
                frames_dir.mkdir(exist_ok=True)
                for s in var.samples:
                    if s.valid and s.image is not None:
                        save_rgb(s.image, frames_dir / f"{s.provenance.frame_index:06d}.png")
    manifest = {
        "format_version": FORMAT_VERSION,
        "robot_model": chain.name,
        "robot_chain": "robot/chain.toml",
        "camera": camera.to_dict(),
        "with_images": with_images,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "demos": demos_index,
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return out


def read_manifest(path: str | Path) -> dict:
    manifest_path = Path(path) / "manifest.json"
    if not manifest_path.exists():
        raise SchemaError(f"{path}: missing manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported dataset format version {version}")
    return manifest


def read_dataset(
    path: str | Path, include_invalid: bool = False
) -> tuple[dict, Iterator[dict]]:
    """Manifest plus an iterator over sample dicts in (demo, variant, frame) order."""
    path = Path(path)
    manifest = read_manifest(path)

    def samples() -> Iterator[dict]:
        for demo_id in sorted(manifest["demos"]):
            entry = manifest["demos"][demo_id]
            for variant in entry["variants"]:
                vdir = path / variant_dir_name(demo_id, variant)
                with open(vdir / "actions.jsonl") as f:
                    records = [json.loads(line) for line in f]
                for i, rec in enumerate(records):
                    if not rec["valid"] and not include_invalid:
                        continue
                    sample = {
                        "demo_id": demo_id,
                        "variant": variant,
                        "frame": i,
                        **rec,
                    }
                    frame_png = vdir / "frames" / f"{i:06d}.png"
                    if rec["valid"] and manifest.get("with_images", True):
                        sample["image_path"] = str(frame_png)
                    yield sample

    return manifest, samples()


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    demo_stats: dict[str, dict] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, "demos": self.demo_stats}


def validate_dataset(path: str | Path) -> ValidationReport:
    """Check manifest integrity, action invariants, images, and IK consistency.

    The IK check recomputes the end-effector pose from the stored joint
    solution and compares it against the stored action pose at the
    configured IK tolerances.
    """
    path = Path(path)
    report = ValidationReport()
    try:
        manifest = read_manifest(path)
    except SchemaError as exc:
        report.violations.append(str(exc))
        return report

    cfg_dict = manifest.get("config", {})
    ik_cfg = cfg_dict.get("ik", {})
    pos_tol = float(ik_cfg.get("pos_tol", 1e-3))
    rot_tol = float(np.deg2rad(ik_cfg.get("rot_tol_deg", 0.5)))
    cam = manifest.get("camera", {})
    expect_hw = (int(cam.get("height", 0)), int(cam.get("width", 0)))

    chain = None
    chain_rel = manifest.get("robot_chain")
    if chain_rel:
        chain_path = path / chain_rel
        if chain_path.exists():
            chain = load_chain(chain_path, load_meshes=False)
        else:
            report.violations.append(f"manifest references missing chain file {chain_path}")

    for demo_id, entry in sorted(manifest.get("demos", {}).items()):
        n_frames = entry["frames"]
        variant0_positions: dict[int, np.ndarray] = {}
        for variant in entry["variants"]:
            vdir = path / variant_dir_name(demo_id, variant)
            tag = f"{demo_id} v{variant}"
            actions_path = vdir / "actions.jsonl"
            if not actions_path.exists():
                report.violations.append(f"{tag}: missing {actions_path}")
                continue
            with open(actions_path) as f:
                records = [json.loads(line) for line in f]
            if len(records) != n_frames:
                report.violations.append(
                    f"{tag}: {len(records)} action records, manifest says {n_frames}"
                )
            with open(vdir / "meta.json") as f:
                vmeta = json.load(f)
            base_shift = float(vmeta["base_shift"][0])

            ik_records = {}
            ik_path = vdir / "ik.jsonl"
            if ik_path.exists():
                with open(ik_path) as f:
                    for line in f:
                        rec = json.loads(line)
                        ik_records[rec["frame"]] = rec

            n_valid = 0
            n_closed = 0
            positions = []
            prev_t = -np.inf
            for i, rec in enumerate(records):
                if rec["t"] <= prev_t:
                    report.violations.append(f"{tag}: non-increasing timestamp at frame {i}")
                prev_t = rec["t"]
                if not rec["valid"]:
                    continue
                n_valid += 1
                try:
                    action = RobotAction(
                        position=np.asarray(rec["p"], dtype=float),
                        rot6d=np.asarray(rec["r6"], dtype=float),
                        gripper=float(rec["g"]),
                    )
                except (ValueError, DegenerateRotation6D) as exc:
                    report.violations.append(f"{tag}: frame {i} invalid action: {exc}")
                    continue
                if action.gripper == 0.0:
                    n_closed += 1
                positions.append(action.position)
                if variant == 0:
                    variant0_positions[i] = action.position
                elif i in variant0_positions:
                    expected = variant0_positions[i] - np.array([base_shift, 0.0, 0.0])
                    if not np.array_equal(expected, action.position):
                        report.violations.append(
                            f"{tag}: frame {i} position does not equal variant 0 minus shift"
                        )
                if manifest.get("with_images", True):
                    frame_png = vdir / "frames" / f"{i:06d}.png"
                    if not frame_png.exists():
                        report.violations.append(f"{tag}: missing image {frame_png}")
                    else:
                        img = load_rgb(frame_png)
                        if img.shape[:2] != expect_hw:
                            report.violations.append(
                                f"{tag}: image {frame_png.name} is {img.shape[:2]}, "
                                f"camera says {expect_hw}"
                            )
                if chain is not None and i in ik_records:
                    _, ee = forward_kinematics(chain, np.asarray(ik_records[i]["q"]))
                    pos_err = float(np.linalg.norm(ee.translation - action.position))
                    rot_err = rotation_angle_between(ee.rotation, decode_rot6d(action.rot6d))
                    if ik_records[i]["converged"] and (pos_err > pos_tol or rot_err > rot_tol):
                        report.violations.append(
                            f"{tag}: frame {i} FK of stored joints misses action pose "
                            f"({pos_err * 1000:.2f} mm, {np.rad2deg(rot_err):.2f} deg)"
                        )
            positions = np.asarray(positions) if positions else np.zeros((0, 3))
            stats_key = f"{demo_id}/v{variant}"
            report.demo_stats[stats_key] = {
                "frames": len(records),
                "valid": n_valid,
                "invalid_rate": (len(records) - n_valid) / len(records) if records else 0.0,
                "closed_fraction": n_closed / n_valid if n_valid else 0.0,
                "position_min": positions.min(axis=0).tolist() if len(positions) else None,
                "position_max": positions.max(axis=0).tolist() if len(positions) else None,
            }
    return report
