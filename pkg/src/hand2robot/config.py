"""Pipeline configuration: one TOML file, every tunable default a named key."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .actions import GripperCalibration
from .compositor import EditMode
from .registration import IcpParams
from .robot import IkParams


@dataclass(frozen=True)
class AugmentationParams:
    n_variants: int = 1
    max_shift_x: float = 0.20  # m, uniform base shift along robot x
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_variants < 1:
            raise ValueError("n_variants must be >= 1")
        if self.max_shift_x < 0:
            raise ValueError("max_shift_x must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    chain_path: str = ""
    output_path: str = "out"
    edit_mode: EditMode = EditMode.INPAINT_FMM
    # Input RGB already arm-removed by an external (high-quality) inpainter;
    # skips the in-pipeline removal step but still overlays the robot.
    pre_edited: bool = False
    invalid_frame_threshold: float = 0.5
    mesh_downsample_max: int = 2000
    occlusion_eps: float = 0.005
    mask_dilation: int = 5
    inpaint_radius: int = 5
    flexion_min_deg: float = -5.0
    flexion_max_deg: float = 115.0
    home_config: tuple[float, ...] | None = None
    icp: IcpParams = field(default_factory=IcpParams)
    ik: IkParams = field(default_factory=IkParams)
    gripper: GripperCalibration = field(default_factory=GripperCalibration)
    augmentation: AugmentationParams = field(default_factory=AugmentationParams)

    def to_dict(self) -> dict:
        return {
            "pipeline": {
                "edit_mode": self.edit_mode.value,
                "pre_edited": self.pre_edited,
                "invalid_frame_threshold": self.invalid_frame_threshold,
                "mesh_downsample_max": self.mesh_downsample_max,
            },
            "icp": {
                "max_iterations": self.icp.max_iterations,
                "convergence_eps": self.icp.convergence_eps,
                "trim_distance": self.icp.trim_distance,
                "min_correspondences": self.icp.min_correspondences,
                "adaptive_trim": self.icp.adaptive_trim,
            },
            "ik": {
                "damping": self.ik.damping,
                "max_iterations": self.ik.max_iterations,
                "pos_tol": self.ik.pos_tol,
                "rot_tol_deg": float(np.rad2deg(self.ik.rot_tol)),
                "step_scale": self.ik.step_scale,
            },
            "gripper": {
                "max_width": self.gripper.max_width,
                "close_percentile": self.gripper.close_percentile,
            },
            "joint_limits": {
                "flexion_min_deg": self.flexion_min_deg,
                "flexion_max_deg": self.flexion_max_deg,
            },
            "compositor": {
                "occlusion_eps": self.occlusion_eps,
                "mask_dilation": self.mask_dilation,
                "inpaint_radius": self.inpaint_radius,
            },
            "augmentation": {
                "n_variants": self.augmentation.n_variants,
                "max_shift_x": self.augmentation.max_shift_x,
                "rng_seed": self.augmentation.rng_seed,
            },
            "robot": {
                "chain": self.chain_path,
                **({"home_config": list(self.home_config)} if self.home_config else {}),
            },
            "output": {"path": self.output_path},
        }

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]

    def to_toml(self) -> str:
        lines: list[str] = []
        for section, table in self.to_dict().items():
            lines.append(f"[{section}]")
            for key, value in table.items():
                if isinstance(value, bool):
                    lines.append(f"{key} = {'true' if value else 'false'}")
                elif isinstance(value, str):
                    lines.append(f'{key} = "{value}"')
                elif isinstance(value, list):
                    lines.append(f"{key} = [{', '.join(repr(float(v)) for v in value)}]")
                elif isinstance(value, int):
                    lines.append(f"{key} = {value}")
                else:
                    lines.append(f"{key} = {float(value)!r}")
            lines.append("")
        return "\n".join(lines)


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a config TOML; the chain path resolves relative to the file."""
    path = Path(path)
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    pipe = doc.get("pipeline", {})
    icp_t = doc.get("icp", {})
    ik_t = doc.get("ik", {})
    grip = doc.get("gripper", {})
    jl = doc.get("joint_limits", {})
    comp = doc.get("compositor", {})
    aug = doc.get("augmentation", {})
    robot = doc.get("robot", {})
    out = doc.get("output", {})

    chain = robot.get("chain", "")
    if chain and not Path(chain).is_absolute():
        chain = str((path.parent / chain).resolve())
    home = robot.get("home_config")
    return PipelineConfig(
        chain_path=chain,
        output_path=out.get("path", "out"),
        edit_mode=EditMode(pipe.get("edit_mode", "inpaint")),
        pre_edited=bool(pipe.get("pre_edited", False)),
        invalid_frame_threshold=float(pipe.get("invalid_frame_threshold", 0.5)),
        mesh_downsample_max=int(pipe.get("mesh_downsample_max", 2000)),
        occlusion_eps=float(comp.get("occlusion_eps", 0.005)),
        mask_dilation=int(comp.get("mask_dilation", 5)),
        inpaint_radius=int(comp.get("inpaint_radius", 5)),
        flexion_min_deg=float(jl.get("flexion_min_deg", -5.0)),
        flexion_max_deg=float(jl.get("flexion_max_deg", 115.0)),
        home_config=tuple(float(x) for x in home) if home is not None else None,
        icp=IcpParams(
            max_iterations=int(icp_t.get("max_iterations", 50)),
            convergence_eps=float(icp_t.get("convergence_eps", 1e-6)),
            trim_distance=float(icp_t.get("trim_distance", 0.02)),
            min_correspondences=int(icp_t.get("min_correspondences", 50)),
            adaptive_trim=bool(icp_t.get("adaptive_trim", True)),
        ),
        ik=IkParams(
            damping=float(ik_t.get("damping", 0.01)),
            max_iterations=int(ik_t.get("max_iterations", 200)),
            pos_tol=float(ik_t.get("pos_tol", 1e-3)),
            rot_tol=float(np.deg2rad(ik_t.get("rot_tol_deg", 0.5))),
            step_scale=float(ik_t.get("step_scale", 1.0)),
        ),
        gripper=GripperCalibration(
            max_width=float(grip.get("max_width", 0.08)),
            close_percentile=float(grip.get("close_percentile", 20.0)),
        ),
        augmentation=AugmentationParams(
            n_variants=int(aug.get("n_variants", 1)),
            max_shift_x=float(aug.get("max_shift_x", 0.20)),
            rng_seed=int(aug.get("rng_seed", 0)),
        ),
    )


def write_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_toml())
