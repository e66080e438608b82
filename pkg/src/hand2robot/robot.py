"""Serial-arm kinematics: FK, geometric Jacobian, damped-least-squares IK.

Chain files are TOML: an array of [[joint]] tables ({axis, origin_xyz,
origin_rpy, limits, mesh, color}), an [end_effector] offset, a [gripper]
table (max_travel, finger mesh), and an optional [base] mesh. The
end-effector frame mirrors the action convention: x = closing direction,
z = approach; fingers displace along +/- x.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import RigidTransform, rotation_about_axis, rotation_log, rpy_to_matrix
from .meshes import TriangleMesh, load_mesh, save_stl


class ConfigLengthMismatch(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class Joint:
    name: str
    origin: RigidTransform  # fixed parent-to-joint transform
    axis: np.ndarray  # unit rotation axis in the joint frame
    limits: tuple[float, float]  # rad
    mesh: TriangleMesh | None = None  # link geometry in this joint's frame

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"joint {self.name}: axis must be unit-norm, got |a|={n}")
        if self.limits[0] >= self.limits[1]:
            raise ValueError(f"joint {self.name}: limits lo must be below hi")
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class GripperModel:
    max_travel: float  # m displacement per finger at g = 1
    finger_mesh: TriangleMesh | None = None

    def __post_init__(self):
        if self.max_travel <= 0:
            raise ValueError("gripper max_travel must be positive")


@dataclass(frozen=True)
class KinematicChain:
    name: str
    joints: tuple[Joint, ...]
    ee_offset: RigidTransform
    gripper: GripperModel
    base_mesh: TriangleMesh | None = None

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("chain needs at least one joint")

    @property
    def dof(self) -> int:
        return len(self.joints)

    def lower_limits(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    def upper_limits(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower_limits(), self.upper_limits())


@dataclass(frozen=True)
class IkParams:
    damping: float = 0.01
    max_iterations: int = 200
    pos_tol: float = 1e-3  # m
    rot_tol: float = np.deg2rad(0.5)  # rad
    step_scale: float = 1.0

    def __post_init__(self):
        if self.damping <= 0 or self.pos_tol <= 0 or self.rot_tol <= 0:
            raise ValueError("damping and tolerances must be positive")


def _check_config(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != chain.dof:
        raise ConfigLengthMismatch(f"config has {q.shape[0]} angles, chain has {chain.dof}")
    return q


def forward_kinematics(
    chain: KinematicChain, q: np.ndarray
) -> tuple[list[RigidTransform], RigidTransform]:
    """Base-frame pose of every joint frame plus the end-effector frame."""
    q = _check_config(chain, q)
    pose = RigidTransform.identity()
    link_poses = []
    for joint, angle in zip(chain.joints, q):
        spin = RigidTransform(rotation=rotation_about_axis(joint.axis, angle))
        pose = pose.compose(joint.origin).compose(spin)
        link_poses.append(pose)
    return link_poses, pose.compose(chain.ee_offset)


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian (6, n): rows 0-2 linear, rows 3-5 angular, base frame."""
    q = _check_config(chain, q)
    link_poses, ee = forward_kinematics(chain, q)
    jac = np.zeros((6, chain.dof))
    for i, (joint, pose) in enumerate(zip(chain.joints, link_poses)):
        axis_world = pose.rotation @ joint.axis
        jac[:3, i] = np.cross(axis_world, ee.translation - pose.translation)
        jac[3:, i] = axis_world
    return jac


def pose_error(current: RigidTransform, target: RigidTransform) -> np.ndarray:
    """6-vector [position error; rotation-vector error] in the base frame."""
    err = np.zeros(6)
    err[:3] = target.translation - current.translation
    err[3:] = rotation_log(target.rotation @ current.rotation.T)
    return err


@dataclass(frozen=True)
class IkSolution:
    q: np.ndarray
    pos_err: float
    rot_err: float
    converged: bool


def inverse_kinematics(
    chain: KinematicChain,
    target: RigidTransform,
    seed: np.ndarray,
    params: IkParams | None = None,
) -> IkSolution:
    """Damped-least-squares IK with joint-limit clamping each step.

    The error norm is non-increasing across accepted iterations: a step that
    increases it is halved until it improves or becomes negligible. Returns
    the best configuration found; converged=False flags an unreachable or
    failed target.
    """
    params = params or IkParams()
    q = chain.clamp(_check_config(chain, seed))
    lam2 = params.damping**2

    def evaluate(qv):
        _, ee = forward_kinematics(chain, qv)
        err = pose_error(ee, target)
        return err, float(np.linalg.norm(err[:3])), float(np.linalg.norm(err[3:]))

    err, pos_err, rot_err = evaluate(q)
    best = IkSolution(q.copy(), pos_err, rot_err, False)
    best_norm = np.linalg.norm(err)
    for _ in range(params.max_iterations):
        if pos_err < params.pos_tol and rot_err < params.rot_tol:
            return IkSolution(q, pos_err, rot_err, True)
        jac = jacobian(chain, q)
        dq = jac.T @ np.linalg.solve(jac @ jac.T + lam2 * np.eye(6), err)
        step = params.step_scale
        err_norm = np.linalg.norm(err)
        improved = False
        while step > 1e-4:
            q_try = chain.clamp(q + step * dq)
            err_try, pos_try, rot_try = evaluate(q_try)
            if np.linalg.norm(err_try) <= err_norm:
                q, err, pos_err, rot_err = q_try, err_try, pos_try, rot_try
                improved = True
                break
            step *= 0.5
        if not improved:
            break  # stuck (singular or at limits); keep best
        if np.linalg.norm(err) < best_norm:
            best = IkSolution(q.copy(), pos_err, rot_err, False)
            best_norm = np.linalg.norm(err)
    if pos_err < params.pos_tol and rot_err < params.rot_tol:
        return IkSolution(q, pos_err, rot_err, True)
    return best


def gripper_joint_from_width(chain: KinematicChain, g: float) -> float:
    """Per-finger displacement (m) for a normalized opening width."""
    if not 0.0 <= g <= 1.0:
        raise OutOfRange(f"gripper value {g} outside [0, 1]")
    return g * chain.gripper.max_travel


def finger_poses(chain: KinematicChain, ee_pose: RigidTransform, g: float):
    """Base-frame poses of the two gripper fingers at opening g.

    Fingers sit symmetrically along the end-effector x-axis (the closing
    direction); the second finger is spun half a turn about the approach
    axis so one finger mesh serves both sides.
    """
    d = gripper_joint_from_width(chain, g)
    left = ee_pose.compose(RigidTransform(translation=np.array([d, 0.0, 0.0])))
    spin = RigidTransform(rotation=rotation_about_axis([0.0, 0.0, 1.0], np.pi))
    right = ee_pose.compose(
        RigidTransform(translation=np.array([-d, 0.0, 0.0]))
    ).compose(spin)
    return left, right


# --- chain file I/O -----------------------------------------------------------


def _origin_from_tables(table: dict) -> RigidTransform:
    xyz = np.asarray(table.get("origin_xyz", [0.0, 0.0, 0.0]), dtype=float)
    rpy = table.get("origin_rpy", [0.0, 0.0, 0.0])
    return RigidTransform(rotation=rpy_to_matrix(*rpy), translation=xyz)


def load_chain(path: str | Path, load_meshes: bool = True) -> KinematicChain:
    path = Path(path)
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    base_dir = path.parent

    def mesh_for(table):
        if not load_meshes or "mesh" not in table:
            return None
        color = tuple(table.get("color", (160, 160, 170)))
        return load_mesh(base_dir / table["mesh"], color=color)

    joints = tuple(
        Joint(
            name=jt.get("name", f"j{i}"),
            origin=_origin_from_tables(jt),
            axis=np.asarray(jt["axis"], dtype=float),
            limits=tuple(float(x) for x in jt["limits"]),
            mesh=mesh_for(jt),
        )
        for i, jt in enumerate(doc["joint"])
    )
    ee = _origin_from_tables(doc.get("end_effector", {}))
    grip_table = doc["gripper"]
    gripper = GripperModel(
        max_travel=float(grip_table["max_travel"]),
        finger_mesh=mesh_for(grip_table),
    )
    base_mesh = mesh_for(doc["base"]) if "base" in doc else None
    return KinematicChain(
        name=doc.get("name", path.stem),
        joints=joints,
        ee_offset=ee,
        gripper=gripper,
        base_mesh=base_mesh,
    )


def _fmt_floats(vals) -> str:
    return "[" + ", ".join(repr(float(v)) for v in vals) + "]"


def write_chain(chain: KinematicChain, path: str | Path) -> None:
    """Write a chain (and its meshes, as binary STL) next to `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh_dir = path.parent / "meshes"
    mesh_dir.mkdir(exist_ok=True)
    lines = [f'name = "{chain.name}"', ""]

    def mesh_lines(mesh: TriangleMesh | None, stem: str) -> list[str]:
        if mesh is None:
            return []
        save_stl(mesh, mesh_dir / f"{stem}.stl")
        return [
            f'mesh = "meshes/{stem}.stl"',
            f"color = [{mesh.color[0]}, {mesh.color[1]}, {mesh.color[2]}]",
        ]

    for i, joint in enumerate(chain.joints):
        rot = joint.origin.rotation
        # Recover ZYX rpy from the origin rotation.
        pitch = -np.arcsin(np.clip(rot[2, 0], -1.0, 1.0))
        if abs(np.cos(pitch)) > 1e-9:
            roll = np.arctan2(rot[2, 1], rot[2, 2])
            yaw = np.arctan2(rot[1, 0], rot[0, 0])
        else:
            roll, yaw = np.arctan2(-rot[0, 1], rot[1, 1]), 0.0
        lines += [
            "[[joint]]",
            f'name = "{joint.name}"',
            f"axis = {_fmt_floats(joint.axis)}",
            f"origin_xyz = {_fmt_floats(joint.origin.translation)}",
            f"origin_rpy = {_fmt_floats([roll, pitch, yaw])}",
            f"limits = {_fmt_floats(joint.limits)}",
            *mesh_lines(joint.mesh, f"link{i}"),
            "",
        ]
    ee_rot = chain.ee_offset.rotation
    ee_pitch = -np.arcsin(np.clip(ee_rot[2, 0], -1.0, 1.0))
    ee_rpy = [np.arctan2(ee_rot[2, 1], ee_rot[2, 2]), ee_pitch, np.arctan2(ee_rot[1, 0], ee_rot[0, 0])]
    lines += [
        "[end_effector]",
        f"origin_xyz = {_fmt_floats(chain.ee_offset.translation)}",
        f"origin_rpy = {_fmt_floats(ee_rpy)}",
        "",
        "[gripper]",
        f"max_travel = {chain.gripper.max_travel!r}",
        *mesh_lines(chain.gripper.finger_mesh, "finger"),
        "",
    ]
    if chain.base_mesh is not None:
        lines += ["[base]", *mesh_lines(chain.base_mesh, "base"), ""]
    Path(path).write_text("\n".join(lines))
