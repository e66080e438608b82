"""Built-in 7-DOF arm model used for fixtures and as a default robot.

Geometry is deliberately generic (alternating z/y revolute axes, tapered
cylinder links, box fingers); any chain file with the same schema works.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import RigidTransform
from .meshes import box_mesh, cylinder_mesh
from .robot import GripperModel, Joint, KinematicChain, write_chain

# (origin z offset, axis, limit magnitude rad, link radius)
_ARM_SEGMENTS = [
    (0.15, (0, 0, 1), 2.97, 0.045),
    (0.10, (0, 1, 0), 2.00, 0.042),
    (0.25, (0, 0, 1), 2.97, 0.038),
    (0.15, (0, 1, 0), 2.10, 0.035),
    (0.25, (0, 0, 1), 2.97, 0.030),
    (0.12, (0, 1, 0), 2.10, 0.026),
    (0.08, (0, 0, 1), 2.97, 0.022),
]
_EE_OFFSET = 0.10
_LINK_COLORS = [(200, 200, 205), (90, 90, 100)]

DEFAULT_HOME = (0.0, 0.6, 0.0, 1.1, 0.0, 0.9, 0.0)


def build_default_chain(name: str = "arm7") -> KinematicChain:
    joints = []
    n = len(_ARM_SEGMENTS)
    for i, (dz, axis, lim, radius) in enumerate(_ARM_SEGMENTS):
        next_dz = _ARM_SEGMENTS[i + 1][0] if i + 1 < n else _EE_OFFSET
        mesh = cylinder_mesh(
            (0.0, 0.0, 0.0),
            (0.0, 0.0, next_dz),
            radius,
            segments=14,
            color=_LINK_COLORS[i % 2],
        )
        joints.append(
            Joint(
                name=f"j{i + 1}",
                origin=RigidTransform(translation=np.array([0.0, 0.0, dz])),
                axis=np.asarray(axis, dtype=float),
                limits=(-lim, lim),
                mesh=mesh,
            )
        )
    finger = box_mesh(
        (0.012, 0.014, 0.055), center=(0.006, 0.0, 0.0275), color=(40, 40, 45)
    )
    base = box_mesh((0.14, 0.14, 0.15), center=(0.0, 0.0, 0.075), color=(60, 60, 68))
    return KinematicChain(
        name=name,
        joints=tuple(joints),
        ee_offset=RigidTransform(translation=np.array([0.0, 0.0, _EE_OFFSET])),
        gripper=GripperModel(max_travel=0.04, finger_mesh=finger),
        base_mesh=base,
    )


def export_default_chain(path: str | Path) -> Path:
    """Write the built-in arm (chain file plus STL meshes) to `path`."""
    path = Path(path)
    write_chain(build_default_chain(), path)
    return path
