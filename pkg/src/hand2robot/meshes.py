"""Triangle meshes: container, binary STL / OBJ loading, simple primitives."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (N, 3) in the owning link's frame, faces (M, 3) vertex indices,
    one flat RGB color per mesh."""

    vertices: np.ndarray
    faces: np.ndarray
    color: tuple[int, int, int] = (160, 160, 170)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= verts.shape[0]):
            raise ValueError("face indices out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    def transformed(self, t) -> "TriangleMesh":
        return TriangleMesh(t.apply_many(self.vertices), self.faces, self.color)

    def with_color(self, color: tuple[int, int, int]) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, color)


def load_mesh(path: str | Path, color=(160, 160, 170)) -> TriangleMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".stl":
        return load_stl(path, color)
    if suffix == ".obj":
        return load_obj(path, color)
    raise ValueError(f"unsupported mesh format: {path}")


def load_stl(path: str | Path, color=(160, 160, 170)) -> TriangleMesh:
    """Binary STL; vertices are deduplicated exactly."""
    raw = Path(path).read_bytes()
    if len(raw) < 84:
        raise ValueError(f"{path}: truncated STL")
    (n_tri,) = struct.unpack_from("<I", raw, 80)
    expected = 84 + 50 * n_tri
    if len(raw) < expected:
        raise ValueError(f"{path}: STL declares {n_tri} triangles but file is short")
    rec = np.frombuffer(raw, dtype=np.uint8, count=50 * n_tri, offset=84).reshape(n_tri, 50)
    tris = rec[:, 12:48].copy().view("<f4").reshape(n_tri, 3, 3).astype(float)
    flat = tris.reshape(-1, 3)
    verts, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriangleMesh(verts, inverse.reshape(-1, 3), color)


def save_stl(mesh: TriangleMesh, path: str | Path) -> None:
    tris = mesh.vertices[mesh.faces]  # (M, 3, 3)
    n = tris.shape[0]
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
    rec = np.zeros(n, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    rec["n"] = normals
    rec["v"] = tris
    with open(path, "wb") as f:
        f.write(b"\0" * 80)
        f.write(struct.pack("<I", n))
        f.write(rec.tobytes())


def load_obj(path: str | Path, color=(160, 160, 170)) -> TriangleMesh:
    """Wavefront OBJ, 'v' and triangular 'f' records only."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise ValueError(f"{path}: non-triangular face {parts}")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64), color)


# --- primitives --------------------------------------------------------------


def box_mesh(size, center=(0.0, 0.0, 0.0), color=(160, 160, 170)) -> TriangleMesh:
    sx, sy, sz = (np.asarray(size, dtype=float) / 2.0).tolist()
    cx, cy, cz = center
    corners = np.array(
        [
            [x, y, z]
            for x in (-sx, sx)
            for y in (-sy, sy)
            for z in (-sz, sz)
        ]
    ) + (cx, cy, cz)
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # x faces
        (0, 4, 5, 1), (2, 3, 7, 6),  # y faces
        (0, 2, 6, 4), (1, 5, 7, 3),  # z faces
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return TriangleMesh(corners, np.asarray(faces, dtype=np.int64), color)


def cylinder_mesh(
    p0, p1, radius, segments=16, rings=2, color=(160, 160, 170)
) -> TriangleMesh:
    """Closed cylinder from p0 to p1 with capped ends and `rings` vertex rings."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    if length < 1e-12:
        raise ValueError("cylinder endpoints coincide")
    if rings < 2:
        raise ValueError("cylinder needs at least 2 rings")
    z = axis / length
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(ref, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    angles = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    circle = radius * (np.outer(np.cos(angles), x) + np.outer(np.sin(angles), y))
    levels = [p0 + t * axis for t in np.linspace(0.0, 1.0, rings)]
    verts = np.vstack([lvl + circle for lvl in levels] + [p0[None, :], p1[None, :]])
    bot_center, top_center = rings * segments, rings * segments + 1
    faces = []
    for r in range(rings - 1):
        a0, b0 = r * segments, (r + 1) * segments
        for i in range(segments):
            j = (i + 1) % segments
            faces.append([a0 + i, a0 + j, b0 + i])
            faces.append([a0 + j, b0 + j, b0 + i])
    top0 = (rings - 1) * segments
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([bot_center, j, i])
        faces.append([top_center, top0 + i, top0 + j])
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64), color)


def uv_sphere_mesh(
    center, radii, rows=12, cols=16, color=(160, 160, 170)
) -> TriangleMesh:
    """Axis-aligned ellipsoid as a UV sphere grid plus two pole vertices."""
    center = np.asarray(center, dtype=float)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (3,))
    phis = np.linspace(0, np.pi, rows + 2)[1:-1]  # exclude poles
    thetas = np.linspace(0, 2 * np.pi, cols, endpoint=False)
    pp, tt = np.meshgrid(phis, thetas, indexing="ij")
    grid = np.stack(
        [np.sin(pp) * np.cos(tt), np.sin(pp) * np.sin(tt), np.cos(pp)], axis=-1
    ).reshape(-1, 3)
    verts = np.vstack([grid, [[0.0, 0.0, 1.0]], [[0.0, 0.0, -1.0]]]) * radii + center
    north, south = rows * cols, rows * cols + 1
    faces = []
    for r in range(rows - 1):
        for c in range(cols):
            c2 = (c + 1) % cols
            a, b = r * cols + c, r * cols + c2
            d, e = (r + 1) * cols + c, (r + 1) * cols + c2
            faces.append([a, b, d])
            faces.append([b, e, d])
    for c in range(cols):
        c2 = (c + 1) % cols
        faces.append([north, c2, c])
        faces.append([south, (rows - 1) * cols + c, (rows - 1) * cols + c2])
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64), color)
