"""Rigid point-set registration: closed-form alignment and trimmed ICP.

The ICP direction follows the refinement convention used throughout the
pipeline: the result transform maps the source set (predicted mesh vertices)
toward the target set (the partial depth point cloud).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DegenerateGeometry, RigidTransform, SINGULAR_VALUE_FLOOR


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_eps: float = 1e-6  # m, RMS change between iterations
    trim_distance: float = 0.02  # m, correspondence rejection radius
    min_correspondences: int = 50
    # Annealed rejection: pairs farther than max(trim_distance, 3 * median
    # correspondence distance) are rejected, so a coarse initialization
    # survives early iterations while converged ones enforce trim_distance.
    adaptive_trim: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_eps <= 0 or self.trim_distance <= 0:
            raise ValueError("convergence_eps and trim_distance must be positive")


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rms_error: float
    iterations_used: int
    inlier_fraction: float
    converged: bool
    # True when the inlier count dropped below min_correspondences (or a
    # solve degenerated); the result then holds the best state seen so far.
    failed: bool = False


class SpatialIndex:
    """Immutable nearest-neighbor index over an (N, 3) point set.

    Exact-distance ties resolve to the lowest insertion index, so queries are
    deterministic regardless of build or query order.
    """

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("spatial index needs at least one point")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, query: np.ndarray) -> tuple[np.ndarray, float]:
        """Closest stored point and its distance to `query`."""
        q = np.asarray(query, dtype=float)
        dist, idx = self._tree.query(q)
        candidates = self._tree.query_ball_point(q, dist)
        if candidates:
            d2 = np.sum((self.points[candidates] - q) ** 2, axis=1)
            tied = [c for c, dd in zip(candidates, d2) if dd == d2.min()]
            idx = min(tied)
            dist = float(np.sqrt(d2.min()))
        return self.points[idx], float(dist)

    def query(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized nearest lookup: (distances, indices) for (M, 3) queries."""
        dists, idxs = self._tree.query(np.asarray(queries, dtype=float))
        return dists, idxs


def build_spatial_index(points: np.ndarray) -> SpatialIndex:
    return SpatialIndex(points)


def umeyama_align(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rotation + translation mapping src onto dst (no scale).

    SVD-based with reflection correction, so the rotation determinant is
    always +1. Raises DegenerateGeometry on rank-deficient source geometry.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise ValueError(f"point sets differ in shape: {src.shape} vs {dst.shape}")
    if src.shape[0] < 3:
        raise ValueError("alignment needs at least 3 correspondences")
    src_c = src - src.mean(axis=0)
    dst_c = dst - dst.mean(axis=0)
    svals = np.linalg.svd(src_c, compute_uv=False)
    if svals[1] <= SINGULAR_VALUE_FLOOR:
        raise DegenerateGeometry("source points are rank-deficient (collinear or coincident)")
    u, _, vt = np.linalg.svd(src_c.T @ dst_c)
    d = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    rot = (u @ np.diag([1.0, 1.0, d]) @ vt).T
    t = dst.mean(axis=0) - rot @ src.mean(axis=0)
    return RigidTransform(rotation=rot, translation=t)


def stride_downsample(points: np.ndarray, max_points: int) -> np.ndarray:
    """Uniform-stride subset with at most max_points points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] <= max_points:
        return pts
    stride = int(np.ceil(pts.shape[0] / max_points))
    return pts[::stride]


def icp(
    source: np.ndarray,
    target: np.ndarray,
    init: RigidTransform | None = None,
    params: IcpParams | None = None,
) -> IcpResult:
    """Trimmed point-to-point ICP aligning source toward target.

    Each iteration matches transformed source points to their nearest target
    point, rejects pairs farther than trim_distance, and re-solves the rigid
    alignment on the survivors. The recorded RMS sequence is non-increasing:
    a step that would raise the trimmed RMS (possible when the inlier set
    changes) is rejected and iteration stops at the best state seen.
    """
    params = params or IcpParams()
    init = init or RigidTransform.identity()
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    tgt = np.asarray(target, dtype=float).reshape(-1, 3)
    if src.shape[0] < params.min_correspondences:
        raise ValueError(
            f"source has {src.shape[0]} points, need >= {params.min_correspondences}"
        )
    if tgt.shape[0] == 0:
        raise ValueError("target cloud is empty")
    index = SpatialIndex(tgt)

    current = init
    best: IcpResult | None = None
    prev_rms = None  # tracked only once the rejection threshold is at its floor
    solves = 0
    failed = False
    converged = False
    for _ in range(params.max_iterations + 1):
        dists, idxs = index.query(current.apply_many(src))
        threshold = params.trim_distance
        if params.adaptive_trim:
            threshold = max(threshold, 3.0 * float(np.median(dists)))
        at_floor = threshold <= params.trim_distance * (1.0 + 1e-9)
        inliers = dists <= threshold
        n_in = int(inliers.sum())
        if n_in < params.min_correspondences:
            failed = True
            break
        rms = float(np.sqrt(np.mean(dists[inliers] ** 2)))
        if best is None or rms < best.rms_error:
            best = IcpResult(
                transform=current,
                rms_error=rms,
                iterations_used=solves,
                inlier_fraction=n_in / src.shape[0],
                converged=False,
            )
        if prev_rms is not None and at_floor:
            if rms > prev_rms + 1e-12:
                break  # non-monotone trimmed step: keep the best state
            if abs(prev_rms - rms) < params.convergence_eps:
                converged = True
                break
        if solves == params.max_iterations:
            break
        prev_rms = rms if at_floor else None
        try:
            current = umeyama_align(src[inliers], tgt[idxs[inliers]])
        except DegenerateGeometry:
            failed = True
            break
        solves += 1

    if best is None:
        return IcpResult(
            transform=init,
            rms_error=np.inf,
            iterations_used=0,
            inlier_fraction=0.0,
            converged=False,
            failed=True,
        )
    return IcpResult(
        transform=best.transform,
        rms_error=best.rms_error,
        iterations_used=solves,
        inlier_fraction=best.inlier_fraction,
        converged=converged,
        failed=failed,
    )
