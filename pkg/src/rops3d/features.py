"""Per-point feature extraction shared by library building and scene description."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .lrf import DegenerateSurfaceError, LocalReferenceFrame, compute_lrf
from .mesh import EmptySurfaceError, LocalSurface, TriangleMesh, crop_local_surface
from .rops import RopsParams, compute_rops


def worker_count() -> int:
    """Thread cap from ``ROPS3D_THREADS`` (default: all CPUs)."""
    env = os.environ.get("ROPS3D_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Iterable, threads: Optional[int] = None) -> list:
    items = list(items)
    n = worker_count() if threads is None else threads
    if n <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class Feature:
    vertex: int
    position: np.ndarray
    lrf: LocalReferenceFrame
    descriptor: Optional[np.ndarray] = None


def surface_at(mesh: TriangleMesh, vertex: int, support: float) -> LocalSurface:
    return crop_local_surface(mesh, mesh.vertices[vertex], support)


def describe_vertices(mesh: TriangleMesh, vertices, support: float, params: RopsParams,
                      min_eigen_ratio: Optional[float] = None,
                      reject_boundary: bool = False) -> tuple[list[Feature], int]:
    """LRF + descriptor at each vertex; returns (features, number skipped).

    Degenerate or isolated points are skipped.  With ``min_eigen_ratio`` set,
    points whose lambda1/lambda2 does not exceed it are skipped as well, and
    ``reject_boundary`` drops points whose support touches a mesh border.
    """

    def one(v):
        try:
            surf = surface_at(mesh, int(v), support)
            if reject_boundary and surf.touches_boundary():
                return None
            lrf = compute_lrf(surf)
            if min_eigen_ratio is not None and not lrf.eigen_ratio > min_eigen_ratio:
                return None
            desc = compute_rops(surf, lrf, params).values
        except (DegenerateSurfaceError, EmptySurfaceError):
            return None
        return Feature(int(v), mesh.vertices[int(v)].copy(), lrf, desc)

    results = parallel_map(one, list(vertices))
    feats = [f for f in results if f is not None]
    return feats, len(results) - len(feats)


def farthest_point_sampling(points: np.ndarray, n: int, start: int = 0) -> np.ndarray:
    """Indices of ``n`` points spread evenly by greedy farthest-point selection."""
    points = np.asarray(points, dtype=np.float64)
    n = min(n, len(points))
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = start
    d = np.linalg.norm(points - points[start], axis=1)
    for k in range(1, n):
        nxt = int(np.argmax(d))
        chosen[k] = nxt
        d = np.minimum(d, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def resolution_control(points: np.ndarray, order, rho: float) -> np.ndarray:
    """Greedy suppression: walk ``order`` and keep a point only if no kept
    point lies within ``rho`` of it."""
    order = np.asarray(order, dtype=np.int64)
    if rho <= 0 or len(order) == 0:
        return order
    pts = np.asarray(points, dtype=np.float64)[order]
    tree = cKDTree(pts)
    kept = np.zeros(len(order), dtype=bool)
    for k in range(len(order)):
        near = tree.query_ball_point(pts[k], rho)
        if not any(kept[j] for j in near if j != k):
            kept[k] = True
    return order[kept]
