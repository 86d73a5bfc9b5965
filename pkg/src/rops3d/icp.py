"""Point-to-point ICP refinement of a model pose against scene vertices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class IcpResult:
    R: np.ndarray
    t: np.ndarray
    epsilon: float          # mean residual in mesh resolutions (inf if no overlap)
    n_correspondences: int
    iterations: int


def best_rigid_transform(src: np.ndarray, dst: np.ndarray):
    """Least-squares ``R, t`` with ``src @ R + t ~ dst`` (row vectors)."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    S = np.eye(3)
    S[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ S @ Vt
    return R, cd - cs @ R


def icp_refine(scene, model, R0, t0, resolution: float, max_iterations: int = 50,
               tol_mr: float = 1e-4, reject_mr: float = 4.0,
               scene_tree: Optional[cKDTree] = None, max_points: int = 4000) -> IcpResult:
    """Refine ``(R0, t0)`` mapping ``model`` onto ``scene``.

    Each transformed model vertex pairs with its closest scene vertex when
    closer than ``reject_mr * resolution``.  Iteration stops when the mean
    residual changes by less than ``tol_mr * resolution``.  ``scene`` and
    ``model`` may be meshes or (N, 3) arrays; models larger than
    ``max_points`` are evenly subsampled during the iterations, while the
    reported residual uses every model vertex.
    """
    S = getattr(scene, "vertices", scene)
    M = np.asarray(getattr(model, "vertices", model), dtype=np.float64)
    R0, t0 = np.asarray(R0, float), np.asarray(t0, float)
    inf = IcpResult(R0, t0, float("inf"), 0, 0)
    if len(S) == 0:
        return inf
    tree = scene_tree if scene_tree is not None else cKDTree(S)
    S = np.asarray(tree.data)
    reject = reject_mr * resolution
    step = max(1, int(np.ceil(len(M) / max_points)))
    Msub = M[::step]

    R, t = R0, t0
    prev = None
    it = 0
    for it in range(1, max_iterations + 1):
        d, j = tree.query(Msub @ R + t, distance_upper_bound=reject)
        ok = np.isfinite(d)
        if ok.sum() < 3:
            if it == 1:
                return inf
            break
        R, t = best_rigid_transform(Msub[ok], S[j[ok]])
        err = float(d[ok].mean())
        if prev is not None and abs(prev - err) < tol_mr * resolution:
            break
        prev = err

    d, _ = tree.query(M @ R + t, distance_upper_bound=reject)
    ok = np.isfinite(d)
    if not ok.any():
        return IcpResult(R0, t0, float("inf"), 0, it)
    return IcpResult(R, t, float(d[ok].mean()) / resolution, int(ok.sum()), it)
