"""Local reference frame from the continuous scatter of a local surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import LocalSurface, MeshError

SIGN_EPS = 1e-12


class DegenerateSurfaceError(MeshError):
    """The local surface cannot support a unique frame."""


@dataclass(frozen=True)
class ScatterAccumulation:
    C: np.ndarray        # weighted 3x3 scatter
    h: np.ndarray        # weighted first-moment vector used for sign disambiguation


@dataclass(frozen=True, eq=False)
class LocalReferenceFrame:
    """Origin plus a right-handed orthonormal basis.

    ``axes`` holds the x, y, z axes as ROWS, so an offset ``d`` has local
    coordinates ``d @ axes.T``.  Under a rigid motion ``q -> q @ R + t`` the
    frame transforms as ``axes -> axes @ R``.
    """

    origin: np.ndarray
    axes: np.ndarray
    eigenvalues: np.ndarray

    @property
    def x(self):
        return self.axes[0]

    @property
    def y(self):
        return self.axes[1]

    @property
    def z(self):
        return self.axes[2]

    @property
    def eigen_ratio(self) -> float:
        """lambda1 / lambda2; close to 1 on rotationally symmetric patches."""
        l1, l2, _ = self.eigenvalues
        return float(l1 / l2) if l2 > 0 else float("inf")

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points) - self.origin) @ self.axes.T


def triangle_scatter(p1, p2, p3, p) -> np.ndarray:
    """Area-normalised integral of (x - p)(x - p)^T over one triangle."""
    d = np.stack([np.asarray(p1, float) - p, np.asarray(p2, float) - p, np.asarray(p3, float) - p])
    s = d.sum(axis=0)
    return (np.outer(s, s) + d.T @ d) / 12.0


def _weights(corners: np.ndarray, p: np.ndarray, r: float):
    cr = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    area2 = np.linalg.norm(cr, axis=1)
    total = area2.sum()
    if not total > 0:
        raise DegenerateSurfaceError("local surface has zero area")
    w_area = area2 / total
    dist = np.linalg.norm(corners.mean(axis=1) - p, axis=1)
    # triangles reaching past the sphere may have centroids beyond r; they get no weight
    w_dist = np.maximum(r - dist, 0.0) ** 2
    return w_area, w_dist


def accumulate_scatter(surface: LocalSurface) -> ScatterAccumulation:
    p = surface.center
    corners = surface.corners
    w_area, w_dist = _weights(corners, p, surface.radius)
    w = w_area * w_dist
    d = corners - p                        # (N, 3 corners, 3)
    s = d.sum(axis=1)                      # (N, 3)
    # sum_i w_i C_i, with C_i = (s s^T + sum_k d_k d_k^T) / 12
    C = (s.T * w) @ s
    for k in range(3):
        C += (d[:, k].T * w) @ d[:, k]
    C /= 12.0
    C = 0.5 * (C + C.T)
    h = (w[:, None] * s).sum(axis=0) / 6.0
    return ScatterAccumulation(C, h)


def _orient(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    proj = float(h @ v)
    if abs(proj) < SIGN_EPS:
        # symmetric support: make the dominant component positive
        return v if v[np.argmax(np.abs(v))] > 0 else -v
    return v if proj > 0 else -v


def frame_from_scatter(acc: ScatterAccumulation, origin) -> LocalReferenceFrame:
    evals, evecs = np.linalg.eigh(acc.C)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if not evals[0] > 0 or evals[1] <= 1e-12 * evals[0]:
        raise DegenerateSurfaceError(f"scatter rank < 2 (eigenvalues {evals})")
    x = _orient(evecs[:, 0], acc.h)
    z = _orient(evecs[:, 2], acc.h)
    y = np.cross(z, x)
    axes = np.vstack([x, y, z])
    return LocalReferenceFrame(np.asarray(origin, dtype=np.float64), axes, evals)


def compute_lrf(surface: LocalSurface) -> LocalReferenceFrame:
    """Unique, sign-disambiguated frame of ``surface`` at its center."""
    return frame_from_scatter(accumulate_scatter(surface), surface.center)


def lrf_error(Ls, Lm) -> float:
    """Rotation angle (degrees) between two frames (or 3x3 axis matrices)."""
    A = Ls.axes if isinstance(Ls, LocalReferenceFrame) else np.asarray(Ls)
    B = Lm.axes if isinstance(Lm, LocalReferenceFrame) else np.asarray(Lm)
    c = (np.trace(A @ B.T) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
