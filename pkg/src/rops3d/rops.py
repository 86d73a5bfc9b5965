"""Rotational projection statistics descriptor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lrf import DegenerateSurfaceError, LocalReferenceFrame
from .mesh import LocalSurface

# Statistic combinations, each a list of (m, n) central-moment orders or "e"
# for the Shannon entropy.
COMBINATIONS: dict[int, tuple] = {
    1: ((0, 2), (1, 1), (2, 0)),
    2: ((0, 2), (1, 1), (2, 0), (0, 3), (1, 2), (2, 1), (3, 0)),
    3: ((0, 2), (1, 1), (2, 0), (0, 3), (1, 2), (2, 1), (3, 0),
        (0, 4), (1, 3), (2, 2), (3, 1), (4, 0)),
    4: ((0, 2), (1, 1), (2, 0), (0, 3), (1, 2), (2, 1), (3, 0),
        (0, 4), (1, 3), (2, 2), (3, 1), (4, 0), "e"),
    5: ((1, 1), (2, 1), (1, 2), (2, 2)),
    6: ((1, 1), (2, 1), (1, 2), (2, 2), "e"),
    7: ((1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3)),
    8: ((1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3), "e"),
}


@dataclass(frozen=True)
class RopsParams:
    """Descriptor settings.

    ``radius`` is the support radius in mesh resolutions.  ``angles`` defaults
    to ``T`` evenly spaced rotations starting at zero: ``2*pi*k/T``.
    """

    L: int = 5
    T: int = 3
    radius: float = 15.0
    combination: int = 6
    angles: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.L < 2 or self.T < 1 or not self.radius > 0 or self.combination not in COMBINATIONS:
            raise ValueError(f"invalid RoPS parameters: {self}")
        if self.angles is None:
            object.__setattr__(self, "angles", tuple(2 * math.pi * k / self.T for k in range(self.T)))
        else:
            object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
            if len(self.angles) != self.T:
                raise ValueError("need exactly T rotation angles")

    @property
    def stats(self) -> tuple:
        return COMBINATIONS[self.combination]

    @property
    def length(self) -> int:
        return 9 * self.T * len(self.stats)

    def to_json(self) -> dict:
        return {"L": self.L, "T": self.T, "radius": self.radius,
                "combination": self.combination, "angles": list(self.angles)}

    @classmethod
    def from_json(cls, d: dict) -> "RopsParams":
        return cls(int(d["L"]), int(d["T"]), float(d["radius"]), int(d["combination"]),
                   tuple(d["angles"]) if d.get("angles") is not None else None)


@dataclass(frozen=True, eq=False)
class RoPSDescriptor:
    values: np.ndarray
    params: RopsParams

    def __len__(self):
        return len(self.values)


def transform_to_lrf(points, lrf: LocalReferenceFrame) -> np.ndarray:
    return (np.asarray(points, dtype=np.float64) - lrf.origin) @ lrf.axes.T


def _bin_index(u: np.ndarray, L: int) -> np.ndarray:
    lo, hi = u.min(), u.max()
    width = hi - lo
    if not width > 0:
        return np.zeros(len(u), dtype=np.int64)
    idx = np.floor((u - lo) / width * L).astype(np.int64)
    return np.clip(idx, 0, L - 1)


def distribution_matrix(points2d, L: int) -> np.ndarray:
    """Normalised L x L occupancy of the points' bounding rectangle.

    Rows index the first coordinate, columns the second.  Bins are
    half-open except the last, which is closed at the upper edge; a
    collapsed extent puts every point in bin 0 along that axis.
    """
    pts = np.asarray(points2d, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("no points to bin")
    i = _bin_index(pts[:, 0], L)
    j = _bin_index(pts[:, 1], L)
    D = np.bincount(i * L + j, minlength=L * L).astype(np.float64).reshape(L, L)
    return D / len(pts)


def central_moment(D: np.ndarray, m: int, n: int) -> float:
    L = D.shape[0]
    idx = np.arange(1, L + 1, dtype=np.float64)
    ibar = float((idx[:, None] * D).sum())
    jbar = float((idx[None, :] * D).sum())
    di = (idx - ibar) ** m
    dj = (idx - jbar) ** n
    return float((di[:, None] * dj[None, :] * D).sum())


def entropy(D: np.ndarray) -> float:
    nz = D[D > 0]
    return float(-(nz * np.log(nz)).sum())


def matrix_statistics(D: np.ndarray, combination: int = 6) -> np.ndarray:
    out = []
    for s in COMBINATIONS[combination]:
        out.append(entropy(D) if s == "e" else central_moment(D, *s))
    return np.asarray(out)


def _axis_rotation(axis: int, theta: float) -> np.ndarray:
    """Row-vector rotation matrix: ``q @ M`` rotates q by theta about ``axis``."""
    c, s = math.cos(theta), math.sin(theta)
    a, b = (axis + 1) % 3, (axis + 2) % 3      # cyclic pair keeps every rotation right-handed
    R = np.eye(3)
    R[a, a], R[a, b], R[b, a], R[b, b] = c, s, -s, c
    return R


_PLANES = ((0, 1), (0, 2), (1, 2))   # xy, xz, yz


class _StatsTable:
    """Vectorised statistics for a stack of distribution matrices."""

    def __init__(self, L, stats):
        self.L = L
        self.stats = stats
        self.idx = np.arange(1, L + 1, dtype=np.float64)

    def __call__(self, D):      # D: (K, L, L)
        ibar = np.einsum("kij,i->k", D, self.idx)
        jbar = np.einsum("kij,j->k", D, self.idx)
        di = self.idx[None, :] - ibar[:, None]
        dj = self.idx[None, :] - jbar[:, None]
        cols = []
        for s in self.stats:
            if s == "e":
                with np.errstate(divide="ignore", invalid="ignore"):
                    plogp = np.where(D > 0, D * np.log(np.where(D > 0, D, 1.0)), 0.0)
                cols.append(-plogp.sum(axis=(1, 2)))
            else:
                m, n = s
                cols.append(np.einsum("ki,kj,kij->k", di ** m, dj ** n, D))
        return np.stack(cols, axis=1)


def _binned(pts2: np.ndarray, L: int) -> np.ndarray:
    """Batched distribution matrices for (K, M, 2) projected point sets."""
    lo = pts2.min(axis=1, keepdims=True)
    hi = pts2.max(axis=1, keepdims=True)
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    idx = np.floor((pts2 - lo) / safe * L).astype(np.int64)
    idx = np.where(width > 0, np.clip(idx, 0, L - 1), 0)
    K, M, _ = pts2.shape
    flat = idx[:, :, 0] * L + idx[:, :, 1] + (np.arange(K) * L * L)[:, None]
    D = np.bincount(flat.ravel(), minlength=K * L * L).astype(np.float64).reshape(K, L, L)
    return D / M


def rops_from_local_points(local: np.ndarray, params: RopsParams) -> np.ndarray:
    """Descriptor values for points already expressed in the LRF."""
    rotated = []
    for axis in range(3):
        for theta in params.angles:
            rotated.append(local @ _axis_rotation(axis, theta))
    rotated = np.stack(rotated)                        # (3T, M, 3)
    projections = np.stack([rotated[:, :, list(pl)] for pl in _PLANES], axis=1)   # (3T, 3, M, 2)
    K = projections.shape[0] * 3
    D = _binned(projections.reshape(K, -1, 2), params.L)
    return _StatsTable(params.L, params.stats)(D).ravel()


def compute_rops(surface: LocalSurface, lrf: LocalReferenceFrame,
                 params: RopsParams = RopsParams()) -> RoPSDescriptor:
    """Concatenated statistics, ordered axis-major (x, y, z rotations), then
    rotation angle, then projection plane (xy, xz, yz), then statistic."""
    local = transform_to_lrf(surface.points, lrf)
    if len(local) < 3 or np.linalg.matrix_rank(local - local.mean(0), tol=1e-12 * max(1.0, np.abs(local).max())) < 2:
        raise DegenerateSurfaceError("local surface vertices are collinear")
    return RoPSDescriptor(rops_from_local_points(local, params), params)


def descriptor_distance(f1, f2) -> float:
    a = f1.values if isinstance(f1, RoPSDescriptor) else np.asarray(f1, dtype=np.float64)
    b = f2.values if isinstance(f2, RoPSDescriptor) else np.asarray(f2, dtype=np.float64)
    if isinstance(f1, RoPSDescriptor) and isinstance(f2, RoPSDescriptor) and f1.params != f2.params:
        raise ValueError("descriptors were computed with different parameters")
    if a.shape != b.shape:
        raise ValueError(f"descriptor length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def normalized_l2(F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    """Per-pair L2 distance after min-max scaling each dimension over both sets.

    Used for the average normalised distance between descriptors of a shape
    and its transformed copy.
    """
    F1, F2 = np.asarray(F1, float), np.asarray(F2, float)
    both = np.vstack([F1, F2])
    lo, hi = both.min(0), both.max(0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.linalg.norm((F1 - lo) / span - (F2 - lo) / span, axis=1)
