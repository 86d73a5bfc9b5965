"""Triangle mesh container, local-surface cropping and synthetic nuisances."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation


class MeshError(ValueError):
    """Raised for malformed or unusable mesh input."""


class EmptySurfaceError(MeshError):
    """No triangle lies within the support sphere (isolated point)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle soup.

    ``vertices`` is (N, 3) float64, ``triangles`` is (M, 3) int64.  The
    optional ``labels`` array tags every vertex with the index of the model
    it came from (-1 when unknown); synthetic scenes use it as ground-truth
    provenance.  Arrays are made read-only so a mesh can be shared freely.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    labels: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex coordinates must be finite")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshError("triangle index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("triangle with repeated vertex index")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "triangles", _frozen(f))
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(lab) != len(v):
                raise MeshError("labels must have one entry per vertex")
            object.__setattr__(self, "labels", _frozen(lab))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) array."""
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return _frozen(np.unique(e, axis=0))

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges referenced by exactly one triangle."""
        f = self.triangles
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return _frozen(uniq[counts == 1])

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return _frozen(mask)

    @cached_property
    def kdtree(self) -> cKDTree:
        return cKDTree(self.vertices)

    @cached_property
    def vertex_triangles(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR adjacency ``(offsets, triangle_ids)`` from vertex to incident triangles."""
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return _frozen(offsets), _frozen(order // 3)

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return _frozen(0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1))

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal, a cheap proxy for the object size."""
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @cached_property
    def resolution(self) -> float:
        return mesh_resolution(self)

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "TriangleMesh":
        """Apply ``q -> q @ R + t`` to every vertex (row-vector convention)."""
        return TriangleMesh(self.vertices @ R + t, self.triangles, self.labels)

    def submesh(self, vertex_mask: np.ndarray) -> "TriangleMesh":
        """Keep the vertices in ``vertex_mask`` and the triangles made only of them."""
        vertex_mask = np.asarray(vertex_mask, dtype=bool)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[vertex_mask] = np.arange(int(vertex_mask.sum()))
        keep = vertex_mask[self.triangles].all(axis=1)
        labels = None if self.labels is None else self.labels[vertex_mask]
        return TriangleMesh(self.vertices[vertex_mask], remap[self.triangles[keep]], labels)


@dataclass(frozen=True)
class GroundTruthPose:
    """Pose of a model instance in a scene: ``q_scene = q_model @ R + t``."""

    model_id: str
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R must be a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.R + self.t

    def to_json(self) -> dict:
        return {"model_id": self.model_id, "R": self.R.ravel().tolist(), "t": self.t.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "GroundTruthPose":
        try:
            R = np.asarray(d["R"], dtype=np.float64)
            t = np.asarray(d["t"], dtype=np.float64)
            if R.size != 9 or t.size != 3:
                raise ValueError("R needs 9 numbers and t needs 3")
            return cls(str(d["model_id"]), R.reshape(3, 3), t)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed ground-truth record: {d!r}") from exc


@dataclass(frozen=True, eq=False)
class LocalSurface:
    """Triangles of ``mesh`` touching the sphere of ``radius`` around ``center``."""

    mesh: TriangleMesh
    center: np.ndarray
    radius: float
    triangle_indices: np.ndarray

    @property
    def corners(self) -> np.ndarray:
        """(N, 3, 3) triangle corner coordinates."""
        return self.mesh.vertices[self.mesh.triangles[self.triangle_indices]]

    @cached_property
    def vertex_indices(self) -> np.ndarray:
        return np.unique(self.mesh.triangles[self.triangle_indices])

    @property
    def points(self) -> np.ndarray:
        """Vertices of the included triangles."""
        return self.mesh.vertices[self.vertex_indices]

    def touches_boundary(self) -> bool:
        return bool(self.mesh.boundary_vertex_mask[self.vertex_indices].any())


def mesh_resolution(mesh: TriangleMesh) -> float:
    """Mean length over the set of unique edges."""
    if mesh.n_triangles == 0:
        raise MeshError("mesh has no triangles")
    e = mesh.edges
    d = mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]]
    return float(np.mean(np.sqrt(np.einsum("ij,ij->i", d, d))))


def crop_local_surface(mesh: TriangleMesh, p, r: float) -> LocalSurface:
    """Collect every triangle with at least one vertex within ``r`` of ``p``.

    Triangles are kept whole, never clipped against the sphere.
    """
    if not r > 0:
        raise ValueError("support radius must be positive")
    p = np.asarray(p, dtype=np.float64).reshape(3)
    inside = mesh.kdtree.query_ball_point(p, r, return_sorted=True)
    if len(inside) == 0:
        raise EmptySurfaceError(f"no vertex within r={r:g} of {p}")
    offsets, tri_ids = mesh.vertex_triangles
    inside = np.asarray(inside, dtype=np.int64)
    starts, stops = offsets[inside], offsets[inside + 1]
    lengths = stops - starts
    if lengths.sum() == 0:
        raise EmptySurfaceError(f"vertices near {p} belong to no triangle")
    idx = np.repeat(starts - np.cumsum(lengths) + lengths, lengths) + np.arange(lengths.sum())
    tris = np.unique(tri_ids[idx])
    return LocalSurface(mesh, p, float(r), tris)


def add_gaussian_noise(mesh: TriangleMesh, sigma: float, seed=None,
                       resolution: Optional[float] = None) -> TriangleMesh:
    """Perturb every coordinate with i.i.d. N(0, (sigma * mr)^2).

    ``sigma`` is expressed in mesh resolutions; ``resolution`` overrides the
    unit (defaults to the mesh's own mr).
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return mesh
    mr = mesh.resolution if resolution is None else float(resolution)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma * mr, size=mesh.vertices.shape)
    return TriangleMesh(mesh.vertices + noise, mesh.triangles, mesh.labels)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed proper rotation, re-orthonormalized to machine precision."""
    R = Rotation.random(random_state=rng).as_matrix()
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    if np.linalg.det(R) < 0:
        u[:, -1] *= -1
        R = u @ vt
    return R


def compose_scene(models: Sequence[TriangleMesh], k: int = 3, seed=None,
                  names: Optional[Sequence[str]] = None,
                  min_k: int = 3, max_k: int = 5) -> tuple[TriangleMesh, list[GroundTruthPose]]:
    """Place ``k`` randomly posed model instances into one scene mesh.

    Distinct models are drawn when enough are available, otherwise with
    replacement.  Translations are sampled uniformly in a cube of side four
    times the largest model diameter; a draw is rejected when its bounding
    sphere would swallow the center of an already-placed instance, so
    instances may overlap but never coincide.  Vertex labels hold the index
    of the source model.
    """
    if not models:
        raise ValueError("no models to compose")
    if not min_k <= k <= max_k:
        raise ValueError(f"k must lie in [{min_k}, {max_k}]")
    names = [str(i) for i in range(len(models))] if names is None else [str(n) for n in names]
    rng = np.random.default_rng(seed)
    replace = k > len(models)
    chosen = rng.choice(len(models), size=k, replace=replace)

    diam = max(m.diameter for m in models)
    side = 4.0 * diam
    centers, radii = [], []
    parts_v, parts_f, parts_l, poses = [], [], [], []
    offset = 0
    for mi in chosen:
        model = models[int(mi)]
        R = random_rotation(rng)
        c_model = 0.5 * (model.vertices.min(0) + model.vertices.max(0))
        rad = 0.5 * model.diameter
        for _ in range(1000):
            target = rng.uniform(-side / 2, side / 2, size=3)
            if all(np.linalg.norm(target - c) > max(rad, rc) for c, rc in zip(centers, radii)):
                break
        t = target - c_model @ R
        centers.append(target)
        radii.append(rad)
        parts_v.append(model.vertices @ R + t)
        parts_f.append(model.triangles + offset)
        parts_l.append(np.full(model.n_vertices, int(mi), dtype=np.int64))
        offset += model.n_vertices
        poses.append(GroundTruthPose(names[int(mi)], R, t))

    scene = TriangleMesh(np.concatenate(parts_v), np.concatenate(parts_f), np.concatenate(parts_l))
    return scene, poses


def merge_meshes(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    """Concatenate meshes, keeping labels when every part carries them."""
    v, f, lab = [], [], []
    offset = 0
    for m in meshes:
        v.append(m.vertices)
        f.append(m.triangles + offset)
        lab.append(m.labels if m.labels is not None else np.full(m.n_vertices, -1, dtype=np.int64))
        offset += m.n_vertices
    return TriangleMesh(np.concatenate(v), np.concatenate(f), np.concatenate(lab))
