"""Procedural test meshes.

The bundled models are deterministic, closed, asymmetric blobs: an
anisotropically scaled icosphere whose radius is modulated by a sum of
Gaussian bumps.  Each preset fixes its seed so the geometry is identical on
every machine.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import TriangleMesh


def icosphere(subdivisions: int = 4) -> TriangleMesh:
    """Unit icosphere with ``10 * 4**subdivisions + 2`` vertices."""
    phi = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = np.sort(e, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = inv + len(v)
        nf = len(f)
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[:nf], m[nf:2 * nf], m[2 * nf:]
        f = np.concatenate([
            np.column_stack([a, ab, ca]),
            np.column_stack([b, bc, ab]),
            np.column_stack([c, ca, bc]),
            np.column_stack([ab, bc, ca]),
        ])
        v = np.concatenate([v, mid])
    return TriangleMesh(v, f)


# (count, (min width, max width) in radians, relative amplitude)
DETAIL_SCALES = (
    (10, (0.4, 0.8), 0.8),
    (60, (0.15, 0.35), 1.0),
    (200, (0.06, 0.14), 1.0),
)


def bumpy_blob(seed: int, subdivisions: int = 5, axes=(1.0, 0.8, 0.6),
               scales=DETAIL_SCALES) -> TriangleMesh:
    """Star-shaped closed surface carrying Gaussian bumps and dents at several scales.

    Bump heights are proportional to their angular width, so the surface
    stays free of spikes at every scale.
    """
    rng = np.random.default_rng(seed)
    base = icosphere(subdivisions)
    dirs = base.vertices
    radius = np.ones(len(dirs))
    for count, (w_lo, w_hi), amp in scales:
        centers = rng.normal(size=(count, 3))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        widths = rng.uniform(w_lo, w_hi, size=count)
        heights = rng.uniform(-0.6, 1.0, size=count) * amp * widths
        ang = np.arccos(np.clip(dirs @ centers.T, -1.0, 1.0))
        radius += (heights * np.exp(-(ang / widths) ** 2)).sum(axis=1)
    radius = np.maximum(radius, 0.3)
    v = dirs * radius[:, None] * np.asarray(axes, dtype=np.float64)
    return TriangleMesh(v, base.triangles)


_PRESETS = {
    # name: (seed, axes)
    "blob_a": (11, (1.0, 0.8, 0.6)),
    "blob_b": (23, (1.0, 0.65, 0.75)),
    "blob_c": (37, (0.9, 1.0, 0.55)),
    "blob_d": (41, (1.0, 0.9, 0.7)),
    "blob_e": (53, (0.7, 1.0, 0.8)),
}

BUNDLED_MODELS = tuple(_PRESETS)


@lru_cache(maxsize=None)
def bundled_model(name: str, subdivisions: int = 5) -> TriangleMesh:
    """One of the named desk-scale test models (``BUNDLED_MODELS``)."""
    try:
        seed, axes = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown bundled model {name!r}; choose from {BUNDLED_MODELS}") from None
    return bumpy_blob(seed, subdivisions=subdivisions, axes=axes)


def planar_grid(n: int = 30, spacing: float = 1.0, jitter: float = 0.0, seed=None) -> TriangleMesh:
    """Triangulated ``n x n`` vertex grid in the z = 0 plane."""
    rng = np.random.default_rng(seed)
    xs, ys = np.meshgrid(np.arange(n) * spacing, np.arange(n) * spacing, indexing="ij")
    v = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n * n)])
    if jitter:
        v[:, :2] += rng.uniform(-jitter, jitter, size=(n * n, 2)) * spacing
    idx = np.arange(n * n).reshape(n, n)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriangleMesh(v, f)
