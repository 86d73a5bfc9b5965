"""Offline model representation: feature records, k-d index, ROPSLIB1 files."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .features import describe_vertices, farthest_point_sampling, resolution_control
from .io import _atomic_write_bytes
from .matching import DescriptorIndex
from .mesh import MeshError, TriangleMesh
from .rops import RopsParams

log = logging.getLogger(__name__)

MAGIC = b"ROPSLIB1"


class LibraryVersionError(ValueError):
    """Library file is not ROPSLIB1 or disagrees with the requested parameters."""


@dataclass(eq=False)
class ModelEntry:
    name: str
    mesh: TriangleMesh
    positions: np.ndarray     # (n, 3)
    axes: np.ndarray          # (n, 3, 3) LRF axes, rows = x, y, z
    descriptors: np.ndarray   # (n, D)

    @property
    def resolution(self) -> float:
        return self.mesh.resolution

    def __len__(self):
        return len(self.positions)


@dataclass(eq=False)
class ModelLibrary:
    params: RopsParams
    unit: float                       # length of one "mr" for support radii
    models: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)

    @property
    def support(self) -> float:
        return self.params.radius * self.unit

    def model(self, name: str) -> ModelEntry:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.models]

    @cached_property
    def index(self) -> DescriptorIndex:
        descs, labels = [], []
        for m in self.models:
            descs.append(m.descriptors)
            labels += [(m.name, i) for i in range(len(m))]
        return DescriptorIndex(np.concatenate(descs), labels)

    def record_count(self) -> int:
        return sum(len(m) for m in self.models)

    # serialisation -------------------------------------------------------

    def to_bytes(self) -> bytes:
        p = self.params
        out = [MAGIC, struct.pack("<IIdI", p.L, p.T, p.radius, p.combination),
               struct.pack(f"<{p.T}d", *p.angles), struct.pack("<dI", self.unit, len(self.models))]
        for m in self.models:
            name = m.name.encode("utf-8")
            out.append(struct.pack("<I", len(name)) + name)
            out.append(struct.pack("<II", m.mesh.n_vertices, m.mesh.n_triangles))
            out.append(m.mesh.vertices.astype("<f8").tobytes())
            out.append(m.mesh.triangles.astype("<i8").tobytes())
            rec = np.hstack([m.positions, m.axes.reshape(-1, 9), m.descriptors]).astype("<f8")
            out.append(struct.pack("<I", len(m)) + rec.tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelLibrary":
        if data[:8] != MAGIC:
            raise LibraryVersionError(f"not a ROPSLIB1 library (magic {data[:8]!r})")
        try:
            pos = 8
            L, T, radius, comb = struct.unpack_from("<IIdI", data, pos)
            pos += struct.calcsize("<IIdI")
            angles = struct.unpack_from(f"<{T}d", data, pos)
            pos += 8 * T
            unit, n_models = struct.unpack_from("<dI", data, pos)
            pos += struct.calcsize("<dI")
            params = RopsParams(L, T, radius, comb, angles)
            D = params.length
            lib = cls(params, unit)
            for _ in range(n_models):
                (nlen,) = struct.unpack_from("<I", data, pos)
                pos += 4
                name = data[pos: pos + nlen].decode("utf-8")
                pos += nlen
                nv, nt = struct.unpack_from("<II", data, pos)
                pos += 8
                verts = np.frombuffer(data, "<f8", nv * 3, pos).reshape(nv, 3)
                pos += 24 * nv
                tris = np.frombuffer(data, "<i8", nt * 3, pos).reshape(nt, 3)
                pos += 24 * nt
                (nf,) = struct.unpack_from("<I", data, pos)
                pos += 4
                width = 12 + D
                rec = np.frombuffer(data, "<f8", nf * width, pos).reshape(nf, width)
                pos += 8 * nf * width
                lib.models.append(ModelEntry(name, TriangleMesh(verts, tris), rec[:, :3].copy(),
                                             rec[:, 3:12].reshape(nf, 3, 3).copy(), rec[:, 12:].copy()))
        except (struct.error, ValueError) as exc:
            raise LibraryVersionError(f"corrupt library file: {exc}") from exc
        if pos != len(data):
            raise LibraryVersionError("trailing bytes after library payload")
        return lib

    def save(self, path):
        _atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelLibrary":
        return cls.from_bytes(Path(path).read_bytes())

    def to_json(self) -> dict:
        return {
            "format": MAGIC.decode(),
            "params": self.params.to_json(),
            "unit": self.unit,
            "models": [{
                "name": m.name,
                "n_vertices": m.mesh.n_vertices,
                "n_triangles": m.mesh.n_triangles,
                "features": [{"p": p.tolist(), "lrf": a.ravel().tolist(), "f": f.tolist()}
                             for p, a, f in zip(m.positions, m.axes, m.descriptors)],
            } for m in self.models],
        }

    def dump_json(self, path):
        from .io import atomic_write_text
        atomic_write_text(path, json.dumps(self.to_json()) + "\n")

    def check_params(self, params: Optional[RopsParams]):
        if params is not None and params != self.params:
            raise LibraryVersionError(f"library was built with {self.params}, requested {params}")


def build_model_library(models: Sequence[TriangleMesh], n_seeds: int = 1000,
                        params: RopsParams = RopsParams(), names: Optional[Sequence[str]] = None,
                        rho_mr: float = 2.0, unit: Optional[float] = None) -> ModelLibrary:
    """Describe ``n_seeds`` evenly spread points per model and index them.

    Seeds come from farthest-point sampling started at vertex 0, then greedy
    resolution control with radius ``rho_mr`` mesh resolutions drops seeds
    crowding an earlier one.  ``unit`` (one mr) defaults to the mean model
    resolution and fixes the support radius for every model and for scenes
    matched against this library.
    """
    names = [f"model{i}" for i in range(len(models))] if names is None else [str(n) for n in names]
    if len(set(names)) != len(names):
        raise ValueError("model names must be unique")
    if unit is None:
        unit = float(np.mean([m.resolution for m in models]))
    lib = ModelLibrary(params, unit)
    for name, mesh in zip(names, models):
        if mesh.n_vertices <= n_seeds:
            raise MeshError(f"model {name!r} has {mesh.n_vertices} vertices, needs more than {n_seeds}")
        seeds = farthest_point_sampling(mesh.vertices, n_seeds)
        seeds = resolution_control(mesh.vertices, seeds, rho_mr * unit)
        feats, skipped = describe_vertices(mesh, seeds, lib.support, params)
        if skipped:
            log.warning("model %s: skipped %d degenerate feature points", name, skipped)
        lib.skipped[name] = skipped
        lib.models.append(ModelEntry(
            name, mesh,
            np.array([f.position for f in feats]).reshape(-1, 3),
            np.array([f.lrf.axes for f in feats]).reshape(-1, 3, 3),
            np.array([f.descriptor for f in feats]).reshape(-1, params.length),
        ))
    return lib
