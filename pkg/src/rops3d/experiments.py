"""Desk-scale reproductions of the evaluation protocols.

Everything here is a pure function of its inputs and an integer seed, so the
CLI and the acceptance tests share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .decimate import decimate
from .features import describe_vertices
from .lrf import DegenerateSurfaceError, compute_lrf, lrf_error
from .matching import RPCurvePoint, rp_auc, rp_curve
from .mesh import (EmptySurfaceError, GroundTruthPose, TriangleMesh, add_gaussian_noise,
                   compose_scene, crop_local_surface)
from .pipeline import RecognitionResult
from .rops import RopsParams


def apply_nuisance(mesh: TriangleMesh, noise: float = 0.0, decimation: float = 1.0,
                   seed=None, unit: Optional[float] = None) -> TriangleMesh:
    """Decimate to ``decimation`` of the vertices, then add ``noise`` mr of Gaussian noise."""
    unit = mesh.resolution if unit is None else unit
    out = decimate(mesh, decimation) if decimation < 1 else mesh
    return add_gaussian_noise(out, noise, seed=seed, resolution=unit)


# --------------------------------------------------------------------- LRF ---

def lrf_error_experiment(models: Sequence[TriangleMesh], n_pairs: int = 200,
                         decimation: float = 0.5, noise: float = 0.1, seed: int = 0,
                         radius_mr: float = 15.0, max_corr_mr: float = 2.0) -> np.ndarray:
    """LRF errors (degrees) between model points and their nearest scene points.

    Each scene is the model decimated and noised; ``n_pairs`` is split evenly
    over the models.  Pairs farther apart than ``max_corr_mr`` or lying on a
    degenerate patch are skipped.
    """
    rng = np.random.default_rng(seed)
    per_model = [n_pairs // len(models) + (i < n_pairs % len(models)) for i in range(len(models))]
    errors = []
    for model, n in zip(models, per_model):
        mr = model.resolution
        scene = apply_nuisance(model, noise, decimation, seed=rng.integers(2**32), unit=mr)
        for v in rng.choice(model.n_vertices, size=n, replace=False):
            p = model.vertices[v]
            d, j = scene.kdtree.query(p)
            if d > max_corr_mr * mr:
                continue
            try:
                Lm = compute_lrf(crop_local_surface(model, p, radius_mr * mr))
                Ls = compute_lrf(crop_local_surface(scene, scene.vertices[j], radius_mr * mr))
            except (DegenerateSurfaceError, EmptySurfaceError):
                continue
            errors.append(lrf_error(Ls, Lm))
    return np.asarray(errors)


def lrf_histogram(errors, bin_width: float = 10.0):
    """Counts over ``[0, 180]`` in ``bin_width``-degree bins; returns (edges, counts)."""
    edges = np.arange(0.0, 180.0 + bin_width, bin_width)
    counts, _ = np.histogram(np.asarray(errors), bins=edges)
    return edges, counts


# ----------------------------------------------------------------- scenes ---

@dataclass
class SyntheticScene:
    mesh: TriangleMesh
    poses: list
    noise: float = 0.0
    decimation: float = 1.0


def synthetic_scenes(models: Sequence[TriangleMesh], names: Sequence[str], n_scenes: int,
                     k: int = 3, noise: float = 0.0, decimation: float = 1.0, seed: int = 0,
                     alternate: bool = False, unit: Optional[float] = None,
                     distractors: Sequence[TriangleMesh] = ()) -> list[SyntheticScene]:
    """Bologna-style scenes: ``k`` randomly posed models plus optional
    non-library distractors.  With ``alternate`` set, even scenes receive only
    the noise and odd scenes only the decimation."""
    unit = float(np.mean([m.resolution for m in models])) if unit is None else unit
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n_scenes):
        pool = list(models) + list(distractors)
        pool_names = list(names) + [f"distractor{i}" for i in range(len(distractors))]
        if distractors:
            scene, poses = compose_scene(pool, len(pool), seed=rng.integers(2**32),
                                         names=pool_names, min_k=1, max_k=len(pool))
            poses = [p for p in poses if not p.model_id.startswith("distractor")]
        else:
            scene, poses = compose_scene(models, k, seed=rng.integers(2**32), names=names,
                                         min_k=1, max_k=max(5, k))
        nz, dec = noise, decimation
        if alternate:
            nz, dec = (noise, 1.0) if s % 2 == 0 else (0.0, decimation)
        scene = apply_nuisance(scene, nz, dec, seed=rng.integers(2**32), unit=unit)
        out.append(SyntheticScene(scene, poses, nz, dec))
    return out


def rotation_angle_deg(Ra, Rb) -> float:
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


@dataclass
class SceneEvaluation:
    recognized: int
    total: int
    false_positives: int
    pose_errors: list = field(default_factory=list)   # (model, degrees, translation in mr)

    @property
    def rate(self) -> float:
        return self.recognized / self.total if self.total else 1.0


def evaluate_recognition(result: RecognitionResult, truth: Sequence[GroundTruthPose], unit: float,
                         max_angle: float = 5.0, max_translation_mr: float = 5.0) -> SceneEvaluation:
    """Match accepted instances to ground truth one-to-one; any instance that
    fits no unclaimed ground-truth pose of the same model is a false positive."""
    claimed = [False] * len(truth)
    fp = 0
    errors = []
    for inst in result.instances:
        best = None
        for gi, g in enumerate(truth):
            if claimed[gi] or g.model_id != inst.model:
                continue
            ang = rotation_angle_deg(inst.R, g.R)
            tr = float(np.linalg.norm(inst.t - g.t)) / unit
            if ang < max_angle and tr < max_translation_mr and (best is None or ang < best[1]):
                best = (gi, ang, tr)
        if best is None:
            fp += 1
        else:
            claimed[best[0]] = True
            errors.append((inst.model, best[1], best[2]))
    return SceneEvaluation(sum(claimed), len(truth), fp, errors)


# --------------------------------------------------------------- RP curves ---

def merge_rp_curves(curves: Sequence[Sequence[RPCurvePoint]]) -> list[RPCurvePoint]:
    """Pool the counts of several curves sampled at the same thresholds."""
    out = []
    for pts in zip(*curves):
        tp = sum(p.tp for p in pts)
        fp = sum(p.fp for p in pts)
        pos = sum(p.positives for p in pts)
        n = sum(p.matches for p in pts)
        out.append(RPCurvePoint(pts[0].threshold, tp / pos if pos else 0.0, fp / n if n else 0.0,
                                tp, fp, pos, n))
    return out


def rp_experiment(models: Sequence[TriangleMesh], names: Sequence[str], noise: float = 0.0,
                  decimation: float = 1.0, n_features: int = 200, seed: int = 0,
                  params: RopsParams = RopsParams(), thresholds=None,
                  tolerance_mr: float = 2.0, scene: Optional[SyntheticScene] = None) -> list[RPCurvePoint]:
    """Pooled RP curve of one synthetic scene.

    Feature points are random model vertices; their scene counterparts are
    the scene vertices nearest to the ground-truth images.  Scene features of
    each instance are matched against that model's features.
    """
    unit = float(np.mean([m.resolution for m in models]))
    rng = np.random.default_rng(seed)
    if scene is None:
        scene = synthetic_scenes(models, names, 1, k=len(models), noise=noise,
                                 decimation=decimation, seed=int(rng.integers(2**32)), unit=unit)[0]
    support = params.radius * unit
    by_name = dict(zip(names, models))
    curves = []
    for pose in scene.poses:
        model = by_name[pose.model_id]
        verts = rng.choice(model.n_vertices, size=min(n_features, model.n_vertices), replace=False)
        _, sverts = scene.mesh.kdtree.query(pose.apply(model.vertices[verts]))
        mf, _ = describe_vertices(model, verts, support, params)
        sf, _ = describe_vertices(scene.mesh, sverts, support, params)
        if len(mf) < 2 or not sf:
            continue
        curves.append(rp_curve([f.position for f in sf], [f.descriptor for f in sf],
                               [f.position for f in mf], [f.descriptor for f in mf],
                               pose.R, pose.t, tolerance_mr * unit, thresholds))
    return merge_rp_curves(curves)


def sweep_settings(kind: str) -> list[RopsParams]:
    """Parameter grids for the statistics / bins / rotations / radius sweeps."""
    if kind == "combination":
        return [RopsParams(combination=c) for c in range(1, 9)]
    if kind == "L":
        return [RopsParams(L=L) for L in range(3, 10)]
    if kind == "T":
        return [RopsParams(T=T) for T in range(1, 7)]
    if kind == "radius":
        return [RopsParams(radius=r) for r in (5.0, 10.0, 15.0, 20.0, 25.0)]
    raise ValueError(f"unknown sweep {kind!r}")


def sweep_experiment(models, names, kind: str, noise: float = 0.1, decimation: float = 0.5,
                     n_features: int = 150, seed: int = 0):
    """(params, auc, curve) per setting, all evaluated on one shared scene."""
    unit = float(np.mean([m.resolution for m in models]))
    scene = synthetic_scenes(models, names, 1, k=len(models), noise=noise, decimation=decimation,
                             seed=seed, unit=unit)[0]
    rows = []
    for p in sweep_settings(kind):
        curve = rp_experiment(models, names, n_features=n_features, seed=seed, params=p, scene=scene)
        rows.append((p, rp_auc(curve), curve))
    return rows
