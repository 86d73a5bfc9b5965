"""Online recognition: scene features, candidates, hypotheses, verification."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .decimate import decimate
from .features import Feature, describe_vertices, resolution_control
from .hypotheses import HypothesisCluster, cluster_hypotheses, hypothesize
from .icp import icp_refine
from .library import ModelLibrary
from .matching import DEFAULT_TAU_F, FeatureCorrespondence, match_all
from .mesh import GroundTruthPose, TriangleMesh
from .rops import RopsParams

log = logging.getLogger(__name__)

BACKGROUND = -1


@dataclass(frozen=True)
class RecognitionParams:
    """Thresholds of the online stages; lengths are in mesh resolutions."""

    tau_f: float = DEFAULT_TAU_F
    tau_lambda: float = 1.2
    tau_a: float = 0.2
    tau_t: float = 30.0
    eps1: float = 0.75
    eps2: float = 1.5
    alpha1: float = 0.04
    alpha2: float = 0.2
    seed_fraction: float = 1 / 8
    rho: float = 2.0
    corr_radius: float = 2.0
    min_remaining: int = 100
    icp_iterations: int = 50
    icp_reject: float = 4.0
    icp_tol: float = 1e-4
    reject_boundary: bool = True

    def __post_init__(self):
        for k, v in asdict(self).items():
            if isinstance(v, float) and not v > 0:
                raise ValueError(f"{k} must be positive")
        if not 0 < self.seed_fraction <= 1:
            raise ValueError("seed_fraction must lie in (0, 1]")

    def accepts(self, epsilon: float, alpha: float) -> bool:
        """Flexible two-branch acceptance on residual (mr) and visible proportion."""
        return (epsilon < self.eps1 and alpha > self.alpha1) or \
               (epsilon < self.eps2 and alpha > self.alpha2)


@dataclass(frozen=True)
class RecognizedInstance:
    model: str
    R: np.ndarray
    t: np.ndarray
    epsilon_mr: float
    alpha: float

    def to_json(self) -> dict:
        return {"model": self.model, "R": self.R.ravel().tolist(), "t": self.t.tolist(),
                "epsilon_mr": self.epsilon_mr, "alpha": self.alpha}


@dataclass(eq=False)
class RecognitionResult:
    instances: list
    segmentation: np.ndarray           # per scene vertex: index into ``models`` or -1
    models: list = field(default_factory=list)
    n_features: int = 0
    votes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"instances": [i.to_json() for i in self.instances],
                "models": list(self.models),
                "segmentation": self.segmentation.tolist(),
                "n_features": self.n_features,
                "votes": dict(self.votes)}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def seed_vertices(scene: TriangleMesh, fraction: float) -> np.ndarray:
    """Scene vertices closest to the vertices of a decimated copy, in order."""
    low = decimate(scene, fraction) if fraction < 1 else scene
    _, idx = scene.kdtree.query(low.vertices)
    _, first = np.unique(idx, return_index=True)
    return idx[np.sort(first)]


def detect_scene_features(scene: TriangleMesh, library_or_unit, params: RecognitionParams = RecognitionParams(),
                          rops: Optional[RopsParams] = None, describe: bool = True) -> list[Feature]:
    """Seeds from decimation, resolution control, boundary and eigen-ratio
    filtering; survivors carry their LRF (and descriptor when ``describe``)."""
    if isinstance(library_or_unit, ModelLibrary):
        unit, rops = library_or_unit.unit, library_or_unit.params
    else:
        unit, rops = float(library_or_unit), rops or RopsParams()
    seeds = seed_vertices(scene, params.seed_fraction)
    seeds = resolution_control(scene.vertices, seeds, params.rho * unit)
    feats, _ = describe_vertices(scene, seeds, rops.radius * unit, rops,
                                 min_eigen_ratio=params.tau_lambda,
                                 reject_boundary=params.reject_boundary)
    if not describe:
        feats = [Feature(f.vertex, f.position, f.lrf) for f in feats]
    return feats


def rank_candidates(corrs: Sequence[FeatureCorrespondence]) -> list[tuple[str, int]]:
    """Models with at least one vote, most votes first (name breaks ties)."""
    votes = Counter(c.model_id for c in corrs)
    return sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))


def generate_hypotheses(features: Sequence[Feature], corrs, library: ModelLibrary, model_id: str):
    out = []
    entry = library.model(model_id)
    for c in corrs:
        if c.model_id != model_id:
            continue
        f = features[c.scene_feature]
        out.append(hypothesize(f.position, f.lrf.axes, entry.positions[c.model_feature],
                               entry.axes[c.model_feature], model_id,
                               (c.scene_feature, c.model_feature), c.distance))
    return out


def visible_proportion(scene_points: np.ndarray, model_points: np.ndarray, radius: float) -> tuple[float, np.ndarray]:
    """Fraction of ``scene_points`` within ``radius`` of any model point, and their mask."""
    if len(scene_points) == 0:
        return 0.0, np.zeros(0, dtype=bool)
    d, _ = cKDTree(model_points).query(scene_points, distance_upper_bound=radius)
    mask = d < radius
    return float(mask.mean()), mask


def verify_and_segment(scene: TriangleMesh, library: ModelLibrary,
                       candidates: Sequence[tuple[str, Sequence[HypothesisCluster]]],
                       params: RecognitionParams = RecognitionParams()) -> RecognitionResult:
    """Try clusters best-first per candidate; accepted instances claim their
    scene points, which are then excluded from later verification."""
    names = library.names
    seg = np.full(scene.n_vertices, BACKGROUND, dtype=np.int64)
    instances = []
    for model_id, clusters in candidates:
        entry = library.model(model_id)
        mr = entry.resolution
        for cl in clusters:
            remaining = np.flatnonzero(seg == BACKGROUND)
            if len(remaining) < params.min_remaining:
                break
            pts = scene.vertices[remaining]
            tree = cKDTree(pts)
            res = icp_refine(pts, entry.mesh, cl.R, cl.t, mr, params.icp_iterations,
                             params.icp_tol, params.icp_reject, scene_tree=tree)
            if not np.isfinite(res.epsilon):
                continue
            alpha, mask = visible_proportion(pts, entry.mesh.vertices @ res.R + res.t,
                                             params.corr_radius * mr)
            log.debug("%s: eps=%.3f mr alpha=%.3f", model_id, res.epsilon, alpha)
            if params.accepts(res.epsilon, alpha) and mask.any():
                seg[remaining[mask]] = names.index(model_id)
                instances.append(RecognizedInstance(model_id, res.R, res.t, res.epsilon, alpha))
        if np.count_nonzero(seg == BACKGROUND) < params.min_remaining:
            break
    return RecognitionResult(instances, seg, names)


def recognize(scene: TriangleMesh, library: ModelLibrary,
              params: RecognitionParams = RecognitionParams(),
              rops: Optional[RopsParams] = None) -> RecognitionResult:
    """Full online pipeline against ``library``."""
    library.check_params(rops)
    feats = detect_scene_features(scene, library, params)
    if not feats or library.record_count() < 2:
        return RecognitionResult([], np.full(scene.n_vertices, BACKGROUND, dtype=np.int64),
                                 library.names, len(feats))
    corrs = match_all(library.index, np.stack([f.descriptor for f in feats]), params.tau_f)
    ranked = rank_candidates(corrs)
    candidates = []
    for model_id, _votes in ranked:
        hyps = generate_hypotheses(feats, corrs, library, model_id)
        clusters = cluster_hypotheses(hyps, params.tau_a, params.tau_t * library.unit)
        candidates.append((model_id, clusters))
    result = verify_and_segment(scene, library, candidates, params)
    result.n_features = len(feats)
    result.votes = dict(ranked)
    return result


def occlusion(model: TriangleMesh, scene: TriangleMesh, pose: GroundTruthPose,
              resolution: Optional[float] = None) -> tuple[float, float]:
    """``(occlusion, visible_fraction)`` of a posed model in a scene.

    A model triangle counts as visible when all three vertices have a scene
    vertex within twice the model resolution; occlusion is one minus the
    visible share of the model's surface area.
    """
    mr = model.resolution if resolution is None else resolution
    total = model.area
    if scene.n_vertices == 0 or total <= 0:
        return 1.0, 0.0
    d, _ = scene.kdtree.query(pose.apply(model.vertices), distance_upper_bound=2 * mr)
    seen = d < 2 * mr
    tri_seen = seen[model.triangles].all(axis=1)
    visible = float(model.triangle_areas[tri_seen].sum() / total)
    return 1.0 - visible, visible
