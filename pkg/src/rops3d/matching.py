"""Exact nearest-neighbour matching and recall / 1-precision evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_TAU_F = 0.8


@dataclass(frozen=True)
class FeatureCorrespondence:
    scene_feature: int
    model_id: str
    model_feature: int
    distance: float
    ratio: float


@dataclass(frozen=True)
class RPCurvePoint:
    threshold: float
    recall: float
    one_minus_precision: float
    tp: int
    fp: int
    positives: int
    matches: int


def _ratio(d1: float, d2: float) -> float:
    # exact duplicates (d2 == 0) count as a perfect match
    return d1 / d2 if d2 > 0 else 0.0


class DescriptorIndex:
    """k-d tree over fixed-length descriptors answering exact 2-NN queries.

    Entries are stored sorted by label so results never depend on insertion
    order; distance ties resolve to the smallest ``(model id, feature id)``.
    """

    def __init__(self, descriptors, labels: Sequence[tuple]):
        X = np.asarray(descriptors, dtype=np.float64)
        if X.ndim != 2 or len(X) < 2:
            raise ValueError("an index needs at least two descriptors of uniform length")
        if len(labels) != len(X):
            raise ValueError("one label per descriptor required")
        order = sorted(range(len(X)), key=lambda i: labels[i])
        self.labels = [tuple(labels[i]) for i in order]
        self.data = np.ascontiguousarray(X[order])
        self.data.setflags(write=False)
        self.tree = cKDTree(self.data)

    def __len__(self):
        return len(self.data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def query2(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the two nearest stored entries."""
        q = np.asarray(q, dtype=np.float64)
        single = q.ndim == 1
        Q = np.atleast_2d(q)
        dist, idx = self.tree.query(Q, k=2, eps=0.0)
        for r in range(len(Q)):
            # exact-tie resolution by label (sorted storage makes it "lowest row")
            if dist[r, 0] == dist[r, 1]:
                cand = self.tree.query_ball_point(Q[r], dist[r, 0] * (1 + 1e-12) + 1e-300)
                cand = sorted(cand)
                d = np.linalg.norm(self.data[cand] - Q[r], axis=1)
                best = [cand[i] for i in np.argsort(d, kind="stable")[:2]]
                if len(best) == 2:
                    idx[r] = best
                    dist[r] = np.linalg.norm(self.data[best] - Q[r], axis=1)
        if single:
            return idx[0], dist[0]
        return idx, dist


def build_index(descriptors, labels) -> DescriptorIndex:
    return DescriptorIndex(descriptors, labels)


def brute_force_2nn(data: np.ndarray, q: np.ndarray):
    """Reference 2-NN by exhaustive distance evaluation (lowest index wins ties)."""
    d = np.sqrt(((np.asarray(data) - q) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")[:2]
    return order, d[order]


def match_features(index: DescriptorIndex, query, tau_f: float = DEFAULT_TAU_F,
                   scene_feature: int = -1) -> Optional[FeatureCorrespondence]:
    """Ratio-test match of one descriptor; ``None`` when the ratio is not below ``tau_f``."""
    if not 0 < tau_f <= 1:
        raise ValueError("tau_f must lie in (0, 1]")
    idx, dist = index.query2(query)
    ratio = _ratio(float(dist[0]), float(dist[1]))
    if not ratio < tau_f:
        return None
    model_id, feat = index.labels[int(idx[0])]
    return FeatureCorrespondence(scene_feature, model_id, int(feat), float(dist[0]), ratio)


def match_all(index: DescriptorIndex, queries: np.ndarray, tau_f: float = DEFAULT_TAU_F):
    """Match every row of ``queries``; returns the accepted correspondences."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if len(queries) == 0:
        return []
    idx, dist = index.query2(queries)
    out = []
    for r in range(len(queries)):
        ratio = _ratio(float(dist[r, 0]), float(dist[r, 1]))
        if ratio < tau_f:
            model_id, feat = index.labels[int(idx[r, 0])]
            out.append(FeatureCorrespondence(r, model_id, int(feat), float(dist[r, 0]), ratio))
    return out


def rp_curve(scene_positions, scene_descriptors, model_positions, model_descriptors,
             R, t, tolerance: float, thresholds=None) -> list[RPCurvePoint]:
    """Recall vs 1-precision of ratio-test matching against ground truth.

    A match is a true positive when the matched model feature, mapped into the
    scene by ``(R, t)``, lies within ``tolerance`` of the scene feature.  The
    positive count is the number of scene features with any model feature
    within ``tolerance`` under the ground-truth pose.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    thresholds = np.linspace(0.05, 1.0, 20) if thresholds is None else np.asarray(thresholds, float)
    ps = np.asarray(scene_positions, float)
    pm = np.asarray(model_positions, float) @ np.asarray(R, float) + np.asarray(t, float)
    labels = [("m", i) for i in range(len(pm))]
    index = DescriptorIndex(model_descriptors, labels)
    idx, dist = index.query2(np.asarray(scene_descriptors, float))
    nn = np.array([index.labels[i][1] for i in idx[:, 0]], dtype=np.int64)
    ratio = np.array([_ratio(a, b) for a, b in dist])
    correct = np.linalg.norm(ps - pm[nn], axis=1) < tolerance
    near, _ = cKDTree(pm).query(ps, k=1)
    positives = int((near < tolerance).sum())
    out = []
    for th in thresholds:
        matched = ratio < th
        tp = int((matched & correct).sum())
        n = int(matched.sum())
        fp = n - tp
        out.append(RPCurvePoint(float(th), tp / positives if positives else 0.0,
                                fp / n if n else 0.0, tp, fp, positives, n))
    return out


def rp_auc(points: Sequence[RPCurvePoint]) -> float:
    """Area under the best-recall envelope over 1-precision in [0, 1].

    Recall at a given 1-precision ``x`` is the best recall reached by any
    threshold whose 1-precision does not exceed ``x``; a perfect descriptor
    scores 1.
    """
    pts = sorted((p.one_minus_precision, p.recall) for p in points)
    area, best = 0.0, 0.0
    for k, (x, y) in enumerate(pts):
        best = max(best, y)
        nxt = pts[k + 1][0] if k + 1 < len(pts) else 1.0
        area += best * (nxt - x)
    return area
