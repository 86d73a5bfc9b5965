"""Single-correspondence pose hypotheses and their clustering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

EULER_SEQ = "ZYX"   # intrinsic


@dataclass(frozen=True, eq=False)
class TransformHypothesis:
    """Rigid map ``q_scene = q_model @ R + t`` for one model."""

    model_id: str
    R: np.ndarray
    t: np.ndarray
    source: tuple = ()          # (scene feature id, model feature id)
    distance: float = 0.0       # descriptor distance of the correspondence


@dataclass(eq=False)
class HypothesisCluster:
    model_id: str
    members: list
    R: np.ndarray
    t: np.ndarray
    euler: np.ndarray
    n_f: int
    d: float
    score: float
    hypotheses: list = field(default_factory=list, repr=False)


def hypothesize(p_s, F_s, p_m, F_m, model_id: str = "", source=(), distance: float = 0.0):
    """Align the model feature's frame onto the scene feature's frame.

    With frame axes stored as rows, ``R = F_m.T @ F_s`` satisfies
    ``F_m @ R = F_s`` and ``t = p_s - p_m @ R`` maps ``p_m`` onto ``p_s``.
    """
    F_s = getattr(F_s, "axes", F_s)
    F_m = getattr(F_m, "axes", F_m)
    R = np.asarray(F_m).T @ np.asarray(F_s)
    t = np.asarray(p_s, float) - np.asarray(p_m, float) @ R
    return TransformHypothesis(model_id, R, t, tuple(source), float(distance))


def to_euler(R) -> np.ndarray:
    """Intrinsic Z-Y-X angles of one or many row-convention rotations."""
    R = np.asarray(R, float)
    # q @ R is the column-convention rotation R.T
    return Rotation.from_matrix(np.swapaxes(R, -1, -2)).as_euler(EULER_SEQ)


def from_euler(u) -> np.ndarray:
    return np.swapaxes(Rotation.from_euler(EULER_SEQ, u).as_matrix(), -1, -2)


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def euler_distance(u1, u2) -> np.ndarray:
    return np.linalg.norm(_wrap(np.asarray(u1) - np.asarray(u2)), axis=-1)


def cluster_hypotheses(hyps: Sequence[TransformHypothesis], tau_a: float = 0.2,
                       tau_t: float = 30.0, distances=None) -> list[HypothesisCluster]:
    """Group hypotheses around each one, score, prune and select.

    Every hypothesis seeds a cluster of all hypotheses within ``tau_a``
    (radians, Euler-angle distance) and ``tau_t`` (translation).  The center
    is the member mean: Euler offsets are averaged relative to the seed and
    converted back to a rotation.  Clusters scoring below half the best
    ``n_f / d`` are dropped; the rest are accepted best-first, skipping any
    whose center is within both thresholds of an accepted one.
    """
    if not hyps:
        return []
    order = sorted(range(len(hyps)), key=lambda i: (hyps[i].source, i))
    hyps = [hyps[i] for i in order]
    if distances is None:
        dist = np.array([h.distance for h in hyps], dtype=np.float64)
    else:
        dist = np.asarray(distances, dtype=np.float64)[order]
    R = np.stack([h.R for h in hyps])
    T = np.stack([h.t for h in hyps])
    U = to_euler(R)

    clusters = []
    for i in range(len(hyps)):
        diff = _wrap(U - U[i])
        near = (np.linalg.norm(diff, axis=1) < tau_a) & (np.linalg.norm(T - T[i], axis=1) < tau_t)
        members = np.flatnonzero(near)
        u_c = U[i] + diff[members].mean(axis=0)
        t_c = T[members].mean(axis=0)
        n_f = len(members)
        d = max(float(dist[members].mean()), np.finfo(float).tiny)
        clusters.append(HypothesisCluster(
            hyps[i].model_id, members.tolist(), from_euler(u_c), t_c, _wrap(u_c),
            n_f, d, n_f / d, [hyps[j] for j in members]))

    best = max(c.score for c in clusters)
    survivors = [c for c in clusters if c.score >= best / 2]
    survivors.sort(key=lambda c: -c.score)      # stable: canonical order breaks ties

    selected = []
    for c in survivors:
        if any(euler_distance(c.euler, s.euler) < tau_a and np.linalg.norm(c.t - s.t) < tau_t
               for s in selected):
            continue
        selected.append(c)
    return selected
