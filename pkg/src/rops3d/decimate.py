"""Quadric-error edge-collapse decimation (Garland & Heckbert style).

The collapse loop is plain Python over adjacency sets; quadrics live in
10-tuples (upper triangle of the symmetric 4x4 matrix) so the per-edge work
avoids numpy's per-call overhead.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .mesh import MeshError, TriangleMesh

_BOUNDARY_WEIGHT = 100.0
_MIN_FLIP_COS = 0.2


def _plane_quadric(n, d, w):
    a, b, c = n
    return (w * a * a, w * a * b, w * a * c, w * a * d,
            w * b * b, w * b * c, w * b * d,
            w * c * c, w * c * d, w * d * d)


def _qadd(q, r):
    return tuple(x + y for x, y in zip(q, r))


def _qeval(q, x, y, z):
    a2, ab, ac, ad, b2, bc, bd, c2, cd, d2 = q
    return (a2 * x * x + 2 * ab * x * y + 2 * ac * x * z + 2 * ad * x
            + b2 * y * y + 2 * bc * y * z + 2 * bd * y
            + c2 * z * z + 2 * cd * z + d2)


def _sub(p, q):
    return (p[0] - q[0], p[1] - q[1], p[2] - q[2])


def _cross(u, v):
    return (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


class _Decimator:
    def __init__(self, mesh: TriangleMesh):
        self.pos = [tuple(p) for p in mesh.vertices.tolist()]
        self.faces = [list(f) for f in mesh.triangles.tolist()]
        self.face_alive = [True] * len(self.faces)
        n = mesh.n_vertices
        self.vf = [set() for _ in range(n)]
        for fi, f in enumerate(self.faces):
            for vi in f:
                self.vf[vi].add(fi)
        self.alive = [len(s) > 0 for s in self.vf]
        self.n_alive = sum(self.alive)
        self.stamp = [0] * n
        self.quadric = self._initial_quadrics(mesh)
        self.heap = []

    def _initial_quadrics(self, mesh):
        v, f = mesh.vertices, mesh.triangles
        p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        cr = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(cr, axis=1)
        area = 0.5 * norm
        nrm = np.divide(cr, norm[:, None], out=np.zeros_like(cr), where=norm[:, None] > 0)
        d = -np.einsum("ij,ij->i", nrm, p0)
        plane = np.column_stack([nrm, d])
        K = area[:, None, None] * plane[:, :, None] * plane[:, None, :]
        iu = np.triu_indices(4)
        Kf = K[:, iu[0], iu[1]]
        Q = np.zeros((mesh.n_vertices, 10))
        for c in range(3):
            np.add.at(Q, f[:, c], Kf)

        # boundary edges get a constraint plane perpendicular to their face
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        owner = np.tile(np.arange(len(f)), 3)
        key = np.sort(e, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        bmask = counts[inv] == 1
        if bmask.any():
            be, bf = e[bmask], owner[bmask]
            a, b = v[be[:, 0]], v[be[:, 1]]
            edge = b - a
            elen = np.linalg.norm(edge, axis=1)
            bn = np.cross(edge, nrm[bf])
            bl = np.linalg.norm(bn, axis=1)
            bn = np.divide(bn, bl[:, None], out=np.zeros_like(bn), where=bl[:, None] > 0)
            bd = -np.einsum("ij,ij->i", bn, a)
            bp = np.column_stack([bn, bd])
            w = _BOUNDARY_WEIGHT * elen ** 2
            BK = w[:, None, None] * bp[:, :, None] * bp[:, None, :]
            BKf = BK[:, iu[0], iu[1]]
            np.add.at(Q, be[:, 0], BKf)
            np.add.at(Q, be[:, 1], BKf)
        return [tuple(row) for row in Q.tolist()]

    def neighbors(self, u):
        out = set()
        for fi in self.vf[u]:
            out.update(self.faces[fi])
        out.discard(u)
        return out

    def _placement(self, u, v):
        q = _qadd(self.quadric[u], self.quadric[v])
        a2, ab, ac, ad, b2, bc, bd, c2, cd, _ = q
        pu, pv = self.pos[u], self.pos[v]
        mid = ((pu[0] + pv[0]) / 2, (pu[1] + pv[1]) / 2, (pu[2] + pv[2]) / 2)
        det = (a2 * (b2 * c2 - bc * bc) - ab * (ab * c2 - bc * ac) + ac * (ab * bc - b2 * ac))
        scale = (a2 + b2 + c2) / 3.0
        candidates = [pu, pv, mid]
        if scale > 0 and abs(det) > 1e-9 * scale ** 3:
            # Cramer's rule for A x = -b
            rx, ry, rz = -ad, -bd, -cd
            x = (rx * (b2 * c2 - bc * bc) - ab * (ry * c2 - bc * rz) + ac * (ry * bc - b2 * rz)) / det
            y = (a2 * (ry * c2 - rz * bc) - rx * (ab * c2 - bc * ac) + ac * (ab * rz - ry * ac)) / det
            z = (a2 * (b2 * rz - bc * ry) - ab * (ab * rz - ry * ac) + rx * (ab * bc - b2 * ac)) / det
            elen2 = _dot(_sub(pu, pv), _sub(pu, pv))
            off = _sub((x, y, z), mid)
            if _dot(off, off) <= 4.0 * elen2:
                candidates.insert(0, (x, y, z))
        best, best_cost = None, math.inf
        for c in candidates:
            cost = _qeval(q, *c)
            if cost < best_cost:
                best, best_cost = c, cost
        return max(best_cost, 0.0), best

    def push(self, u, v):
        if u > v:
            u, v = v, u
        cost, target = self._placement(u, v)
        heapq.heappush(self.heap, (cost, u, v, self.stamp[u], self.stamp[v], target))

    def _is_boundary_edge(self, shared):
        return len(shared) == 1

    def _vertex_on_boundary(self, u):
        counts = {}
        for fi in self.vf[u]:
            for w in self.faces[fi]:
                if w != u:
                    counts[w] = counts.get(w, 0) + 1
        return any(c == 1 for c in counts.values())

    def valid(self, u, v, target):
        shared = self.vf[u] & self.vf[v]
        if not shared or len(shared) > 2:
            return False
        nu, nv = self.neighbors(u), self.neighbors(v)
        opposite = set()
        for fi in shared:
            opposite.update(self.faces[fi])
        opposite -= {u, v}
        if (nu & nv) != opposite:
            return False
        if len(shared) == 2 and self._vertex_on_boundary(u) and self._vertex_on_boundary(v):
            return False
        if len((nu | nv) - {u, v}) < 3:
            return False
        for x in (u, v):
            for fi in self.vf[x]:
                if fi in shared:
                    continue
                f = self.faces[fi]
                pts = [self.pos[w] for w in f]
                n_old = _cross(_sub(pts[1], pts[0]), _sub(pts[2], pts[0]))
                pts = [target if w == x else self.pos[w] for w in f]
                n_new = _cross(_sub(pts[1], pts[0]), _sub(pts[2], pts[0]))
                lo, ln = _dot(n_old, n_old), _dot(n_new, n_new)
                if ln <= 1e-30 * max(lo, 1e-300):
                    return False
                if _dot(n_old, n_new) < _MIN_FLIP_COS * math.sqrt(lo * ln):
                    return False
        return True

    def collapse(self, u, v, target):
        shared = self.vf[u] & self.vf[v]
        for fi in shared:
            self.face_alive[fi] = False
            for w in self.faces[fi]:
                self.vf[w].discard(fi)
        for fi in self.vf[v]:
            f = self.faces[fi]
            f[f.index(v)] = u
            self.vf[u].add(fi)
        self.vf[v] = set()
        self.alive[v] = False
        self.n_alive -= 1
        self.pos[u] = target
        self.quadric[u] = _qadd(self.quadric[u], self.quadric[v])
        self.stamp[u] += 1
        self.stamp[v] += 1
        for w in self.neighbors(u):
            self.push(u, w)

    def run(self, target_vertices: int):
        for u in range(len(self.pos)):
            if not self.alive[u]:
                continue
            for w in self.neighbors(u):
                if w > u:
                    self.push(u, w)
        while self.n_alive > target_vertices and self.heap:
            cost, u, v, su, sv, target = heapq.heappop(self.heap)
            if not (self.alive[u] and self.alive[v]) or su != self.stamp[u] or sv != self.stamp[v]:
                continue
            if not self.valid(u, v, target):
                continue
            self.collapse(u, v, target)

    def result(self, labels):
        keep = np.asarray(self.alive, dtype=bool)
        remap = np.full(len(keep), -1, dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        faces = np.asarray([f for f, a in zip(self.faces, self.face_alive) if a], dtype=np.int64).reshape(-1, 3)
        verts = np.asarray(self.pos, dtype=np.float64)[keep]
        lab = None if labels is None else labels[keep]
        return TriangleMesh(verts, remap[faces], lab)


def decimate(mesh: TriangleMesh, target_fraction: float) -> TriangleMesh:
    """Collapse edges by increasing quadric error until the vertex count
    drops to ``round(target_fraction * n_vertices)``.

    Collapses that would break manifoldness (link condition), pinch a
    boundary, or flip a neighbouring face are skipped.  Unreferenced vertices
    are dropped from the result.
    """
    if not 0 < target_fraction <= 1:
        raise ValueError("target_fraction must lie in (0, 1]")
    if target_fraction == 1:
        return mesh
    target = int(round(target_fraction * mesh.n_vertices))
    if target < 3:
        raise MeshError(f"decimating to {target} vertices leaves no surface")
    dec = _Decimator(mesh)
    dec.run(target)
    return dec.result(mesh.labels)
