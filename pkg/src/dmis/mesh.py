"""Delaunay triangulation over normalized (t, x) with linear interpolation.

Construction is incremental Bowyer-Watson with a far-away super triangle;
predicates live in `_kernels` (float64 fast path, double-double fallback).
Points are inserted in caller order, so a rebuild from the same list is
reproducible, and cocircular ties resolve by that order.
"""

from __future__ import annotations

import numpy as np

from ._kernels import (
    bary_weights,
    build_triangulation,
    locate_batch,
    orient2d,
    walk_locate,
)
from .errors import ContractViolation, DegenerateGeometryError

OUTSIDE = -1
DEDUP_EPS = 1e-12


class Triangulation:
    """Immutable Delaunay mesh; vertex values may be reassigned."""

    def __init__(self, ids, points, tri, adj):
        self.ids = ids              # caller ids per vertex, (nv,)
        self.points = points        # (nv, 2) normalized coordinates
        self.tri = tri              # (m, 3) vertex indices, CCW
        self.adj = adj              # (m, 3) neighbor across edge (k, k+1)
        self.values = np.zeros(len(ids))

    @property
    def n_triangles(self):
        return self.tri.shape[0]

    def set_values(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self.ids),):
            raise ContractViolation("one value per mesh vertex required")
        self.values = values

    def locate(self, p):
        """Triangle id containing p, or OUTSIDE.

        Points on an edge/vertex get the lowest containing triangle id.
        """
        px, py = float(p[0]), float(p[1])
        tid, exact = walk_locate(self.tri, self.adj, self.points, 0, px, py)
        if tid >= 0 and not exact:
            return self._lowest_containing(px, py, tid)
        return tid

    def _lowest_containing(self, px, py, fallback):
        for cand in range(self.n_triangles):
            inside = True
            for k in range(3):
                a = self.tri[cand, k]
                b = self.tri[cand, (k + 1) % 3]
                if orient2d(
                    self.points[a, 0], self.points[a, 1],
                    self.points[b, 0], self.points[b, 1],
                    px, py,
                ) < 0:
                    inside = False
                    break
            if inside:
                return cand
        return fallback

    def interpolate(self, p):
        """Barycentric value at p; nearest-vertex value outside the hull."""
        if self.n_triangles == 0:
            raise ContractViolation("mesh has no triangles")
        px, py = float(p[0]), float(p[1])
        tid, _ = walk_locate(self.tri, self.adj, self.points, 0, px, py)
        if tid == OUTSIDE:
            d = (self.points[:, 0] - px) ** 2 + (self.points[:, 1] - py) ** 2
            return float(self.values[int(np.argmin(d))])
        w = bary_weights(
            self.tri, self.points, np.array([tid]), np.array([px]), np.array([py])
        )[0]
        v = self.values[self.tri[tid]]
        return float(w @ v)

    def plan_queries(self, qpoints):
        """Precompute the interpolation stencil for many query points.

        Returns (vert_idx (n,3), weights (n,3)); outside-hull queries get
        their nearest vertex with weight 1.  `interpolate_planned` then
        evaluates any value assignment in one gather.
        """
        qpoints = np.asarray(qpoints, dtype=np.float64)
        qx = np.ascontiguousarray(qpoints[:, 0])
        qy = np.ascontiguousarray(qpoints[:, 1])
        tid, _ = locate_batch(self.tri, self.adj, self.points, qx, qy)
        w = bary_weights(self.tri, self.points, tid, qx, qy)
        vert_idx = np.zeros((qx.shape[0], 3), dtype=np.int64)
        inside = tid >= 0
        vert_idx[inside] = self.tri[tid[inside]]
        out = np.nonzero(~inside)[0]
        if out.size:
            px = self.points[:, 0]
            py = self.points[:, 1]
            for i in out:
                d = (px - qx[i]) ** 2 + (py - qy[i]) ** 2
                vert_idx[i] = int(np.argmin(d))
                w[i] = (1.0, 0.0, 0.0)
        return vert_idx, w

    def interpolate_planned(self, vert_idx, weights, values=None):
        v = self.values if values is None else np.asarray(values, dtype=np.float64)
        return np.einsum("ij,ij->i", v[vert_idx], weights)

    def triangle_csv(self, path):
        """Dump vertices and triangles for debugging/plotting."""
        with open(path, "w", newline="\n") as fh:
            fh.write("kind,a,b,c,value\n")
            for i, pid in enumerate(self.ids):
                fh.write(
                    f"vertex,{pid},{self.points[i, 0]!r},"
                    f"{self.points[i, 1]!r},{self.values[i]!r}\n"
                )
            for t in range(self.n_triangles):
                a, b, c = (self.ids[v] for v in self.tri[t])
                fh.write(f"triangle,{a},{b},{c},\n")


def build(points) -> Triangulation:
    """Delaunay triangulation of [(id, t_norm, x_norm), ...].

    Duplicates closer than DEDUP_EPS are dropped (first id wins).  Fewer
    than 3 distinct points, or all collinear, raise DegenerateGeometryError.
    """
    pts = np.asarray([(p[1], p[2]) for p in points], dtype=np.float64)
    ids = np.asarray([p[0] for p in points], dtype=np.int64)
    if pts.shape[0] > 0:
        keep = np.ones(pts.shape[0], dtype=bool)
        seen = {}
        for i in range(pts.shape[0]):
            key = (round(pts[i, 0] / DEDUP_EPS), round(pts[i, 1] / DEDUP_EPS))
            if key in seen:
                keep[i] = False
            else:
                seen[key] = i
        pts = pts[keep]
        ids = ids[keep]
    if pts.shape[0] < 3:
        raise DegenerateGeometryError(
            f"need at least 3 distinct points, have {pts.shape[0]}"
        )
    tri, adj = build_triangulation(np.ascontiguousarray(pts))
    if tri.shape[0] == 0:
        raise DegenerateGeometryError("all points are collinear")
    return Triangulation(ids, pts, tri, adj)
