"""Connected components, crossing detection and directed out-clusters."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import BoxRegion


def union_find(n, edges):
    """Component roots for ``n`` nodes joined by ``edges`` (shape ``(m, 2)``).

    Vectorised hook-and-compress: every round hooks the larger root of each
    unmerged edge onto the smaller one, then compresses paths by pointer
    jumping. Parents only ever decrease, so the final root of every node is
    the smallest index in its component.
    """
    parent = np.arange(n, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n == 0 or edges.size == 0:
        return parent
    u, v = edges[:, 0], edges[:, 1]
    while True:
        while True:
            grand = parent[parent]
            if np.array_equal(grand, parent):
                break
            parent = grand
        ru, rv = parent[u], parent[v]
        live = ru != rv
        if not live.any():
            return parent
        u, v, ru, rv = u[live], v[live], ru[live], rv[live]
        np.minimum.at(parent, np.maximum(ru, rv), np.minimum(ru, rv))


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Component id per point; the id is the smallest point index in the component."""

    label: np.ndarray

    @property
    def n(self):
        return self.label.size

    @property
    def sizes(self):
        ids, counts = np.unique(self.label, return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))

    @property
    def n_components(self):
        return int(np.unique(self.label).size)

    @property
    def largest_fraction(self):
        if self.n == 0:
            return 0.0
        return float(np.bincount(self.label).max() / self.n)

    def largest_fraction_within(self, mask):
        """Largest share of the points in ``mask`` that belong to a single component."""
        sub = self.label[mask]
        if sub.size == 0:
            return 0.0
        return float(np.unique(sub, return_counts=True)[1].max() / sub.size)

    def component(self, i):
        return np.flatnonzero(self.label == self.label[i])


def label_clusters(graph):
    """Connected components of ``graph.undirected_edges``."""
    return ClusterLabeling(union_find(graph.n, graph.undirected_edges))


@dataclass(frozen=True)
class CrossingReport:
    axis: int
    inner_box: BoxRegion
    crossing: bool
    crossing_component: int | None = None


def face_slabs(points, inner_box, axis, slab=None):
    """Masks of inner points within ``slab`` of the low / high face along ``axis``.

    The default slab is one index cell, ``(1/lambda)^(1/d)``.
    """
    if not 0 <= axis < inner_box.dim:
        raise ValueError(f"axis {axis} out of range for a {inner_box.dim}-d box")
    if slab is None:
        slab = (1.0 / points.density) ** (1.0 / points.dim)
    inner = inner_box.contains(points.coords) if points.n else np.zeros(0, dtype=bool)
    x = points.coords[:, axis]
    low = inner & (x <= inner_box.lower[axis] + slab)
    high = inner & (x >= inner_box.upper[axis] - slab)
    return low, high


def crossing_exists(labeling, points, inner_box, axis=0, slab=None):
    """Is there a component touching both faces of ``inner_box`` along ``axis``?

    Components come from the whole (buffered) graph; only points inside
    ``inner_box`` count as touching a face.
    """
    if not points.box.contains_box(inner_box):
        raise ValueError("inner box must lie inside the sampling box")
    low, high = face_slabs(points, inner_box, axis, slab)
    common = np.intersect1d(labeling.label[low], labeling.label[high])
    if common.size == 0:
        return CrossingReport(axis, inner_box, False, None)
    counts = np.bincount(labeling.label)[common]
    return CrossingReport(axis, inner_box, True, int(common[np.argmax(counts)]))


def out_cluster(graph, origin):
    """Points reachable from ``origin`` along directed reach edges."""
    if not 0 <= origin < graph.n:
        raise ValueError(f"origin {origin} out of range")
    csr = graph.reach_csr
    seen = np.zeros(graph.n, dtype=bool)
    seen[origin] = True
    queue = deque([origin])
    while queue:
        x = queue.popleft()
        for y in csr.indices[csr.indptr[x]:csr.indptr[x + 1]]:
            if not seen[y]:
                seen[y] = True
                queue.append(y)
    return set(np.flatnonzero(seen).tolist())
