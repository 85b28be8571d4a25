"""Anisotropic elliptical nearest-neighbor search over a balanced KD-tree.

The distance between p and q under per-query semi-axes (r_x, r_y) is

    d(p, q) = sqrt(((p_x - q_x) / r_x)^2 + ((p_y - q_y) / r_y)^2)

so the unit ball is an axis-aligned ellipse. One tree serves queries with
any (r_x, r_y) without rebuilding: every node stores the AABB of its
points, and the admissible lower bound from a query to a box is the
clamped per-axis distance scaled by s_x = 1/r_x, s_y = 1/r_y. Best-first
traversal on that bound prunes exactly the subtrees that cannot beat the
current best, so results are exact for any metric.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EllipticalMetric:
    r_x: float
    r_y: float

    def __post_init__(self):
        if self.r_x <= 0 or self.r_y <= 0:
            raise ValueError("semi-axes must be positive")

    @property
    def s_x(self) -> float:
        return 1.0 / self.r_x

    @property
    def s_y(self) -> float:
        return 1.0 / self.r_y

    def scaled(self, factor: float) -> "EllipticalMetric":
        return EllipticalMetric(self.r_x * factor, self.r_y * factor)


def elliptical_distance(p, q, metric: EllipticalMetric) -> float:
    dx = (p[0] - q[0]) * metric.s_x
    dy = (p[1] - q[1]) * metric.s_y
    return float(np.hypot(dx, dy))


def aabb_lower_bound(p, box, metric: EllipticalMetric) -> float:
    """Lower bound on the elliptical distance from p to any point in box.

    box = (min_x, min_y, max_x, max_y); zero when p lies inside.
    """
    min_x, min_y, max_x, max_y = box
    dx = max(min_x - p[0], 0.0, p[0] - max_x) * metric.s_x
    dy = max(min_y - p[1], 0.0, p[1] - max_y) * metric.s_y
    return float(np.hypot(dx, dy))


class _Node:
    __slots__ = ("box", "axis", "left", "right", "idx")

    def __init__(self, box, axis=-1, left=None, right=None, idx=None):
        self.box = box
        self.axis = axis
        self.left = left
        self.right = right
        self.idx = idx  # leaf point indices, None for internal nodes


class SpatialIndex:
    """Balanced 2-D KD-tree (median splits, alternating axes).

    Immutable after build; concurrent queries are safe. Payloads default
    to the point index and break distance ties (smallest id wins).
    """

    def __init__(self, points, payloads=None, leaf_size: int = 8):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError("need an (n, 2) array with n >= 1")
        self.points = pts
        self.payloads = list(payloads) if payloads is not None else list(range(len(pts)))
        if len(self.payloads) != len(pts):
            raise ValueError("payload count must match point count")
        self.leaf_size = max(1, int(leaf_size))
        order = np.arange(len(pts))
        self.root = self._build(order, depth=0)
        self.height = self._height(self.root)

    def __len__(self):
        return len(self.points)

    def _build(self, idx: np.ndarray, depth: int) -> _Node:
        pts = self.points[idx]
        box = (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )
        if len(idx) <= self.leaf_size:
            return _Node(box, idx=np.sort(idx))
        axis = depth % 2
        order = idx[np.lexsort((idx, self.points[idx, 1 - axis], self.points[idx, axis]))]
        mid = len(order) // 2
        return _Node(
            box,
            axis=axis,
            left=self._build(order[:mid], depth + 1),
            right=self._build(order[mid:], depth + 1),
        )

    def _height(self, node) -> int:
        if node.idx is not None:
            return 1
        return 1 + max(self._height(node.left), self._height(node.right))

    def _candidates(self, i: int, p, metric) -> tuple[float, object]:
        q = self.points[i]
        return elliptical_distance(p, q, metric), self.payloads[i]

    def nearest(self, p, metric: EllipticalMetric, filter=None, stats=None):
        """Exact nearest neighbor under `metric`; optional payload filter.

        Returns (payload, distance). Raises LookupError when the filter
        rejects every point. `stats`, if given, is a dict receiving the
        number of node visits under key "nodes_visited".
        """
        best_d = np.inf
        best_payload = None
        heap = [(aabb_lower_bound(p, self.root.box, metric), 0, self.root)]
        counter = 1
        visits = 0
        while heap:
            lb, _, node = heapq.heappop(heap)
            if lb > best_d:
                break  # every remaining bound is at least this large
            visits += 1
            if node.idx is not None:
                for i in node.idx:
                    d, payload = self._candidates(i, p, metric)
                    if filter is not None and not filter(payload):
                        continue
                    if d < best_d or (d == best_d and best_payload is not None
                                      and payload < best_payload):
                        best_d, best_payload = d, payload
            else:
                for child in (node.left, node.right):
                    clb = aabb_lower_bound(p, child.box, metric)
                    if clb <= best_d:
                        heapq.heappush(heap, (clb, counter, child))
                        counter += 1
        if stats is not None:
            stats["nodes_visited"] = visits
        if best_payload is None:
            raise LookupError("no point passed the filter")
        return best_payload, best_d

    def k_nearest(self, p, metric: EllipticalMetric, k: int, filter=None):
        """Exact k smallest distances, ties broken by payload id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        # worst entry first: key (-d, negated order marker) via tuples
        best: list[tuple[float, object]] = []  # kept sorted ascending (d, payload)

        def worst_key():
            return best[-1] if len(best) == k else None

        def offer(d, payload):
            entry = (d, payload)
            if len(best) < k:
                best.append(entry)
                best.sort()
            elif entry < best[-1]:
                best[-1] = entry
                best.sort()

        heap = [(aabb_lower_bound(p, self.root.box, metric), 0, self.root)]
        counter = 1
        while heap:
            lb, _, node = heapq.heappop(heap)
            w = worst_key()
            if w is not None and lb > w[0]:
                break
            if node.idx is not None:
                for i in node.idx:
                    d, payload = self._candidates(i, p, metric)
                    if filter is not None and not filter(payload):
                        continue
                    offer(d, payload)
            else:
                for child in (node.left, node.right):
                    clb = aabb_lower_bound(p, child.box, metric)
                    w = worst_key()
                    if w is None or clb <= w[0]:
                        heapq.heappush(heap, (clb, counter, child))
                        counter += 1
        return [(payload, d) for d, payload in best]

    def range_query(self, p, metric: EllipticalMetric, radius: float, filter=None):
        """All points with distance <= radius, sorted by (distance, payload)."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if aabb_lower_bound(p, node.box, metric) > radius:
                continue
            if node.idx is not None:
                for i in node.idx:
                    d, payload = self._candidates(i, p, metric)
                    if d <= radius and (filter is None or filter(payload)):
                        out.append((d, payload))
            else:
                stack.append(node.right)
                stack.append(node.left)
        out.sort()
        return [(payload, d) for d, payload in out]


def build(points, payloads=None, leaf_size: int = 8) -> SpatialIndex:
    """Construct a SpatialIndex (median-split balanced KD-tree)."""
    return SpatialIndex(points, payloads=payloads, leaf_size=leaf_size)
