"""Binary morphology, Zhang-Suen thinning, and skeleton chain analysis.

Skeletons become graphs with pixels as vertices and M-adjacency edges:
4-neighbors always connect; a diagonal pair connects only when both of
its shared 4-neighbors are background, so strokes never double-link.
The representative curve of each component is its longest chain, found
by double breadth-first search.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import BoundingBox, GrayImage


class BinaryImage:
    """Boolean foreground mask with the same dims as its source raster."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels, dtype=bool)
        if arr.ndim != 2:
            raise ValueError("mask must be 2-D")
        arr = arr.copy()
        arr.setflags(write=False)
        self.pixels = arr

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def count(self) -> int:
        return int(self.pixels.sum())


def binarize(img: GrayImage, threshold: float) -> BinaryImage:
    """Foreground = pixels at or above `threshold`."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    return BinaryImage(img.pixels >= threshold)


def disc_element(radius: int) -> np.ndarray:
    """Disc structuring element: offsets with dx^2 + dy^2 <= r^2."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def morph(img: BinaryImage, op: str, se_radius: int = 1) -> BinaryImage:
    """Dilate/erode/open/close with a disc structuring element.

    The raster is padded by the radius first so composite ops see the
    mass a dilation pushes past the canvas edge (plane semantics, then
    crop), instead of scipy's border clipping.
    """
    se = disc_element(se_radius)
    r = int(se_radius)
    px = np.pad(img.pixels, r, mode="constant")
    if op == "dilate":
        out = ndimage.binary_dilation(px, structure=se)
    elif op == "erode":
        out = ndimage.binary_erosion(px, structure=se, border_value=0)
    elif op == "open":
        out = ndimage.binary_dilation(
            ndimage.binary_erosion(px, structure=se, border_value=0), structure=se
        )
    elif op == "close":
        out = ndimage.binary_erosion(
            ndimage.binary_dilation(px, structure=se), structure=se, border_value=0
        )
    else:
        raise ValueError(f"unknown morphology op {op!r}")
    return BinaryImage(out[r:-r, r:-r])


@dataclass(frozen=True)
class Component:
    """One connected foreground region. `mask` is cropped to `box`."""

    mask: np.ndarray
    box: BoundingBox
    area: int

    @property
    def center(self) -> tuple[float, float]:
        ys, xs = np.nonzero(self.mask)
        return (float(xs.mean()) + self.box.x0, float(ys.mean()) + self.box.y0)


def connected_components(img: BinaryImage, connectivity: int = 8) -> list[Component]:
    """Foreground partition, deterministically ordered by (y0, x0)."""
    if connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    elif connectivity == 4:
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    else:
        raise ValueError("connectivity must be 4 or 8")
    labels, n = ndimage.label(img.pixels, structure=structure)
    comps = []
    objects = ndimage.find_objects(labels)
    for lab in range(1, n + 1):
        sl = objects[lab - 1]
        if sl is None:
            continue
        mask = labels[sl] == lab
        box = BoundingBox(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        comps.append(Component(mask=mask, box=box, area=int(mask.sum())))
    comps.sort(key=lambda c: (c.box.y0, c.box.x0, c.box.y1, c.box.x1))
    return comps


def _neighbor_views(p: np.ndarray):
    """Zero-padded neighbor rasters P2..P9 (N, NE, E, SE, S, SW, W, NW)."""
    z = np.zeros((p.shape[0] + 2, p.shape[1] + 2), dtype=p.dtype)
    z[1:-1, 1:-1] = p
    n = z[:-2, 1:-1]
    ne = z[:-2, 2:]
    e = z[1:-1, 2:]
    se = z[2:, 2:]
    s = z[2:, 1:-1]
    sw = z[2:, :-2]
    w = z[1:-1, :-2]
    nw = z[:-2, :-2]
    return n, ne, e, se, s, sw, w, nw


def zhang_suen_thin(img: BinaryImage) -> BinaryImage:
    """Zhang-Suen thinning: iterate the two sub-passes to a fixpoint.

    Both sub-passes are parallel deletions, so the whole pass vectorizes;
    output is a subset of the input and preserves 8-connectivity.
    """
    p = img.pixels.astype(np.uint8)
    while True:
        changed = False
        for phase in (0, 1):
            n, ne, e, se, s, sw, w, nw = _neighbor_views(p)
            ring = [n, ne, e, se, s, sw, w, nw]
            b = sum(ring)
            a = sum(
                ((ring[i] == 0) & (ring[(i + 1) % 8] == 1)).astype(np.uint8)
                for i in range(8)
            )
            if phase == 0:
                c1 = n * e * s == 0
                c2 = e * s * w == 0
            else:
                c1 = n * e * w == 0
                c2 = n * s * w == 0
            kill = (p == 1) & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2
            if kill.any():
                p[kill] = 0
                changed = True
        if not changed:
            break
    return BinaryImage(p.astype(bool))


@dataclass
class SkeletonGraph:
    """Pixel graph of a thinned image under M-adjacency."""

    vertices: list  # (x, y) int pairs
    adjacency: list  # adjacency[i] = sorted list of neighbor vertex indices
    components: list  # list of sorted vertex-index lists

    @property
    def edges(self) -> list:
        out = []
        for i, nbrs in enumerate(self.adjacency):
            out.extend((i, j) for j in nbrs if j > i)
        return out

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])


def build_skeleton_graph(skel: BinaryImage) -> SkeletonGraph:
    """Vertices are skeleton pixels; edges follow the M-adjacency rule."""
    px = skel.pixels
    ys, xs = np.nonzero(px)
    order = np.lexsort((xs, ys))  # scan order: row-major
    ys, xs = ys[order], xs[order]
    index = {(int(x), int(y)): i for i, (x, y) in enumerate(zip(xs, ys))}
    h, w = px.shape

    def fg(x, y):
        return 0 <= x < w and 0 <= y < h and px[y, x]

    adjacency = [[] for _ in range(len(ys))]

    def add(i, j):
        adjacency[i].append(j)
        adjacency[j].append(i)

    for i, (x, y) in enumerate(zip(xs, ys)):
        x, y = int(x), int(y)
        if fg(x + 1, y):
            add(i, index[(x + 1, y)])
        if fg(x, y + 1):
            add(i, index[(x, y + 1)])
        # diagonal SE: shared 4-neighbors are (x+1, y) and (x, y+1)
        if fg(x + 1, y + 1) and not fg(x + 1, y) and not fg(x, y + 1):
            add(i, index[(x + 1, y + 1)])
        # diagonal SW: shared 4-neighbors are (x-1, y) and (x, y+1)
        if fg(x - 1, y + 1) and not fg(x - 1, y) and not fg(x, y + 1):
            add(i, index[(x - 1, y + 1)])

    adjacency = [sorted(nbrs) for nbrs in adjacency]

    seen = [False] * len(ys)
    components = []
    for start in range(len(ys)):
        if seen[start]:
            continue
        q = deque([start])
        seen[start] = True
        comp = [start]
        while q:
            u = q.popleft()
            for v in adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    q.append(v)
        components.append(sorted(comp))

    vertices = [(int(x), int(y)) for x, y in zip(xs, ys)]
    return SkeletonGraph(vertices=vertices, adjacency=adjacency, components=components)


@dataclass(frozen=True)
class Chain:
    """Simple path through a skeleton component.

    `points` are (x, y) vertex coordinates in path order; `length` is the
    Euclidean arc length; `smoothed` holds float coordinates after
    smooth_chain, None before.
    """

    points: list
    length: float
    smoothed: np.ndarray | None = None

    def path_array(self) -> np.ndarray:
        return self.smoothed if self.smoothed is not None else np.asarray(
            self.points, dtype=np.float64
        )


def _bfs_farthest(graph: SkeletonGraph, start: int, members: set):
    dist = {start: 0}
    parent = {start: -1}
    q = deque([start])
    far, far_d = start, 0
    while q:
        u = q.popleft()
        for v in graph.adjacency[u]:
            if v in members and v not in dist:
                dist[v] = dist[u] + 1
                parent[v] = u
                q.append(v)
                if dist[v] > far_d or (dist[v] == far_d and v < far):
                    far, far_d = v, dist[v]
    return far, parent


def longest_chain(graph: SkeletonGraph, component: int) -> Chain:
    """Double-BFS longest path of a component (exact on trees)."""
    members = graph.components[component]
    if not members:
        raise ValueError("empty component")
    mset = set(members)
    a, _ = _bfs_farthest(graph, members[0], mset)
    b, parent = _bfs_farthest(graph, a, mset)
    path = []
    cur = b
    while cur != -1:
        path.append(cur)
        cur = parent[cur]
    pts = [graph.vertices[i] for i in path]
    arr = np.asarray(pts, dtype=np.float64)
    length = float(np.sum(np.hypot(*np.diff(arr, axis=0).T))) if len(pts) > 1 else 0.0
    return Chain(points=pts, length=length)


def smooth_chain(chain: Chain, window: int = 7) -> Chain:
    """Moving-average smoothing with a shrinking window near the ends.

    Endpoints are preserved exactly; chains shorter than 3 points return
    unchanged.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    pts = np.asarray(chain.points, dtype=np.float64)
    n = len(pts)
    if n < 3:
        return Chain(points=chain.points, length=chain.length, smoothed=pts)
    half = window // 2
    out = np.empty_like(pts)
    for i in range(n):
        k = min(half, i, n - 1 - i)
        out[i] = pts[i - k : i + k + 1].mean(axis=0)
    length = float(np.sum(np.hypot(*np.diff(out, axis=0).T)))
    return Chain(points=chain.points, length=length, smoothed=out)
