"""Similarity metrics between character patches and their fusion.

Four metrics (plus one optional) compare an extracted patch against a
template patch:

  * phase correlation recovers the integer translation (and, wrapped in a
    golden-section search, the best relative scale), after which a
    normalized correlation score is computed;
  * min-max grayscale IoU: sum(min) / sum(max);
  * skeleton matching: minimum-cost bipartite matching between skeleton
    point sets with squared-distance costs and a per-point unmatched
    penalty, normalized to a decaying similarity in [1/e, 1];
  * embedding cosine similarity (optional, needs an embedding table).

Fusion rescales each metric to [0, 1], applies per-metric gamma
exponents, and takes a weighted average.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .imaging import GrayImage, _resize_array
from .preprocess import golden_section_minimize


class ZeroEnergyError(ValueError):
    """A patch with no signal cannot be registered or normalized."""


DEFAULT_WEIGHTS = {"phase": 0.3, "iou": 0.25, "skeleton": 0.3, "embedding": 0.15}
DEFAULT_GAMMAS = {"phase": 1.0, "iou": 1.0, "skeleton": 1.0, "embedding": 1.0}
SKELETON_FLOOR = 1.0 / math.e


def _as_array(patch) -> np.ndarray:
    if isinstance(patch, GrayImage):
        return patch.pixels
    return np.asarray(patch, dtype=np.float64)


def _pad_common(f1: np.ndarray, f2: np.ndarray):
    h = max(f1.shape[0], f2.shape[0])
    w = max(f1.shape[1], f2.shape[1])
    a = np.zeros((h, w))
    b = np.zeros((h, w))
    a[: f1.shape[0], : f1.shape[1]] = f1
    b[: f2.shape[0], : f2.shape[1]] = f2
    return a, b


@dataclass(frozen=True)
class PhaseCorrResult:
    t_x: int
    t_y: int
    scale: float
    peak: float
    e1: float
    e2: float


def phase_correlate(f1, f2) -> PhaseCorrResult:
    """Translation offset between two patches via the cross-power spectrum.

    Returns the circular shift (t_x, t_y) that maps f1 onto f2, wrapped to
    signed offsets, plus the correlation peak value.
    """
    a, b = _pad_common(_as_array(f1), _as_array(f2))
    e1 = float(np.sum(a * a))
    e2 = float(np.sum(b * b))
    if e1 <= 0.0 or e2 <= 0.0:
        raise ZeroEnergyError("zero-energy patch")
    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    x = fb * np.conj(fa)
    mag = np.abs(x)
    r = np.where(mag > 1e-12, x / np.where(mag > 1e-12, mag, 1.0), 0.0)
    c = np.fft.ifft2(r).real
    iy, ix = np.unravel_index(int(np.argmax(c)), c.shape)
    peak = float(c[iy, ix])
    h, w = c.shape
    t_y = iy - h if iy > h // 2 else iy
    t_x = ix - w if ix > w // 2 else ix
    return PhaseCorrResult(t_x=int(t_x), t_y=int(t_y), scale=1.0, peak=peak,
                           e1=e1, e2=e2)


def shift_patch(f, t_x: int, t_y: int) -> np.ndarray:
    """Translate a patch by integer offsets with zero fill (no wrap)."""
    arr = _as_array(f)
    out = np.zeros_like(arr)
    h, w = arr.shape
    ys0, ys1 = max(t_y, 0), min(h, h + t_y)
    xs0, xs1 = max(t_x, 0), min(w, w + t_x)
    out[ys0:ys1, xs0:xs1] = arr[ys0 - t_y : ys1 - t_y, xs0 - t_x : xs1 - t_x]
    return out


class PatchAligner:
    """Scale-plus-translation alignment of many patches to one reference.

    Caches the reference FFT on a fixed working grid so each probe of the
    golden-section scale search costs one forward and one inverse real
    FFT. Equivalent to phase_correlate at every probed scale.
    """

    def __init__(self, f1, scale_range=(0.9, 1.1), tol: float = 0.008,
                 max_patch_shape=None):
        self.a = _as_array(f1)
        self.scale_range = scale_range
        self.tol = tol
        mb = max_patch_shape or self.a.shape
        h = max(self.a.shape[0], int(np.ceil(mb[0] * scale_range[1])) + 1)
        w = max(self.a.shape[1], int(np.ceil(mb[1] * scale_range[1])) + 1)
        self.shape = (h, w)
        self.a_pad = np.zeros(self.shape)
        self.a_pad[: self.a.shape[0], : self.a.shape[1]] = self.a
        if float(np.sum(self.a_pad * self.a_pad)) <= 0.0:
            raise ZeroEnergyError("zero-energy reference patch")
        self.fa = np.fft.rfft2(self.a_pad)

    def _peak(self, b: np.ndarray):
        if b.shape[0] > self.shape[0] or b.shape[1] > self.shape[1]:
            raise ValueError("patch exceeds the aligner working grid")
        if float(np.abs(b).sum()) <= 0.0:
            raise ZeroEnergyError("zero-energy patch")
        b_pad = np.zeros(self.shape)
        b_pad[: b.shape[0], : b.shape[1]] = b
        fb = np.fft.rfft2(b_pad)
        x = fb * np.conj(self.fa)
        mag = np.abs(x)
        r = np.where(mag > 1e-12, x / np.where(mag > 1e-12, mag, 1.0), 0.0)
        c = np.fft.irfft2(r, s=self.shape)
        iy, ix = np.unravel_index(int(np.argmax(c)), c.shape)
        h, w = self.shape
        t_y = iy - h if iy > h // 2 else iy
        t_x = ix - w if ix > w // 2 else ix
        return int(t_x), int(t_y), float(c[iy, ix]), b_pad

    def align(self, f2):
        """Returns (scale, t_x, t_y, aligned_f2) on the working grid.

        Golden-section over the scale factor locates the peak basin;
        because resizing rounds to integer sizes the objective is
        piecewise constant, so the discrete sizes around the basin are
        then checked directly and the best one wins.
        """
        b = _as_array(f2)
        h = b.shape[0]
        cache = {}

        def probe(hs):
            hs = max(1, int(hs))
            if hs not in cache:
                ws = max(1, int(round(b.shape[1] * hs / h)))
                cache[hs] = self._peak(_resize_array(b, (hs, ws)))
            return cache[hs]

        lo, hi = self.scale_range
        best_s = golden_section_minimize(
            lambda s: -probe(round(h * s))[2], lo, hi, tol=self.tol)
        hs0 = int(round(h * best_s))
        lo_hs, hi_hs = int(round(h * lo)), int(round(h * hi))
        sizes = [hs for hs in range(hs0 - 2, hs0 + 3) if lo_hs <= hs <= hi_hs]
        best_hs = max(sizes, key=lambda hs: (probe(hs)[2], -abs(hs - h), -hs))
        t_x, t_y, _, b_pad = probe(best_hs)
        return best_hs / h, t_x, t_y, shift_patch(b_pad, -t_x, -t_y)


def align_scale(f1, f2, scale_range=(0.9, 1.1), tol: float = 0.008):
    """Golden-section search over scale maximizing the phase-corr peak.

    Returns (scale, t_x, t_y): resize f2 by `scale`, then shift it by the
    offsets, to align it with f1.
    """
    b = _as_array(f2)
    aligner = PatchAligner(f1, scale_range=scale_range, tol=tol,
                           max_patch_shape=b.shape)
    scale, t_x, t_y, _ = aligner.align(b)
    return scale, t_x, t_y


def normalized_correlation(f1, f2) -> float:
    """sum(f1 * f2) / sqrt(E1 * E2); in [-1, 1] by Cauchy-Schwarz."""
    a, b = _pad_common(_as_array(f1), _as_array(f2))
    e1 = float(np.sum(a * a))
    e2 = float(np.sum(b * b))
    if e1 <= 0.0 or e2 <= 0.0:
        raise ZeroEnergyError("zero-energy patch")
    return float(np.sum(a * b) / math.sqrt(e1 * e2))


def minmax_iou(f1, f2) -> float:
    """sum(min(f1, f2)) / sum(max(f1, f2)); identical blanks score 1."""
    a, b = _pad_common(_as_array(f1), _as_array(f2))
    denom = float(np.maximum(a, b).sum())
    if denom <= 0.0:
        return 1.0
    return float(np.minimum(a, b).sum() / denom)


@dataclass(frozen=True)
class SkeletonMatchProblem:
    a: np.ndarray
    b: np.ndarray
    lam: float
    cost_matrix: np.ndarray
    j_star: float
    j_max: float
    s: float


def skeleton_match(a, b, lam: float = 12.0, max_points: int = 120) -> SkeletonMatchProblem:
    """Minimum-cost matching between two skeleton point sets.

    Costs are half squared distances; each point may instead stay
    unmatched for half lam^2, so matching a pair (through the doubled
    cost matrix) costs exactly its squared distance and leaving both
    endpoints out costs lam^2. Similarity is exp(-J*/J_up) with
    J_up = lam^2 (m+n)/2, hence s in [1/e, 1].
    """
    pa = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    pb = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("skeleton point sets must be nonempty")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    pa = _subsample(pa, max_points)
    pb = _subsample(pb, max_points)
    n, m = len(pa), len(pb)
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    half = 0.5 * lam * lam
    cost = np.full((n + m, n + m), np.inf)
    cost[:n, :m] = 0.5 * d2
    cost[n:, m:] = 0.5 * d2.T
    cost[:n, m:] = np.where(np.eye(n, dtype=bool), half, np.inf)
    cost[n:, :m] = np.where(np.eye(m, dtype=bool), half, np.inf)
    rows, cols = linear_sum_assignment(cost)
    j_star = float(cost[rows, cols].sum())
    j_max = half * (n + m)
    s = float(np.exp(-j_star / j_max))
    return SkeletonMatchProblem(a=pa, b=pb, lam=lam, cost_matrix=cost,
                                j_star=j_star, j_max=j_max, s=s)


def _subsample(pts: np.ndarray, cap: int) -> np.ndarray:
    if len(pts) <= cap:
        return pts
    idx = np.unique(np.round(np.linspace(0, len(pts) - 1, cap)).astype(int))
    return pts[idx]


def embedding_cosine(e1, e2) -> float:
    v1 = np.asarray(e1, dtype=np.float64)
    v2 = np.asarray(e2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ValueError("embedding dims differ")
    n1 = np.linalg.norm(v1)
    n2 = np.linalg.norm(v2)
    if n1 == 0.0 or n2 == 0.0:
        raise ZeroEnergyError("zero embedding vector")
    return float(np.dot(v1, v2) / (n1 * n2))


@dataclass(frozen=True)
class SimilarityReport:
    s_phase: float
    s_iou: float
    s_skel: float
    s_embed: float | None
    fused: float
    weights: dict
    gammas: dict


def _rescaled(s_phase, s_iou, s_skel, s_embed):
    out = {
        "phase": (s_phase + 1.0) / 2.0,
        "iou": s_iou,
        "skeleton": (s_skel - SKELETON_FLOOR) / (1.0 - SKELETON_FLOOR),
    }
    if s_embed is not None:
        out["embedding"] = (s_embed + 1.0) / 2.0
    return {k: min(1.0, max(0.0, v)) for k, v in out.items()}


def fuse(s_phase, s_iou, s_skel, s_embed=None, weights=None, gammas=None) -> float:
    """Weighted average of gamma-adjusted rescaled metrics.

    A missing embedding score drops its weight and renormalizes the rest.
    """
    weights = dict(DEFAULT_WEIGHTS if weights is None else weights)
    gammas = dict(DEFAULT_GAMMAS if gammas is None else gammas)
    scores = _rescaled(s_phase, s_iou, s_skel, s_embed)
    active = {k: w for k, w in weights.items() if k in scores and w > 0}
    wsum = sum(active.values())
    if wsum <= 0:
        raise ValueError("weights not normalizable")
    return sum(w / wsum * scores[k] ** gammas.get(k, 1.0) for k, w in active.items())


def compare_patches(f1, f2, skel_a=None, skel_b=None, lam: float = 12.0,
                    s_embed=None, weights=None, gammas=None,
                    scale_range=(0.9, 1.1), skip_skeleton: bool = False,
                    aligner: PatchAligner | None = None) -> SimilarityReport:
    """Full similarity report: align, then score all metrics and fuse.

    Skeleton point sets may be supplied precomputed (in each patch's own
    frame); otherwise the caller should use skip_skeleton to drop that
    metric (its weight is folded into the others). Pass a shared
    PatchAligner when scoring one patch against many templates.
    """
    if aligner is None:
        aligner = PatchAligner(f1, scale_range=scale_range,
                               max_patch_shape=_as_array(f2).shape)
    scale, t_x, t_y, b = aligner.align(f2)
    a = aligner.a_pad
    if float(np.sum(b * b)) <= 0.0:
        # a wildly wrong registration shifted f2 entirely off the grid;
        # the pair is simply dissimilar
        s_phase, s_iou = 0.0, 0.0
    else:
        s_phase = normalized_correlation(a, b)
        s_iou = minmax_iou(a, b)
    weights = dict(DEFAULT_WEIGHTS if weights is None else weights)
    if skip_skeleton or (skel_a is None or skel_b is None):
        weights.pop("skeleton", None)
        s_skel = SKELETON_FLOOR  # rescales to 0; weight already removed
    else:
        pb = np.asarray(skel_b, dtype=np.float64) * scale
        pb = pb + np.array([-t_x, -t_y], dtype=np.float64)
        s_skel = skeleton_match(skel_a, pb, lam=lam).s
    fused = fuse(s_phase, s_iou, s_skel, s_embed, weights=weights, gammas=gammas)
    return SimilarityReport(s_phase=s_phase, s_iou=s_iou, s_skel=s_skel,
                            s_embed=s_embed, fused=fused, weights=weights,
                            gammas=dict(DEFAULT_GAMMAS if gammas is None else gammas))


# --- embedding table binary format -----------------------------------------
#
# magic "EMB1", u32 count, u32 dim (little-endian), then per record:
# u16 id byte length, UTF-8 id bytes, dim float32 LE values (unit norm).

EMB_MAGIC = b"EMB1"


class EmbeddingTable:
    """id -> unit-norm float32 vector map."""

    def __init__(self, vectors: dict):
        self.vectors = dict(vectors)
        dims = {len(v) for v in self.vectors.values()}
        if len(dims) > 1:
            raise ValueError("inconsistent embedding dims")
        self.dim = dims.pop() if dims else 0

    def __contains__(self, key):
        return key in self.vectors

    def __len__(self):
        return len(self.vectors)

    def get(self, key):
        return self.vectors.get(key)

    def cosine(self, id1: str, id2: str) -> float:
        return embedding_cosine(self.vectors[id1], self.vectors[id2])


def save_embedding_table(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", len(table.vectors), table.dim))
        for key, vec in table.vectors.items():
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long: {key!r}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def load_embedding_table(path, norm_tol: float = 1e-3) -> EmbeddingTable:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMB_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {EMB_MAGIC!r}")
        count, dim = struct.unpack("<II", fh.read(8))
        vectors = {}
        for _ in range(count):
            (idlen,) = struct.unpack("<H", fh.read(2))
            key = fh.read(idlen).decode("utf-8")
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float64)
            norm = np.linalg.norm(vec)
            if abs(norm - 1.0) > norm_tol:
                raise ValueError(f"vector {key!r} not unit norm ({norm:.6f})")
            if key in vectors:
                raise ValueError(f"duplicate id {key!r}")
            vectors[key] = vec
    return EmbeddingTable(vectors)
