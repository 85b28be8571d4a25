"""Character-level Chinese lyric localization and recognition.

Candidates come from connected components pooled over several binarize
thresholds, merged (box overlap or near centers) and filtered by
Hanzi shape rules. Recognition scans a frequency-ordered template table
in two stages: a cheap half-resolution IoU with a frequency prior prunes
to a short list, then the full fused similarity picks the winner.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import charsim
from .imaging import BoundingBox, GrayImage, crop, resize, resize_to
from .morphoskel import BinaryImage, binarize, connected_components, zhang_suen_thin

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CharCandidate:
    box: BoundingBox
    patch: GrayImage
    merged_from: int = 1


@dataclass(frozen=True)
class TableEntry:
    char: str
    patch: np.ndarray
    skeleton: np.ndarray  # (k, 2) points, (x, y)
    half_patch: np.ndarray
    rank: int


@dataclass
class HanziTemplateTable:
    entries: list
    font_name: str = "synthetic"
    font_size: int = 32
    _half_stack: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        chars = [e.char for e in self.entries]
        if len(set(chars)) != len(chars):
            raise ValueError("duplicate characters in template table")
        ranks = [e.rank for e in self.entries]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise ValueError("frequency ranks must be strictly increasing")

    def half_stack(self) -> np.ndarray:
        if self._half_stack is None:
            self._half_stack = np.stack([e.half_patch for e in self.entries])
        return self._half_stack


def skeleton_points(patch, threshold: float = 0.5) -> np.ndarray:
    """Thin a patch and return its skeleton pixels as (x, y) points."""
    arr = patch.pixels if isinstance(patch, GrayImage) else np.asarray(patch)
    mask = BinaryImage(arr >= threshold)
    skel = zhang_suen_thin(mask)
    ys, xs = np.nonzero(skel.pixels)
    return np.column_stack([xs, ys]).astype(np.float64)


def ink_crop(img: GrayImage, threshold: float = 0.5) -> GrayImage | None:
    """Tight crop to the ink bounding box (None when blank)."""
    ys, xs = np.nonzero(img.pixels >= threshold)
    if len(ys) == 0:
        return None
    return crop(img, BoundingBox(int(xs.min()), int(ys.min()),
                                 int(xs.max()) + 1, int(ys.max()) + 1))


def build_template_table(charset: list, glyph_source, size: int = 32,
                         font_name: str = "synthetic") -> HanziTemplateTable:
    """Render each character at `size` px and precompute match artifacts.

    `glyph_source` maps a character to a GrayImage or None; unrenderable
    characters are skipped with a warning. Glyphs are tight-cropped to
    their ink so they live on the same normalized grid as extracted
    candidates (which are component ink boxes). Input order is frequency
    order and becomes the rank.
    """
    seen = set()
    entries = []
    for ch in charset:
        if ch in seen:
            raise ValueError(f"duplicate character {ch!r} in charset")
        seen.add(ch)
        glyph = glyph_source(ch)
        if glyph is not None:
            glyph = ink_crop(glyph)
        if glyph is None:
            log.warning("character %r not renderable; skipped", ch)
            continue
        glyph = resize_to(glyph, (size, size))
        skel = skeleton_points(glyph)
        half = resize(glyph, 0.5).pixels
        entries.append(TableEntry(char=ch, patch=glyph.pixels, skeleton=skel,
                                  half_patch=half, rank=len(entries)))
    return HanziTemplateTable(entries=entries, font_name=font_name, font_size=size)


def _merge_boxes(boxes: list, iou_thresh: float, center_dist: float) -> list:
    """Union-find merge of overlapping/near boxes.

    Neighbor candidates come from an x-interval sweep over sorted box
    starts, so only nearby pairs are tested.
    """
    n = len(boxes)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    order = sorted(range(n), key=lambda i: boxes[i].x0)
    xs0 = [boxes[i].x0 for i in order]
    for pos, i in enumerate(order):
        bi = boxes[i]
        limit = bi.x1 + center_dist
        for qos in range(pos + 1, n):
            if xs0[qos] > limit:
                break
            j = order[qos]
            bj = boxes[j]
            ci, cj = bi.center, bj.center
            near = (ci[0] - cj[0]) ** 2 + (ci[1] - cj[1]) ** 2 <= center_dist ** 2
            if near or bi.iou(bj) > iou_thresh:
                union(i, j)

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    merged = []
    for members in groups.values():
        x0 = min(boxes[i].x0 for i in members)
        y0 = min(boxes[i].y0 for i in members)
        x1 = max(boxes[i].x1 for i in members)
        y1 = max(boxes[i].y1 for i in members)
        merged.append((BoundingBox(x0, y0, x1, y1), len(members)))
    merged.sort(key=lambda t: (t[0].y0, t[0].x0))
    return merged


def extract_candidates(page: GrayImage, em: float,
                       thresholds=(0.3, 0.5, 0.7),
                       merge_iou: float = 0.4, merge_center_em: float = 0.5,
                       aspect_range=(0.6, 1.6), size_range=(0.6, 1.4),
                       density_range=(0.05, 0.6),
                       min_area: int = 4) -> list:
    """Pool components over all thresholds, merge, then keep Hanzi-shaped
    boxes (near-square, around one em, plausible stroke density)."""
    boxes = []
    for t in thresholds:
        for comp in connected_components(binarize(page, t), connectivity=8):
            if comp.area >= min_area:
                boxes.append(comp.box)
    if not boxes:
        return []
    merged = _merge_boxes(boxes, merge_iou, merge_center_em * em)
    out = []
    mid = binarize(page, 0.5).pixels
    for box, count in merged:
        w, h = box.width, box.height
        aspect = w / h
        size = max(w, h)
        if not aspect_range[0] <= aspect <= aspect_range[1]:
            continue
        if not size_range[0] * em <= size <= size_range[1] * em:
            continue
        density = float(mid[box.y0:box.y1, box.x0:box.x1].mean())
        if not density_range[0] <= density <= density_range[1]:
            continue
        out.append(CharCandidate(box=box, patch=crop(page, box), merged_from=count))
    return out


@dataclass(frozen=True)
class Recognition:
    character: str
    score: float
    box: BoundingBox
    runner_up: tuple | None = None  # (character, score)

    def __post_init__(self):
        if self.runner_up is not None and self.score < self.runner_up[1] - 1e-12:
            raise ValueError("winner score below runner-up")

    def to_dict(self) -> dict:
        d = {"ch": self.character, "box": self.box.to_list(),
             "score": round(self.score, 6)}
        if self.runner_up is not None:
            d["runner_up"] = [self.runner_up[0], round(self.runner_up[1], 6)]
        return d

    @staticmethod
    def from_dict(d: dict) -> "Recognition":
        ru = d.get("runner_up")
        return Recognition(character=d["ch"], box=BoundingBox(*d["box"]),
                           score=float(d["score"]),
                           runner_up=(ru[0], float(ru[1])) if ru else None)


@dataclass(frozen=True)
class MatchConfig:
    k1: int = 64  # stage-1 survivors
    rank_prior_r0: float = 3000.0
    lam: float = 12.0
    accept_threshold: float = 0.45
    fast: bool = False  # skip skeleton matching
    scale_range: tuple = (0.9, 1.1)
    weights: dict | None = None
    gammas: dict | None = None
    use_prior: bool = True


def _stage1_scores(candidate_half: np.ndarray, table: HanziTemplateTable,
                   cfg: MatchConfig) -> np.ndarray:
    stack = table.half_stack()
    mins = np.minimum(stack, candidate_half[None]).sum(axis=(1, 2))
    maxs = np.maximum(stack, candidate_half[None]).sum(axis=(1, 2))
    iou = np.where(maxs > 0, mins / np.where(maxs > 0, maxs, 1.0), 1.0)
    if cfg.use_prior:
        ranks = np.arange(len(table.entries))
        iou = iou * (1.0 / (1.0 + ranks / cfg.rank_prior_r0))
    return iou


def match_character(candidate: CharCandidate, table: HanziTemplateTable,
                    cfg: MatchConfig | None = None,
                    embeddings=None, candidate_id: str | None = None) -> Recognition:
    """Two-stage scan: half-resolution IoU with a frequency prior keeps
    the top K entries, full fused similarity ranks the survivors."""
    cfg = cfg or MatchConfig()
    if not table.entries:
        raise ValueError("empty template table")
    size = table.font_size
    patch = resize_to(candidate.patch, (size, size)).pixels
    half = resize_to(candidate.patch, (size // 2, size // 2)).pixels
    s1 = _stage1_scores(half, table, cfg)
    k = min(cfg.k1, len(table.entries))
    survivors = np.argsort(-s1, kind="stable")[:k]

    skel_c = None if cfg.fast else skeleton_points(patch)
    if skel_c is not None and len(skel_c) == 0:
        skel_c = None
    aligner = charsim.PatchAligner(patch, scale_range=cfg.scale_range,
                                   max_patch_shape=(size, size))
    scored = []
    for idx in survivors:
        entry = table.entries[int(idx)]
        s_embed = None
        if embeddings is not None and candidate_id is not None:
            if candidate_id in embeddings and entry.char in embeddings:
                s_embed = embeddings.cosine(candidate_id, entry.char)
        report = charsim.compare_patches(
            patch, entry.patch,
            skel_a=skel_c, skel_b=None if cfg.fast else entry.skeleton,
            lam=cfg.lam, s_embed=s_embed,
            weights=cfg.weights, gammas=cfg.gammas,
            scale_range=cfg.scale_range,
            skip_skeleton=cfg.fast or skel_c is None,
            aligner=aligner,
        )
        scored.append((report.fused, entry.rank, entry.char))
    scored.sort(key=lambda t: (-t[0], t[1]))
    best = scored[0]
    runner = scored[1] if len(scored) > 1 else None
    return Recognition(character=best[2], score=best[0], box=candidate.box,
                       runner_up=(runner[2], runner[0]) if runner else None)


def recognize_page(page: GrayImage, table: HanziTemplateTable, em: float | None = None,
                   cfg: MatchConfig | None = None, candidate_kwargs: dict | None = None,
                   embeddings=None, page_id: str = "") -> list:
    """Extract candidates, match each, reject weak scores, and resolve
    overlaps greedily by score."""
    cfg = cfg or MatchConfig()
    em = em if em is not None else float(table.font_size)
    candidates = extract_candidates(page, em, **(candidate_kwargs or {}))
    recs = []
    for i, cand in enumerate(candidates):
        cid = f"{page_id}#{i}" if page_id else None
        rec = match_character(cand, table, cfg, embeddings=embeddings,
                              candidate_id=cid)
        if rec.score >= cfg.accept_threshold:
            recs.append(rec)
    recs.sort(key=lambda r: (-r.score, r.box.y0, r.box.x0))
    kept = []
    for rec in recs:
        if any(rec.box.iou(k.box) > 0.3 for k in kept):
            continue
        kept.append(rec)
    kept.sort(key=lambda r: (r.box.y0, r.box.x0))
    return kept


def recognitions_to_json(page: str, recognitions: list) -> dict:
    return {"page": page, "chars": [r.to_dict() for r in recognitions]}


def recognitions_from_json(doc: dict) -> tuple[str, list]:
    return doc["page"], [Recognition.from_dict(d) for d in doc["chars"]]


def write_recognitions(path, page_name: str, recognitions: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(recognitions_to_json(page_name, recognitions), fh,
                  ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def read_recognitions(path) -> tuple[str, list]:
    with open(path, encoding="utf-8") as fh:
        return recognitions_from_json(json.load(fh))


def load_charset(path) -> list:
    """Frequency-ordered character list: UTF-8, one character per line."""
    chars = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                chars.append(line)
    return chars
