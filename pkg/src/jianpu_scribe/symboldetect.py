"""Detection and classification of Jianpu glyphs.

Digits 0-7 are found by normalized cross-correlation of LoG-filtered
templates against the LoG-filtered page. Structural symbols (octave and
augmentation dots, duration underlines, dashes, barlines) are connected
components classified by geometry relative to the detected digits. Ties
and slurs come from skeleton chain analysis: enhance, thin, extract the
longest chain per component, smooth it, and accept arcs by span,
flatness, and direction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .imaging import BoundingBox, GrayImage, log_filter, log_response
from .morphoskel import (
    BinaryImage,
    binarize,
    build_skeleton_graph,
    connected_components,
    longest_chain,
    morph,
    smooth_chain,
    zhang_suen_thin,
)

log = logging.getLogger(__name__)

DIGITS = tuple(range(8))


@dataclass(frozen=True)
class DigitTemplate:
    digit: int
    raster: np.ndarray  # zero-mean, unit-norm, LoG domain
    anchor: tuple[int, int]  # (dx, dy) from top-left to glyph center
    sigma: float
    mask: np.ndarray | None = None  # binary glyph ink, for shape verification

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]


@dataclass(frozen=True)
class TemplateSet:
    templates: dict
    sigma: float

    @property
    def digit_width(self) -> float:
        return float(np.median([t.width for t in self.templates.values()]))

    @property
    def digit_height(self) -> float:
        return float(np.median([t.height for t in self.templates.values()]))


def build_template_set(glyph_images: dict, sigma: float = 1.4,
                       accent_masks: dict | None = None) -> TemplateSet:
    """LoG-filter each digit glyph, add its accent mask, zero-mean and
    unit-normalize.

    `glyph_images` must cover digits 0-7 (ink-bright GrayImages with a
    little blank margin). Accent masks are signed rasters matching the
    glyph dims; zeros leave the template as the normalized LoG response.
    """
    missing = [d for d in DIGITS if d not in glyph_images]
    if missing:
        raise ValueError(f"missing digit glyphs: {missing}")
    accent_masks = accent_masks or {}
    templates = {}
    pad = int(np.ceil(4 * sigma)) + 1
    for d in DIGITS:
        g = glyph_images[d].pixels
        canvas = np.pad(g, pad, mode="constant")
        response = log_response(canvas, sigma, mode="constant")
        raster = response[pad:-pad, pad:-pad].copy()
        accent = accent_masks.get(d)
        if accent is not None:
            accent = np.asarray(accent, dtype=np.float64)
            if accent.shape != raster.shape:
                raise ValueError(
                    f"accent mask for digit {d} is {accent.shape}, glyph is {raster.shape}"
                )
            raster = raster + accent
        raster -= raster.mean()
        norm = np.linalg.norm(raster)
        if norm <= 0:
            raise ValueError(f"degenerate glyph for digit {d}")
        raster /= norm
        anchor = (raster.shape[1] // 2, raster.shape[0] // 2)
        templates[d] = DigitTemplate(digit=d, raster=raster, anchor=anchor,
                                     sigma=sigma, mask=g >= 0.5)
    return TemplateSet(templates=templates, sigma=sigma)


def _ncc_valid(page_resp: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation (valid region) of a zero-mean,
    unit-norm template against a response raster."""
    k = template.size
    flipped = template[::-1, ::-1]
    num = fftconvolve(page_resp, flipped, mode="valid")
    ones = np.ones_like(template)
    s1 = fftconvolve(page_resp, ones, mode="valid")
    s2 = fftconvolve(page_resp * page_resp, ones, mode="valid")
    var = np.maximum(s2 - s1 * s1 / k, 0.0)
    denom = np.sqrt(var)
    resp = np.where(denom > 1e-9, num / np.where(denom > 1e-9, denom, 1.0), 0.0)
    return np.clip(resp, -1.0, 1.0)


def correlate(page: GrayImage, template: DigitTemplate) -> np.ndarray:
    """Correlation response of one digit template over the page.

    The page is LoG-filtered at the template's sigma first; the response
    uses valid-region semantics (dims shrink by template dims - 1).
    """
    if template.height > page.height or template.width > page.width:
        raise ValueError("template larger than page")
    resp = log_filter(page, template.sigma)
    return _ncc_valid(resp, template.raster)


def extract_peaks(response: np.ndarray, threshold: float, nms_radius: float):
    """Local maxima above threshold; within nms_radius only the maximum
    survives, ties broken by (y, x) order. Returns [( (x, y), score ), ...]."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    r = max(1, int(round(nms_radius)))
    footprint = np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
    local_max = ndimage.maximum_filter(response, footprint=footprint,
                                       mode="constant", cval=-np.inf)
    ys, xs = np.nonzero((response >= threshold) & (response >= local_max))
    if len(ys) == 0:
        return []
    scores = response[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    kept = []
    for i in order:
        y, x, s = int(ys[i]), int(xs[i]), float(scores[i])
        if all((x - kx) ** 2 + (y - ky) ** 2 > nms_radius ** 2 for (kx, ky), _ in kept):
            kept.append(((x, y), s))
    kept.sort(key=lambda t: (t[0][1], t[0][0]))
    return kept


@dataclass(frozen=True)
class SymbolDetection:
    """A located, classified notation element."""

    kind: str  # digit | rest | octave_dot | augmentation_dot | underline |
    #            dash | barline | tie_slur | lyric_candidate
    box: BoundingBox
    score: float
    center: tuple[float, float]
    value: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")
        if self.kind == "digit" and self.value not in range(1, 8):
            raise ValueError("digit detections need value 1..7")
        if self.kind == "rest" and self.value != 0:
            raise ValueError("rest detections need value 0")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "box": self.box.to_list(),
            "score": round(self.score, 6),
            "center": [round(self.center[0], 2), round(self.center[1], 2)],
        }
        if self.value is not None:
            d["value"] = self.value
        return d

    @staticmethod
    def from_dict(d: dict) -> "SymbolDetection":
        return SymbolDetection(
            kind=d["kind"],
            box=BoundingBox(*d["box"]),
            score=float(d["score"]),
            center=(float(d["center"][0]), float(d["center"][1])),
            value=d.get("value"),
        )


def detections_to_json(page: str, detections: list) -> dict:
    return {"page": page, "detections": [d.to_dict() for d in detections]}


def detections_from_json(doc: dict) -> tuple[str, list]:
    return doc["page"], [SymbolDetection.from_dict(d) for d in doc["detections"]]


@dataclass(frozen=True)
class FontMetrics:
    """Local scale: the typical digit glyph box on this page."""

    digit_width: float
    digit_height: float

    @property
    def digit_area(self) -> float:
        return self.digit_width * self.digit_height

    @staticmethod
    def from_detections(digits: list, fallback: "FontMetrics") -> "FontMetrics":
        if not digits:
            return fallback
        return FontMetrics(
            digit_width=float(np.median([d.box.width for d in digits])),
            digit_height=float(np.median([d.box.height for d in digits])),
        )

    @staticmethod
    def from_templates(templates: TemplateSet) -> "FontMetrics":
        return FontMetrics(templates.digit_width, templates.digit_height)


def detect_digits(page: GrayImage, templates: TemplateSet,
                  threshold: float = 0.55, nms_factor: float = 0.6,
                  iou_suppress: float = 0.3, verify_iou: float = 0.5) -> list:
    """Per-digit correlation plus peak extraction; cross-digit overlaps
    resolved greedily by score. Digit 0 becomes kind="rest".

    Each candidate's binarized window must also overlap the glyph ink
    mask (IoU >= verify_iou): correlation alone scores stroke-rich
    non-digit content (e.g. lyric characters) above threshold, but their
    ink shape gives them away. Set verify_iou to 0 to disable.
    """
    resp_page = log_filter(page, templates.sigma)
    ink = page.pixels >= 0.5 if verify_iou > 0 else None
    nms_radius = nms_factor * templates.digit_width
    candidates = []
    for d in DIGITS:
        t = templates.templates[d]
        if t.height > page.height or t.width > page.width:
            continue
        resp = _ncc_valid(resp_page, t.raster)
        for (x, y), s in extract_peaks(resp, threshold, nms_radius):
            if ink is not None and t.mask is not None:
                window = ink[y : y + t.height, x : x + t.width]
                union = np.logical_or(window, t.mask).sum()
                if union == 0 or np.logical_and(window, t.mask).sum() / union < verify_iou:
                    continue
            box = BoundingBox(x, y, x + t.width, y + t.height)
            center = (x + t.anchor[0], y + t.anchor[1])
            candidates.append((s, center, box, d))
    candidates.sort(key=lambda c: (-c[0], c[1][1], c[1][0], c[3]))
    kept = []
    for s, center, box, d in candidates:
        if any(box.iou(k.box) > iou_suppress for k in kept):
            continue
        kind = "rest" if d == 0 else "digit"
        kept.append(SymbolDetection(kind=kind, box=box, score=min(1.0, max(0.0, s)),
                                    center=center, value=d))
    kept.sort(key=lambda k: (k.center[1], k.center[0]))
    return kept


def _mask_boxes(mask: np.ndarray, boxes: list, inflate: int = 2) -> np.ndarray:
    out = mask.copy()
    h, w = out.shape
    for b in boxes:
        out[max(0, b.y0 - inflate) : min(h, b.y1 + inflate),
            max(0, b.x0 - inflate) : min(w, b.x1 + inflate)] = False
    return out


def detect_structural(page: GrayImage, digits: list, font_metrics: FontMetrics,
                      binarize_threshold: float = 0.5,
                      dot_area=(0.02, 0.3), dot_aspect=(0.5, 2.0),
                      underline_max_h: float = 0.25, underline_min_w: float = 0.6,
                      dash_min_w: float = 0.35, dash_min_aspect: float = 2.0,
                      dash_band: float = 0.35,
                      barline_min_h: float = 1.2, barline_max_w: float = 0.5) -> list:
    """Classify non-digit connected components by geometry.

    Dots get a provisional octave/augmentation kind from their position
    relative to the nearest digit; the semantic binding stage makes the
    final call with anisotropic metrics.
    """
    dw, dh = font_metrics.digit_width, font_metrics.digit_height
    area_lo, area_hi = dot_area[0] * font_metrics.digit_area, dot_area[1] * font_metrics.digit_area
    mask = binarize(page, binarize_threshold).pixels
    mask = _mask_boxes(mask, [d.box for d in digits])
    comps = connected_components(BinaryImage(mask), connectivity=8)
    centers = np.array([d.center for d in digits]) if digits else None
    out = []
    for comp in comps:
        b = comp.box
        cx, cy = comp.center
        w, h = b.width, b.height
        if comp.area < 3:
            continue
        if h >= barline_min_h * dh and w <= barline_max_w * dw:
            out.append(SymbolDetection("barline", b, 1.0, (cx, cy)))
            continue
        if centers is None:
            continue
        dxs = centers[:, 0] - cx
        dys = centers[:, 1] - cy
        below_digit = any(
            (d.box.x0 - 0.3 * dw) <= cx <= (d.box.x1 + 0.3 * dw)
            and 0 < cy - d.box.y1 <= 1.1 * dh
            for d in digits
        )
        if h <= underline_max_h * dh and w >= underline_min_w * dw and below_digit:
            out.append(SymbolDetection("underline", b, 1.0, (cx, cy)))
            continue
        # mid-height test against digits of the same row, not the global
        # nearest (which may sit in the system above or below)
        same_row = np.abs(dxs) <= 8.0 * dw
        row_dy = np.abs(dys[same_row]).min() if same_row.any() else np.inf
        if (h <= underline_max_h * dh and w >= dash_min_w * dw
                and w / max(h, 1) >= dash_min_aspect
                and row_dy <= dash_band * dh and not below_digit):
            out.append(SymbolDetection("dash", b, 1.0, (cx, cy)))
            continue
        aspect = w / h
        if area_lo <= comp.area <= area_hi and dot_aspect[0] <= aspect <= dot_aspect[1]:
            nearest = int(np.argmin(dxs * dxs + dys * dys))
            kind = ("octave_dot" if abs(dys[nearest]) >= abs(dxs[nearest])
                    else "augmentation_dot")
            out.append(SymbolDetection(kind, b, 1.0, (cx, cy)))
    out.sort(key=lambda d: (d.center[1], d.center[0]))
    return out


@dataclass(frozen=True)
class ChainGeometry:
    span_x: float
    span_y: float
    flatness: float
    arc_direction: str  # "up" | "down"
    endpoint_slopes: tuple[float, float]
    dy_sign_changes: int


def analyze_chain(chain, slope_pts: int = 5, dy_eps: float = 0.15) -> ChainGeometry:
    """Geometric summary of a (preferably smoothed) chain."""
    path = chain.path_array()
    xs, ys = path[:, 0], path[:, 1]
    span_x = float(xs.max() - xs.min())
    span_y = float(ys.max() - ys.min())
    flatness = span_y / span_x if span_x > 0 else np.inf
    interior = ys[1:-1].mean() if len(ys) > 2 else ys.mean()
    chord = (ys[0] + ys[-1]) / 2.0
    direction = "up" if interior <= chord else "down"  # image y grows downward
    k = min(slope_pts, len(path) - 1)
    s0 = np.degrees(np.arctan2(ys[k] - ys[0], xs[k] - xs[0])) if k > 0 else 0.0
    s1 = np.degrees(np.arctan2(ys[-1] - ys[-1 - k], xs[-1] - xs[-1 - k])) if k > 0 else 0.0
    dy = np.diff(ys)
    signs = np.sign(dy[np.abs(dy) > dy_eps])
    changes = int(np.sum(signs[1:] != signs[:-1])) if len(signs) > 1 else 0
    return ChainGeometry(span_x=span_x, span_y=span_y, flatness=flatness,
                         arc_direction=direction, endpoint_slopes=(float(s0), float(s1)),
                         dy_sign_changes=changes)


def detect_ties_slurs(page: GrayImage, font_metrics: FontMetrics,
                      binarize_threshold: float = 0.5,
                      close_radius: int = 2, open_radius: int = 1,
                      smooth_window: int = 7,
                      min_span_factor: float = 1.2,
                      flatness_range=(0.08, 0.5)) -> list:
    """Arc detection: enhance, thin, chain each component, accept arcs.

    Accepts a chain iff its x span is at least min_span_factor digit
    widths, its height/width ratio falls in flatness_range, dy changes
    sign at most once, and the arc bows upward.
    """
    mask = binarize(page, binarize_threshold)
    enhanced = morph(morph(mask, "close", close_radius), "open", open_radius)
    skel = zhang_suen_thin(enhanced)
    graph = build_skeleton_graph(skel)
    out = []
    for ci in range(len(graph.components)):
        if len(graph.components[ci]) < 8:
            continue
        chain = smooth_chain(longest_chain(graph, ci), smooth_window)
        geom = analyze_chain(chain)
        if geom.span_x < min_span_factor * font_metrics.digit_width:
            continue
        if not flatness_range[0] <= geom.flatness <= flatness_range[1]:
            continue
        if geom.dy_sign_changes > 1 or geom.arc_direction != "up":
            continue
        path = chain.path_array()
        x0, y0 = int(np.floor(path[:, 0].min())), int(np.floor(path[:, 1].min()))
        x1, y1 = int(np.ceil(path[:, 0].max())) + 1, int(np.ceil(path[:, 1].max())) + 1
        box = BoundingBox(x0, y0, x1, y1)
        out.append(SymbolDetection("tie_slur", box, 1.0, box.center))
    out.sort(key=lambda d: (d.center[1], d.center[0]))
    return out


def write_detections(path, page_name: str, detections: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(detections_to_json(page_name, detections), fh,
                  ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def read_detections(path) -> tuple[str, list]:
    with open(path, encoding="utf-8") as fh:
        return detections_from_json(json.load(fh))
