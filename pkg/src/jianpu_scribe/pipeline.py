"""Batch orchestration: preprocess, detect, assemble, export, per page.

Failures isolate to the failing page; the run manifest records one entry
per page with stage timings, output paths, and warnings.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import fixtures, lyricocr, preprocess, scorexport, semantics, symboldetect
from .charsim import load_embedding_table
from .config import PipelineConfig
from .imaging import GrayImage, load_image
from .symboldetect import FontMetrics, TemplateSet, build_template_set

log = logging.getLogger(__name__)


@dataclass
class PipelineAssets:
    templates: TemplateSet
    charset: list | None = None
    atlas: fixtures.GlyphAtlas | None = None
    embeddings: object | None = None
    _table_cache: dict = field(default_factory=dict)
    _table_lock: threading.Lock = field(default_factory=threading.Lock)

    def template_table(self, size: int, limit: int | None = None):
        key = (size, limit)
        with self._table_lock:  # worker threads share one lazy build
            if key not in self._table_cache:
                if not (self.charset and self.atlas):
                    raise ValueError("lyric recognition needs charset and atlas assets")
                charset = self.charset[:limit] if limit else self.charset
                self._table_cache[key] = lyricocr.build_template_table(
                    charset, self.atlas, size=size)
        return self._table_cache[key]


def load_assets(cfg: PipelineConfig, need_lyrics: bool = False) -> PipelineAssets:
    glyph_dir = cfg.assets.digit_glyph_dir or None
    accent_dir = cfg.assets.accent_dir or None
    glyphs = fixtures.load_digit_glyphs(glyph_dir)
    accents = fixtures.load_accent_masks(accent_dir)
    templates = build_template_set(glyphs, sigma=cfg.detect.log_sigma,
                                   accent_masks=accents)
    charset = None
    atlas = None
    if need_lyrics:
        charset_path = cfg.assets.charset_path or fixtures.default_charset_path()
        charset = lyricocr.load_charset(charset_path)
        if not cfg.assets.atlas_dir:
            raise ValueError("config assets.atlas_dir is required for lyrics")
        atlas = fixtures.GlyphAtlas(cfg.assets.atlas_dir)
    embeddings = None
    if cfg.assets.embedding_table:
        embeddings = load_embedding_table(cfg.assets.embedding_table)
    return PipelineAssets(templates=templates, charset=charset, atlas=atlas,
                          embeddings=embeddings)


@dataclass
class PageResult:
    page: str
    ok: bool
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    error: str | None = None


@dataclass
class RunManifest:
    pages: list = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(0 if p.ok else 1 for p in self.pages)

    def to_json(self) -> dict:
        return {
            "pages": [
                {
                    "page": p.page,
                    "ok": p.ok,
                    "outputs": p.outputs,
                    "timings": {k: round(v, 4) for k, v in p.timings.items()},
                    "warnings": p.warnings,
                    "error": p.error,
                }
                for p in self.pages
            ],
            "failed": self.failed,
        }


def preprocess_page(img: GrayImage, cfg: PipelineConfig):
    """Lighting then rotation correction; returns (image, info dict)."""
    warnings = []
    profile = None
    try:
        profile = preprocess.estimate_lighting(
            img, alpha=cfg.lighting.alpha, v_bgt=cfg.lighting.v_bgt,
            v_fgt=cfg.lighting.v_fgt)
        img = preprocess.dual_gamma(img, profile)
    except preprocess.LightingError as exc:
        warnings.append(f"lighting correction skipped: {exc}")
    result = preprocess.deskew(img, search_range=cfg.deskew.range_deg,
                               tol=cfg.deskew.tol_deg, levels=cfg.deskew.levels,
                               grid_step=cfg.deskew.grid_step_deg)
    if result.blank_page:
        warnings.append("blank page: deskew skipped")
    info = {"angle": result.angle, "warnings": warnings,
            "lighting": None if profile is None else
            {"v_bg": profile.v_bg, "v_fg": profile.v_fg,
             "gamma1": profile.gamma1, "gamma2": profile.gamma2}}
    return result.image, info


def detect_page(img: GrayImage, cfg: PipelineConfig, assets: PipelineAssets):
    """All symbol detections for one preprocessed page."""
    d = cfg.detect
    digits = symboldetect.detect_digits(
        img, assets.templates, threshold=d.corr_threshold,
        nms_factor=d.nms_factor, iou_suppress=d.iou_suppress,
        verify_iou=d.verify_iou)
    metrics = FontMetrics.from_detections(
        digits, FontMetrics.from_templates(assets.templates))
    structural = symboldetect.detect_structural(
        img, digits, metrics, binarize_threshold=d.binarize_threshold)
    arcs = symboldetect.detect_ties_slurs(
        img, metrics, binarize_threshold=d.binarize_threshold,
        close_radius=cfg.arcs.close_radius, open_radius=cfg.arcs.open_radius,
        smooth_window=cfg.arcs.smooth_window,
        min_span_factor=cfg.arcs.min_span_factor,
        flatness_range=(cfg.arcs.flatness_min, cfg.arcs.flatness_max))
    return digits + structural + arcs, metrics


def recognize_page_lyrics(img: GrayImage, cfg: PipelineConfig,
                          assets: PipelineAssets, page_id: str = "",
                          table_limit: int | None = None,
                          melody_detections: list | None = None):
    """Character recognition over the page with melody symbols masked out.

    Digits, dots, lines, and arcs already belong to the melody stage;
    blanking their boxes keeps them out of the character candidates.
    """
    if melody_detections is None:
        melody_detections, _ = detect_page(img, cfg, assets)
    px = img.pixels.copy()
    h, w = px.shape
    mask_kinds = {"digit", "rest", "underline", "dash", "barline", "tie_slur"}
    for det in melody_detections:
        if det.kind not in mask_kinds:
            continue  # dots are too small to pass the candidate size filter
        b = det.box
        px[max(0, b.y0 - 2) : min(h, b.y1 + 2),
           max(0, b.x0 - 2) : min(w, b.x1 + 2)] = 0.0
    img = GrayImage(px)
    table = assets.template_table(size=32, limit=table_limit)
    mc = lyricocr.MatchConfig(
        k1=cfg.ocr.k1, rank_prior_r0=cfg.ocr.rank_prior_r0,
        lam=cfg.fusion.lam, accept_threshold=cfg.ocr.accept_threshold,
        fast=cfg.ocr.fast,
        weights=cfg.fusion_weights(with_embedding=assets.embeddings is not None),
        gammas=cfg.fusion_gammas())
    kwargs = dict(
        thresholds=tuple(cfg.ocr.thresholds),
        merge_iou=cfg.ocr.merge_iou, merge_center_em=cfg.ocr.merge_center_em,
        aspect_range=(cfg.ocr.aspect_min, cfg.ocr.aspect_max),
        size_range=(cfg.ocr.size_min_em, cfg.ocr.size_max_em),
        density_range=(cfg.ocr.density_min, cfg.ocr.density_max))
    return lyricocr.recognize_page(img, table, em=float(table.font_size),
                                   cfg=mc, candidate_kwargs=kwargs,
                                   embeddings=assets.embeddings, page_id=page_id)


def build_page_score(detections, metrics: FontMetrics, cfg: PipelineConfig,
                     recognitions=None) -> semantics.ScoreGraph:
    lyric_chars = None
    if recognitions:
        lyric_chars = [(r.character, r.box.center) for r in recognitions]
    return semantics.build_score(
        detections, metrics.digit_height,
        metrics=cfg.relation_metrics(),
        key_root=cfg.score.key_root, base_octave=cfg.score.base_octave,
        beats_per_measure=Fraction(cfg.score.beats_per_measure),
        lyric_chars=lyric_chars,
        metadata={"digit_height": metrics.digit_height})


def process_page(path, cfg: PipelineConfig, assets: PipelineAssets,
                 out_dir: Path, with_lyrics: bool = False) -> PageResult:
    stem = Path(path).stem
    result = PageResult(page=stem, ok=True)
    try:
        t0 = time.perf_counter()
        img = load_image(path)
        corrected, info = preprocess_page(img, cfg)
        result.warnings.extend(info["warnings"])
        result.timings["preprocess"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        detections, metrics = detect_page(corrected, cfg, assets)
        result.timings["detect"] = time.perf_counter() - t0
        if not any(d.kind in ("digit", "rest") for d in detections):
            result.warnings.append("no digits detected; emitting empty score")

        recognitions = None
        if with_lyrics:
            t0 = time.perf_counter()
            recognitions = recognize_page_lyrics(corrected, cfg, assets, stem,
                                                 melody_detections=detections)
            result.timings["lyrics"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        score = build_page_score(detections, metrics, cfg, recognitions)
        result.timings["semantics"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        opts = scorexport.ExportOptions(
            divisions=cfg.score.divisions, tempo_bpm=cfg.score.tempo_bpm,
            part_name=cfg.score.part_name)
        out_dir.mkdir(parents=True, exist_ok=True)
        det_path = out_dir / f"{stem}.detections.json"
        symboldetect.write_detections(det_path, stem, detections)
        score_path = out_dir / f"{stem}.score.json"
        with open(score_path, "w", encoding="utf-8") as fh:
            json.dump(scorexport.score_to_json(score), fh, ensure_ascii=False,
                      indent=2, sort_keys=True)
            fh.write("\n")
        xml_path = out_dir / f"{stem}.musicxml"
        xml_path.write_text(scorexport.to_musicxml(score, opts), encoding="utf-8")
        midi_path = out_dir / f"{stem}.mid"
        midi_path.write_bytes(scorexport.to_midi(score, opts))
        result.outputs = {
            "detections": det_path.name, "score": score_path.name,
            "musicxml": xml_path.name, "midi": midi_path.name,
        }
        if recognitions is not None:
            chars_path = out_dir / f"{stem}.chars.json"
            lyricocr.write_recognitions(chars_path, stem, recognitions)
            result.outputs["chars"] = chars_path.name
        result.timings["export"] = time.perf_counter() - t0
    except Exception as exc:  # per-page isolation
        log.exception("page %s failed", stem)
        result.ok = False
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run(cfg: PipelineConfig, pages: list, out_dir, with_lyrics: bool = False,
        jobs: int = 1) -> RunManifest:
    """Process pages (optionally in a thread pool) and write the manifest."""
    if not pages:
        raise ValueError("need at least one page")
    out_dir = Path(out_dir)
    assets = load_assets(cfg, need_lyrics=with_lyrics)
    manifest = RunManifest()
    if jobs <= 1:
        results = [process_page(p, cfg, assets, out_dir, with_lyrics)
                   for p in pages]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda p: process_page(p, cfg, assets, out_dir, with_lyrics),
                pages))
    manifest.pages = sorted(results, key=lambda r: r.page)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, ensure_ascii=False, indent=2,
                  sort_keys=True)
        fh.write("\n")
    return manifest
