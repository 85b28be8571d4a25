"""Command-line surface: jianpu-scribe <subcommand> ...

Exit codes: 0 success, 1 partial failure (some pages failed), 2 usage or
configuration errors. Logs are line-oriented on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from . import evalkit, fixtures, lyricocr, pipeline, scorexport
from .config import ConfigError, load_config
from .imaging import load_image, save_image

log = logging.getLogger("jianpu_scribe")


def _add_common(p):
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=7,
                   help="seed for randomized stages (fixture rendering)")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jianpu-scribe",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline over score pages")
    _add_common(p)
    p.add_argument("pages", nargs="+", help="page image files")
    p.add_argument("--with-lyrics", action="store_true")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("preprocess", help="emit corrected image and angle")
    _add_common(p)
    p.add_argument("pages", nargs="+")

    p = sub.add_parser("detect", help="emit detections JSON per page")
    _add_common(p)
    p.add_argument("pages", nargs="+")

    p = sub.add_parser("recognize-lyrics", help="emit recognitions JSON per page")
    _add_common(p)
    p.add_argument("pages", nargs="+")
    p.add_argument("--table-limit", type=int, default=None,
                   help="use only the first N charset entries")

    p = sub.add_parser("export", help="ScoreGraph JSON to MusicXML/MIDI")
    _add_common(p)
    p.add_argument("scores", nargs="+", help="score JSON files")

    p = sub.add_parser("evaluate", help="pred vs truth metrics report")
    _add_common(p)
    p.add_argument("--pred", help="predicted score JSON")
    p.add_argument("--truth", help="ground-truth score JSON")
    p.add_argument("--pred-chars", help="predicted recognitions JSON")
    p.add_argument("--truth-chars", help="ground-truth recognitions JSON")
    p.add_argument("--counts", help="JSON file of (tp, fn, fp) triples to report")
    p.add_argument("--match-radius", type=float, default=None,
                   help="note match radius in px (default 0.75 x digit height)")

    p = sub.add_parser("render-fixtures", help="generate the synthetic corpus")
    _add_common(p)
    p.add_argument("--pages", type=int, default=20)
    p.add_argument("--with-lyrics", action="store_true")
    p.add_argument("--atlas-size", type=int, default=200,
                   help="synthesize an atlas of the first N charset entries")

    p = sub.add_parser("calibrate-fusion", help="grid-search fusion weights")
    _add_common(p)
    p.add_argument("--pairs", required=True,
                   help="JSON list of {a, b, same} patch pairs")

    return ap


def _cmd_run(args, cfg):
    manifest = pipeline.run(cfg, args.pages, args.out,
                            with_lyrics=args.with_lyrics, jobs=args.jobs)
    for page in manifest.pages:
        status = "ok" if page.ok else f"FAILED ({page.error})"
        log.info("%s: %s", page.page, status)
    return 1 if manifest.failed else 0


def _cmd_preprocess(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for path in args.pages:
        stem = Path(path).stem
        try:
            img = load_image(path)
            corrected, info = pipeline.preprocess_page(img, cfg)
            save_image(corrected, out / f"{stem}.corrected.png")
            _write_json(out / f"{stem}.preprocess.json",
                        {"angle": round(info["angle"], 4),
                         "lighting": info["lighting"],
                         "warnings": info["warnings"]})
        except Exception as exc:
            log.error("%s: %s", stem, exc)
            failed += 1
    return 1 if failed else 0


def _cmd_detect(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    assets = pipeline.load_assets(cfg)
    failed = 0
    for path in args.pages:
        stem = Path(path).stem
        try:
            img = load_image(path)
            corrected, _ = pipeline.preprocess_page(img, cfg)
            detections, _ = pipeline.detect_page(corrected, cfg, assets)
            from .symboldetect import write_detections

            write_detections(out / f"{stem}.detections.json", stem, detections)
        except Exception as exc:
            log.error("%s: %s", stem, exc)
            failed += 1
    return 1 if failed else 0


def _cmd_recognize_lyrics(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    assets = pipeline.load_assets(cfg, need_lyrics=True)
    failed = 0
    for path in args.pages:
        stem = Path(path).stem
        try:
            img = load_image(path)
            corrected, _ = pipeline.preprocess_page(img, cfg)
            recs = pipeline.recognize_page_lyrics(corrected, cfg, assets, stem,
                                                  table_limit=args.table_limit)
            lyricocr.write_recognitions(out / f"{stem}.chars.json", stem, recs)
        except Exception as exc:
            log.error("%s: %s", stem, exc)
            failed += 1
    return 1 if failed else 0


def _cmd_export(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = scorexport.ExportOptions(divisions=cfg.score.divisions,
                                    tempo_bpm=cfg.score.tempo_bpm,
                                    part_name=cfg.score.part_name)
    failed = 0
    for path in args.scores:
        stem = Path(path).stem.removesuffix(".score")
        try:
            with open(path, encoding="utf-8") as fh:
                score = scorexport.score_from_json(json.load(fh))
            (out / f"{stem}.musicxml").write_text(
                scorexport.to_musicxml(score, opts), encoding="utf-8")
            (out / f"{stem}.mid").write_bytes(scorexport.to_midi(score, opts))
        except Exception as exc:
            log.error("%s: %s", stem, exc)
            failed += 1
    return 1 if failed else 0


def _cmd_evaluate(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_doc = {}
    if args.counts:
        with open(args.counts, encoding="utf-8") as fh:
            triples = json.load(fh)
        report_doc["count_fixtures"] = [
            {"tp": t["tp"], "fn": t["fn"], "fp": t["fp"],
             "f1": round(evalkit.f1(t["tp"], t["fn"], t["fp"]), 3)}
            for t in triples
        ]
        for row in report_doc["count_fixtures"]:
            print(f"f1({row['tp']},{row['fn']},{row['fp']}) = {row['f1']:.3f}")
    if args.pred and args.truth:
        with open(args.pred, encoding="utf-8") as fh:
            pred = scorexport.score_from_json(json.load(fh))
        with open(args.truth, encoding="utf-8") as fh:
            truth = scorexport.score_from_json(json.load(fh))
        radius = args.match_radius
        if radius is None:
            radius = 0.75 * float(truth.metadata.get("digit_height", 30.0))
        report = evalkit.evaluate_scores(pred, truth, radius)
        report_doc["notes"] = report.to_json()
        print(report.format_table())
    if args.pred_chars and args.truth_chars:
        _, pred_recs = lyricocr.read_recognitions(args.pred_chars)
        _, truth_recs = lyricocr.read_recognitions(args.truth_chars)
        pc = [(r.character, r.box.center) for r in pred_recs]
        tc = [(r.character, r.box.center) for r in truth_recs]
        radius = args.match_radius or 16.0
        det, joint, outcome = evalkit.evaluate_lyrics(pc, tc, radius)
        report_doc["lyrics"] = {
            "detection_f1": round(det, 6), "joint_f1": round(joint, 6),
            "tp": outcome.tp, "fn": outcome.fn, "fp": outcome.fp,
        }
        print(f"lyric detection F1 {det:0.3f}  joint F1 {joint:0.3f}")
    if not report_doc:
        raise ConfigError("evaluate needs --counts, --pred/--truth, or char files")
    _write_json(out / "evaluation.json", report_doc)
    return 0


def _cmd_render_fixtures(args, cfg):
    out = Path(args.out)
    charset = lyricocr.load_charset(
        cfg.assets.charset_path or fixtures.default_charset_path())
    atlas_dir = None
    if args.with_lyrics:
        atlas_dir = cfg.assets.atlas_dir or str(out / "atlas")
        fixtures.write_glyph_atlas(charset[: args.atlas_size], atlas_dir)
    manifest = fixtures.generate_corpus(
        out / "pages", n_pages=args.pages, seed=args.seed,
        with_lyrics=args.with_lyrics, charset=charset[: args.atlas_size],
        atlas_dir=atlas_dir,
        glyph_dir=cfg.assets.digit_glyph_dir or None)
    log.info("rendered %d pages, %d notes", len(manifest["pages"]),
             manifest["total_notes"])
    return 0


def _cmd_calibrate_fusion(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.pairs, encoding="utf-8") as fh:
        pairs = json.load(fh)
    from . import charsim
    from .lyricocr import skeleton_points

    scored = []
    for item in pairs:
        a = load_image(item["a"])
        b = load_image(item["b"])
        rep = charsim.compare_patches(a.pixels, b.pixels,
                                      skel_a=skeleton_points(a),
                                      skel_b=skeleton_points(b),
                                      lam=cfg.fusion.lam)
        scored.append((rep, bool(item["same"])))

    grid = [0.1, 0.2, 0.3, 0.4]
    gamma_grid = [0.5, 1.0, 2.0]
    best = None
    for wp, wi, ws in itertools.product(grid, repeat=3):
        weights = {"phase": wp, "iou": wi, "skeleton": ws}
        for g in gamma_grid:
            gammas = {"phase": g, "iou": g, "skeleton": g}
            fused = [(charsim.fuse(r.s_phase, r.s_iou, r.s_skel,
                                   weights=weights, gammas=gammas), same)
                     for r, same in scored]
            pos = sorted(f for f, same in fused if same)
            neg = sorted(f for f, same in fused if not same)
            if not pos or not neg:
                continue
            margin = pos[0] - neg[-1]  # worst-case separation
            if best is None or margin > best[0]:
                best = (margin, weights, gammas)
    if best is None:
        raise ConfigError("calibration needs both same and different pairs")
    margin, weights, gammas = best
    _write_json(out / "fusion.json",
                {"margin": round(margin, 6), "weights": weights, "gammas": gammas})
    print(f"best worst-case margin {margin:0.4f} with weights {weights}")
    return 0


COMMANDS = {
    "run": _cmd_run,
    "preprocess": _cmd_preprocess,
    "detect": _cmd_detect,
    "recognize-lyrics": _cmd_recognize_lyrics,
    "export": _cmd_export,
    "evaluate": _cmd_evaluate,
    "render-fixtures": _cmd_render_fixtures,
    "calibrate-fusion": _cmd_calibrate_fusion,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
