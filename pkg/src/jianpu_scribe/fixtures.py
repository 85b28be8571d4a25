"""Synthetic page rendering: the test corpus generator.

Renders numbered-notation pages (digits, octave dots, duration
underlines, dashes, augmentation dots, barlines, tie/slur arcs, optional
lyric glyphs) from a seeded plan, together with machine-readable ground
truth. Glyph sources are a committed digit glyph directory and a
deterministic synthetic Hanzi atlas (PNG per codepoint), so no font
rasterization happens at run time.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .imaging import GrayImage, load_image, save_image
from .semantics import MAJOR_SCALE_OFFSETS

PACKAGE_ASSETS = Path(__file__).parent / "assets"


def asset_root() -> Path:
    """Packaged assets, overridable via JIANPU_SCRIBE_ASSETS."""
    override = os.environ.get("JIANPU_SCRIBE_ASSETS")
    return Path(override) if override else PACKAGE_ASSETS

# duration menu: (beats, underlines, dashes, augmentation, weight)
DURATION_MENU = (
    (Fraction(4), 0, 3, 0, 0.03),
    (Fraction(3), 0, 2, 0, 0.05),
    (Fraction(2), 0, 1, 0, 0.09),
    (Fraction(3, 2), 0, 0, 1, 0.10),
    (Fraction(1), 0, 0, 0, 0.33),
    (Fraction(3, 4), 1, 0, 1, 0.06),
    (Fraction(1, 2), 1, 0, 0, 0.24),
    (Fraction(1, 4), 2, 0, 0, 0.08),
    (Fraction(1, 8), 3, 0, 0, 0.02),
)


def load_digit_glyphs(directory=None) -> dict:
    """Digit glyph images (ink bright) keyed 0-7 from the asset dir."""
    directory = Path(directory) if directory else asset_root() / "digits"
    glyphs = {}
    for d in range(8):
        path = directory / f"d{d}.png"
        if not path.exists():
            raise FileNotFoundError(f"missing digit glyph asset {path}")
        glyphs[d] = load_image(path)
    return glyphs


def load_accent_masks(directory=None) -> dict:
    """Signed accent masks stored as mid-gray-centered PNGs.

    Byte value v decodes to v/255 - 0.5, so gray 128 is (near) zero and
    the full range spans [-0.5, 0.5] in LoG-response units. The authoring
    convention is documented in docs/accent_masks.md.
    """
    directory = Path(directory) if directory else asset_root() / "accents"
    masks = {}
    for d in range(8):
        path = directory / f"d{d}.png"
        if not path.exists():
            continue
        img = load_image(path)
        masks[d] = 0.5 - img.pixels  # load inverts: 1 - v/255
    return masks


def default_charset_path() -> Path:
    return asset_root() / "charset" / "charset_3500.txt"


# --- synthetic Hanzi glyphs --------------------------------------------------

def synthesize_hanzi_glyph(char: str, size: int = 32) -> GrayImage:
    """Deterministic stroke-pattern glyph for a codepoint.

    Not a faithful rendering (no CJK font is assumed). Each character
    maps to a full horizontal and vertical stroke at hash-keyed anchors
    plus an independent hash-keyed motif per cell of a 3x3 grid, so two
    characters differ in most cells with near-certainty while keeping
    Hanzi-like density and square extent.
    """
    digest = hashlib.sha256(char.encode("utf-8")).digest()
    canvas = np.zeros((size, size))
    m = max(2, round(size * 0.12))
    t = max(2, size // 16)
    span = size - 2 * m
    anchors = np.linspace(m + 1, size - m - 2, 7).round().astype(int)

    def hline(y, x0, x1):
        canvas[max(0, y - t // 2) : y - t // 2 + t, x0:x1] = 1.0

    def vline(x, y0, y1):
        canvas[y0:y1, max(0, x - t // 2) : x - t // 2 + t] = 1.0

    hline(anchors[digest[0] % 7], m, size - m)
    vline(anchors[digest[1] % 7], m, size - m)

    cell = span / 3.0
    for i in range(9):
        motif = digest[2 + i] % 6
        if motif == 0:
            continue
        param = digest[11 + i] % 3  # in-cell placement variant
        cx0 = int(round(m + (i % 3) * cell))
        cy0 = int(round(m + (i // 3) * cell))
        cx1 = int(round(cx0 + cell))
        cy1 = int(round(cy0 + cell))
        ccx, ccy = (cx0 + cx1) // 2, (cy0 + cy1) // 2
        third = max(2, (cy1 - cy0) // 3)
        if motif == 1:
            hline(cy0 + 2 + param * third, cx0 + 1, cx1 - 1)
        elif motif == 2:
            vline(cx0 + 2 + param * third, cy0 + 1, cy1 - 1)
        elif motif == 3 and canvas.mean() <= 0.30:
            hline(cy0 + 1, cx0 + 1, cx1 - 1)
            hline(cy1 - 2, cx0 + 1, cx1 - 1)
            vline(cx0 + 1, cy0 + 1, cy1 - 1)
            vline(cx1 - 2, cy0 + 1, cy1 - 1)
        elif motif == 4:
            dy, dx = [(-2, -2), (0, 0), (2, 2)][param]
            canvas[ccy + dy - 2 : ccy + dy + 2, ccx + dx - 2 : ccx + dx + 2] = 1.0
        else:  # corner L
            if param == 0:
                hline(cy0 + 2, cx0 + 1, cx1 - 1)
                vline(cx0 + 2, cy0 + 1, cy1 - 1)
            elif param == 1:
                hline(cy1 - 3, cx0 + 1, cx1 - 1)
                vline(cx1 - 3, cy0 + 1, cy1 - 1)
            else:
                hline(cy0 + 2, cx0 + 1, cx1 - 1)
                vline(cx1 - 3, cy0 + 1, cy1 - 1)
    return GrayImage(np.clip(canvas, 0.0, 1.0))


def write_glyph_atlas(charset: list, out_dir, size: int = 32) -> int:
    """Write one PNG per codepoint (U+XXXX.png); returns the count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for ch in charset:
        save_image(synthesize_hanzi_glyph(ch, size), out_dir / f"U+{ord(ch):04X}.png")
    return len(charset)


class GlyphAtlas:
    """Directory of pre-rendered glyph PNGs, one per codepoint."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"glyph atlas directory {directory} not found")

    def get(self, char: str) -> GrayImage | None:
        path = self.directory / f"U+{ord(char):04X}.png"
        if not path.exists():
            return None
        return load_image(path)

    def __call__(self, char: str):
        return self.get(char)


# --- page plans --------------------------------------------------------------

@dataclass
class EventPlan:
    digit: int
    duration: Fraction
    underlines: int
    dashes: int
    augmentation: int
    octave_shift: int = 0
    lyric: str | None = None
    x: float = 0.0  # filled during layout
    tie_to_next: bool = False
    slur_group: int | None = None


@dataclass
class SystemPlan:
    y_row: float
    measures: list  # list of list of EventPlan
    arcs: list = field(default_factory=list)  # (flat_index_a, flat_index_b)

    def flat_events(self):
        return [e for m in self.measures for e in m]


@dataclass
class PagePlan:
    width: int
    height: int
    systems: list
    ink: float
    bg: float
    noise_sigma: float
    key_root: int = 0
    base_octave: int = 4
    beats_per_measure: Fraction = Fraction(4)
    with_lyrics: bool = False


def plan_pitch(ev: EventPlan, key_root: int = 0, base_octave: int = 4):
    """Ground-truth pitch from the generator's own movable-do table."""
    if ev.digit == 0:
        return None
    return (MAJOR_SCALE_OFFSETS[ev.digit - 1]
            + 12 * (base_octave + 1 + ev.octave_shift) + key_root)


def _pick_duration(rng, remaining: Fraction):
    menu = [row for row in DURATION_MENU if row[0] <= remaining]
    weights = np.array([row[4] for row in menu])
    idx = rng.choice(len(menu), p=weights / weights.sum())
    return menu[int(idx)]


def _make_events(rng, beats: Fraction, with_lyrics: bool) -> list:
    events = []
    remaining = beats
    while remaining > 0:
        dur, u, dashes, aug, _ = _pick_duration(rng, remaining)
        digit = 0 if rng.random() < 0.10 else int(rng.integers(1, 8))
        if digit == 0:
            shift, aug_eff, dashes_eff = 0, 0, dashes
            dur = Fraction(1, 2 ** u) + dashes  # rests carry no dot
        else:
            shift = int(rng.choice([-2, -1, 0, 0, 0, 0, 1, 2],
                                   p=[0.05, 0.13, 0.2, 0.2, 0.2, 0.12, 0.07, 0.03]))
            if with_lyrics:
                shift = max(0, shift)
            if u >= 1 and shift < -1:
                shift = -1
            if u >= 3 and shift < 0:
                shift = 0
            aug_eff, dashes_eff = aug, dashes
        events.append(EventPlan(digit=digit, duration=dur, underlines=u,
                                dashes=dashes_eff, augmentation=aug_eff,
                                octave_shift=shift))
        remaining -= dur
    return events


def generate_page_plan(rng, n_systems: int = 3, measures_per_system: int = 2,
                       with_lyrics: bool = False, charset: list | None = None,
                       glyph_dims: tuple = (23, 31),
                       beats_per_measure: Fraction = Fraction(4)) -> PagePlan:
    """Seeded random page plan with legal notation combinations."""
    dw, dh = glyph_dims
    slot = max(40, round(1.9 * dw))
    margin = 60
    system_pitch = round((4.6 if with_lyrics else 3.6) * dh)
    systems = []
    slur_counter = 1
    for si in range(n_systems):
        y_row = margin + dh + si * system_pitch
        measures = [_make_events(rng, beats_per_measure, with_lyrics)
                    for _ in range(measures_per_system)]
        plan = SystemPlan(y_row=float(y_row), measures=measures)
        flat = plan.flat_events()
        # arcs over adjacent non-rest pairs, non-overlapping
        i = 0
        while i < len(flat) - 1:
            a, b = flat[i], flat[i + 1]
            if (a.digit and b.digit and rng.random() < 0.15):
                a.octave_shift = min(a.octave_shift, 0)
                b.octave_shift = min(b.octave_shift, 0)
                if rng.random() < 0.5:  # tie: force equal pitch
                    b.digit, b.octave_shift = a.digit, a.octave_shift
                plan.arcs.append((i, i + 1))
                i += 2
            else:
                i += 1
        # truth tie/slur labels follow the pitch-equality rule
        for ia, ib in plan.arcs:
            a, b = flat[ia], flat[ib]
            if (ib == ia + 1 and a.digit and b.digit
                    and plan_pitch(a) == plan_pitch(b)):
                a.tie_to_next = True
            else:
                a.slur_group = slur_counter
                b.slur_group = slur_counter
                slur_counter += 1
        if with_lyrics and charset:
            for ev in flat:
                if ev.digit:
                    ev.lyric = charset[int(rng.integers(0, len(charset)))]
        systems.append(plan)

    # layout: one slot per digit or dash, half slot around barlines
    max_x = 0.0
    for plan in systems:
        x = float(margin)
        for mi, measure in enumerate(plan.measures):
            for ev in measure:
                ev.x = x + slot / 2.0
                x += slot * (1 + ev.dashes)
            x += slot * 0.5  # barline gap
        max_x = max(max_x, x)
    width = int(max_x + margin)
    height = int(margin + n_systems * system_pitch + margin)
    ink = 0.65 + 0.2 * rng.random()
    bg = 0.06 + 0.10 * rng.random()
    return PagePlan(width=width, height=height, systems=systems, ink=ink, bg=bg,
                    noise_sigma=0.01, with_lyrics=with_lyrics,
                    beats_per_measure=beats_per_measure)


# --- rendering ---------------------------------------------------------------

def _stamp(canvas: np.ndarray, glyph: np.ndarray, cx: float, cy: float):
    gh, gw = glyph.shape
    x0 = int(round(cx - gw / 2.0))
    y0 = int(round(cy - gh / 2.0))
    h, w = canvas.shape
    gx0, gy0 = max(0, -x0), max(0, -y0)
    x0, y0 = max(0, x0), max(0, y0)
    x1 = min(w, x0 + gw - gx0)
    y1 = min(h, y0 + gh - gy0)
    if x1 <= x0 or y1 <= y0:
        return
    region = canvas[y0:y1, x0:x1]
    np.maximum(region, glyph[gy0 : gy0 + (y1 - y0), gx0 : gx0 + (x1 - x0)],
               out=region)


def _rect(canvas, cx, cy, w, h):
    glyph = np.ones((max(1, int(round(h))), max(1, int(round(w)))))
    _stamp(canvas, glyph, cx, cy)


def _dot(canvas, cx, cy, radius=3.6):
    r = int(np.ceil(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    glyph = ((yy * yy + xx * xx) <= radius * radius).astype(float)
    _stamp(canvas, glyph, cx, cy)


def _arc(canvas, x0, x1, y_base, rise=None, thickness=4):
    xs = np.arange(int(round(x0)), int(round(x1)) + 1)
    if len(xs) < 2:
        return
    span = float(xs[-1] - xs[0])
    if rise is None:
        rise = min(22.0, max(10.0, 0.18 * span))
    tnorm = (xs - xs[0]) / span
    ys = y_base - rise * 4.0 * tnorm * (1.0 - tnorm)
    for x, y in zip(xs, ys):
        yi = int(round(y))
        canvas[max(0, yi - thickness // 2) : yi + (thickness + 1) // 2,
               x : x + 1] = 1.0


def render_page(plan: PagePlan, glyphs: dict, atlas=None, rng=None) -> GrayImage:
    """Rasterize a page plan into an ink-bright GrayImage."""
    mask = np.zeros((plan.height, plan.width))
    dh = glyphs[1].height
    dw = glyphs[1].width
    for system in plan.systems:
        y = system.y_row
        flat = system.flat_events()
        for ev in flat:
            g = glyphs[ev.digit]
            _stamp(mask, g.pixels, ev.x, y)
            for i in range(ev.underlines):
                _rect(mask, ev.x, y + dh / 2 + 4 + 5 * i, 1.05 * dw, 4)
            for i in range(ev.dashes):
                slot = max(40, round(1.9 * dw))
                _rect(mask, ev.x + slot * (i + 1), y, 18, 4)
            if ev.augmentation:
                _dot(mask, ev.x + dw / 2 + 8, y)
            below_base = y + dh / 2 + 4 + 5 * ev.underlines + (2 if ev.underlines else 0)
            for i in range(abs(min(ev.octave_shift, 0))):
                _dot(mask, ev.x, below_base + 6 + 10 * i)
            for i in range(max(ev.octave_shift, 0)):
                _dot(mask, ev.x, y - dh / 2 - 7 - 10 * i)
            if ev.lyric and atlas is not None:
                g = atlas.get(ev.lyric)
                if g is not None:
                    _stamp(mask, g.pixels, ev.x, y + 1.6 * dh)
        # barlines centered in the half-slot gap after each measure
        for measure in system.measures:
            last = measure[-1]
            slot = max(40, round(1.9 * dw))
            x = last.x + slot * (0.5 + last.dashes) + slot * 0.25
            _rect(mask, x, y, 3, round(1.5 * dh))
        for ia, ib in system.arcs:
            a, b = flat[ia], flat[ib]
            _arc(mask, a.x, b.x, y - dh / 2 - 8)
    page = plan.bg + mask * (plan.ink - plan.bg)
    if rng is not None and plan.noise_sigma > 0:
        page = page + rng.normal(0.0, plan.noise_sigma, page.shape)
    return GrayImage(np.clip(page, 0.0, 1.0))


# --- ground truth ------------------------------------------------------------

def truth_digit_detections(plan: PagePlan, glyphs: dict) -> list:
    """Digit/rest detections in the shared JSON schema."""
    out = []
    for system in plan.systems:
        for ev in system.flat_events():
            g = glyphs[ev.digit]
            x0 = int(round(ev.x - g.width / 2))
            y0 = int(round(system.y_row - g.height / 2))
            out.append({
                "kind": "rest" if ev.digit == 0 else "digit",
                "value": ev.digit,
                "box": [x0, y0, x0 + g.width, y0 + g.height],
                "score": 1.0,
                "center": [ev.x, system.y_row],
            })
    return out


def truth_score_json(plan: PagePlan) -> dict:
    """Ground-truth ScoreGraph JSON derived from the plan itself."""
    systems = []
    for system in plan.systems:
        measures = []
        for measure in system.measures:
            events = []
            for ev in measure:
                d = {
                    "digit": ev.digit,
                    "position": [round(ev.x, 2), round(system.y_row, 2)],
                    "octave_shift": ev.octave_shift,
                    "underline_count": ev.underlines,
                    "dash_count": ev.dashes,
                    "augmentation_dots": ev.augmentation,
                    "tie_to_next": ev.tie_to_next,
                    "duration": f"{ev.duration.numerator}/{ev.duration.denominator}",
                    "pitch": plan_pitch(ev, plan.key_root, plan.base_octave),
                }
                if ev.slur_group is not None:
                    d["slur_group"] = ev.slur_group
                if ev.lyric is not None:
                    d["lyric"] = ev.lyric
                events.append(d)
            length = sum((e.duration for e in measure), Fraction(0))
            measures.append({
                "events": events,
                "length": f"{length.numerator}/{length.denominator}",
                "barline_x": None,
            })
        systems.append(measures)
    return {
        "version": 1,
        "key_root": plan.key_root,
        "beats_per_measure": (f"{plan.beats_per_measure.numerator}/"
                              f"{plan.beats_per_measure.denominator}"),
        "metadata": {"synthetic": True},
        "systems": systems,
    }


def truth_lyric_chars(plan: PagePlan, glyphs: dict, atlas) -> list:
    out = []
    dh = glyphs[1].height
    for system in plan.systems:
        for ev in system.flat_events():
            if not ev.lyric:
                continue
            g = atlas.get(ev.lyric)
            if g is None:
                continue
            cx, cy = ev.x, system.y_row + 1.6 * dh
            x0 = int(round(cx - g.width / 2))
            y0 = int(round(cy - g.height / 2))
            out.append({
                "ch": ev.lyric,
                "box": [x0, y0, x0 + g.width, y0 + g.height],
                "score": 1.0,
                "center": [cx, cy],
            })
    return out


def generate_corpus(out_dir, n_pages: int, seed: int, with_lyrics: bool = False,
                    charset: list | None = None, atlas_dir=None,
                    glyph_dir=None, n_systems: int = 3,
                    measures_per_system: int = 2) -> dict:
    """Write a seeded synthetic corpus: page PNGs plus truth JSON files.

    Returns a manifest dict (also written to corpus.json).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    glyphs = load_digit_glyphs(glyph_dir)
    atlas = GlyphAtlas(atlas_dir) if atlas_dir else None
    if with_lyrics and atlas is None:
        raise ValueError("with_lyrics requires an atlas_dir")
    rng = np.random.default_rng(seed)
    pages = []
    total_notes = 0
    for i in range(n_pages):
        plan = generate_page_plan(
            rng, n_systems=n_systems, measures_per_system=measures_per_system,
            with_lyrics=with_lyrics, charset=charset,
            glyph_dims=(glyphs[1].width, glyphs[1].height))
        img = render_page(plan, glyphs, atlas=atlas, rng=rng)
        stem = f"page_{i:03d}"
        save_image(img, out_dir / f"{stem}.png")
        truth = {
            "score": truth_score_json(plan),
            "symbols": {"page": stem, "detections": truth_digit_detections(plan, glyphs)},
        }
        if with_lyrics:
            truth["chars"] = {"page": stem,
                              "chars": truth_lyric_chars(plan, glyphs, atlas)}
        with open(out_dir / f"{stem}.truth.json", "w", encoding="utf-8") as fh:
            json.dump(truth, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
        n_notes = sum(len(s.flat_events()) for s in plan.systems)
        total_notes += n_notes
        pages.append({"page": stem, "notes": n_notes,
                      "digit_height": glyphs[1].height})
    manifest = {"seed": seed, "pages": pages, "total_notes": total_notes,
                "with_lyrics": with_lyrics}
    with open(out_dir / "corpus.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def generate_ruled_page(height: int = 480, width: int = 640, n_lines: int = 14,
                        bg: float = 0.1, ink: float = 0.8,
                        line_thickness: int = 3, seed: int = 0) -> GrayImage:
    """Horizontal ruled test page for rotation-correction fixtures."""
    rng = np.random.default_rng(seed)
    mask = np.zeros((height, width))
    ys = np.linspace(height * 0.12, height * 0.88, n_lines).round().astype(int)
    for y in ys:
        x0 = int(width * 0.08 + rng.integers(0, 12))
        x1 = int(width * 0.92 - rng.integers(0, 12))
        mask[y : y + line_thickness, x0:x1] = 1.0
    page = bg + mask * (ink - bg)
    page += rng.normal(0.0, 0.01, page.shape)
    return GrayImage(np.clip(page, 0.0, 1.0))
