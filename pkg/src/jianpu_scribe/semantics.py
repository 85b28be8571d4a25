"""Relationship extraction: flat detections to a structured score graph.

Structural symbols bind to digits through anisotropic nearest-neighbor
queries. Pitch-related marks live on the vertical axis (octave dots:
tall narrow metric), timing marks on the horizontal (augmentation dots
and dashes: wide flat metrics, rightward only), so each relation runs
its own elliptical metric, all on one shared index. Conflicts resolve
globally greedy by ascending distance.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .anisoindex import EllipticalMetric, SpatialIndex

log = logging.getLogger(__name__)

MAJOR_SCALE_OFFSETS = (0, 2, 4, 5, 7, 9, 11)

DOT_KINDS = ("octave_dot", "augmentation_dot")


@dataclass(frozen=True)
class RelationMetrics:
    """Per-relation elliptical semi-axes, in digit-height units."""

    octave: tuple = (0.4, 1.2)
    augmentation: tuple = (1.2, 0.35)
    underline: tuple = (0.6, 1.0)
    dash: tuple = (5.0, 0.4)
    lyric: tuple = (0.5, 2.0)
    tie_endpoint: tuple = (0.6, 1.6)
    cutoff: float = 1.0

    def metric(self, relation: str, digit_height: float) -> EllipticalMetric:
        rx, ry = getattr(self, relation)
        return EllipticalMetric(rx * digit_height, ry * digit_height)


@dataclass
class NoteEvent:
    digit: int
    position: tuple[float, float]
    octave_shift: int = 0
    underline_count: int = 0
    dash_count: int = 0
    augmentation_dots: int = 0
    tie_to_next: bool = False
    slur_group: int | None = None
    lyric: str | None = None
    duration: Fraction | None = None
    pitch: int | None = None

    @property
    def is_rest(self) -> bool:
        return self.digit == 0


@dataclass
class Measure:
    events: list
    length: Fraction
    barline_x: float | None = None


@dataclass
class ScoreGraph:
    systems: list  # list of lists of Measure
    key_root: int = 0
    beats_per_measure: Fraction = Fraction(4)
    metadata: dict = field(default_factory=dict)

    def all_events(self):
        for system in self.systems:
            for measure in system:
                yield from measure.events

    def note_count(self) -> int:
        return sum(1 for _ in self.all_events())


def group_systems(detections: list, digit_height: float,
                  gap_factor: float = 1.5) -> list:
    """Split detections into horizontal systems by digit-row y gaps.

    Digits define the bands; every other detection joins the band with
    the nearest center.
    """
    digits = [d for d in detections if d.kind in ("digit", "rest")]
    others = [d for d in detections if d.kind not in ("digit", "rest")]
    if not digits:
        return []
    ys = sorted(d.center[1] for d in digits)
    bands = [[ys[0], ys[0]]]
    for y in ys[1:]:
        if y - bands[-1][1] > gap_factor * digit_height:
            bands.append([y, y])
        else:
            bands[-1][1] = y
    centers = [(lo + hi) / 2.0 for lo, hi in bands]
    systems = [[] for _ in bands]
    for d in digits + others:
        i = int(np.argmin([abs(d.center[1] - c) for c in centers]))
        systems[i].append(d)
    for s in systems:
        s.sort(key=lambda d: (d.center[0], d.center[1]))
    return systems


def _greedy_bind(candidates):
    """candidates: (distance, digit_idx, relation, symbol_idx); each symbol
    binds at most once, smallest distance first."""
    candidates.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
    taken = set()
    bound = []
    for dist, di, rel, si in candidates:
        if si in taken:
            continue
        taken.add(si)
        bound.append((dist, di, rel, si))
    return bound, taken


def resolve_note_attributes(system: list, metrics: RelationMetrics,
                            digit_height: float) -> tuple[list, list]:
    """Bind dots/underlines/dashes to digits and tally note attributes.

    Every relation queries the shared structural-symbol index with its
    own metric (unit cutoff); a symbol beyond every cutoff is dropped and
    reported as an orphan. Returns (events, orphan detections).
    """
    digits = sorted((d for d in system if d.kind in ("digit", "rest")),
                    key=lambda d: (d.center[0], d.center[1]))
    pool = [d for d in system
            if d.kind in DOT_KINDS + ("underline", "dash")]
    events = [NoteEvent(digit=d.value, position=d.center) for d in digits]
    if not digits or not pool:
        return events, []

    index = SpatialIndex([p.center for p in pool])
    relations = {
        "octave": lambda det, dg: det.kind in DOT_KINDS,
        "augmentation": lambda det, dg: det.kind in DOT_KINDS
        and det.center[0] > dg.center[0],
        "underline": lambda det, dg: det.kind == "underline"
        and det.center[1] > dg.center[1],
        "dash": lambda det, dg: det.kind == "dash"
        and det.center[0] > dg.center[0],
    }
    candidates = []
    for di, dg in enumerate(digits):
        for rel, accept in relations.items():
            m = metrics.metric(rel, digit_height)
            hits = index.range_query(
                dg.center, m, metrics.cutoff,
                filter=lambda si, dg=dg, accept=accept: accept(pool[si], dg),
            )
            candidates.extend((dist, di, rel, si) for si, dist in hits)
    bound, taken = _greedy_bind(candidates)

    for dist, di, rel, si in bound:
        ev = events[di]
        sym = pool[si]
        if rel == "octave":
            ev.octave_shift += 1 if sym.center[1] < digits[di].center[1] else -1
        elif rel == "augmentation":
            ev.augmentation_dots += 1
        elif rel == "underline":
            ev.underline_count += 1
        elif rel == "dash":
            ev.dash_count += 1
    for ev in events:
        ev.augmentation_dots = min(ev.augmentation_dots, 1)
        ev.underline_count = min(ev.underline_count, 3)
        if ev.underline_count and ev.dash_count:
            log.warning("note at %s has both underlines and dashes; keeping underlines",
                        ev.position)
            ev.dash_count = 0
    orphans = [pool[si] for si in range(len(pool)) if si not in taken]
    for o in orphans:
        log.warning("orphan structural symbol %s at %s dropped", o.kind, o.center)
    return events, orphans


def compute_duration(event: NoteEvent) -> Fraction:
    """Base 1 beat, halved per underline, extended 1 beat per dash,
    1.5x with an augmentation dot. Exact rational arithmetic."""
    base = Fraction(1, 2 ** event.underline_count) + event.dash_count
    if event.augmentation_dots:
        base *= Fraction(3, 2)
    return base


def compute_pitch(event: NoteEvent, key_root: int = 0, base_octave: int = 4) -> int:
    """MIDI number of a scale degree: movable-do major scale over the
    configured tonic pitch class and base octave."""
    if event.digit == 0:
        raise ValueError("rests have no pitch")
    if not 1 <= event.digit <= 7:
        raise ValueError(f"digit out of range: {event.digit}")
    degree = MAJOR_SCALE_OFFSETS[event.digit - 1]
    return degree + 12 * (base_octave + 1 + event.octave_shift) + key_root


def resolve_pitches_durations(events: list, key_root: int = 0,
                              base_octave: int = 4) -> None:
    for ev in events:
        ev.duration = compute_duration(ev)
        ev.pitch = None if ev.is_rest else compute_pitch(ev, key_root, base_octave)


def bind_ties_slurs(events: list, arcs: list, metrics: RelationMetrics,
                    digit_height: float,
                    slur_ids=None) -> list:
    """Attach arcs to the notes under their endpoints.

    Equal pitch on adjacent notes makes a tie (flag on the left note);
    anything else becomes a shared slur group. Arcs with an unresolvable
    endpoint are dropped with a log line.
    """
    if not events:
        return events
    if slur_ids is None:
        slur_ids = itertools.count(1)
    positions = [ev.position for ev in events]
    index = SpatialIndex(positions)
    metric = metrics.metric("tie_endpoint", digit_height)
    order = {id(ev): i for i, ev in enumerate(events)}
    for arc in sorted(arcs, key=lambda a: (a.center[0], a.center[1])):
        left_ep = (arc.box.x0, arc.box.y1)
        right_ep = (arc.box.x1, arc.box.y1)
        try:
            li, ld = index.nearest(left_ep, metric)
            ri, rd = index.nearest(right_ep, metric)
        except LookupError:
            continue
        if ld > metrics.cutoff or rd > metrics.cutoff or li == ri:
            log.warning("arc at %s has no bindable endpoints; dropped", arc.center)
            continue
        if li > ri:
            li, ri = ri, li
        left, right = events[li], events[ri]
        adjacent = ri == li + 1
        if (adjacent and left.pitch is not None and left.pitch == right.pitch):
            left.tie_to_next = True
        else:
            gid = next(slur_ids)
            left.slur_group = gid
            right.slur_group = gid
    return events


def align_lyrics(events: list, characters: list, metrics: RelationMetrics,
                 digit_height: float,
                 row_gap_factor: float = 0.8) -> tuple[list, list]:
    """Bind recognized characters to the notes above them.

    `characters` is a list of (char, (x, y)) pairs. One character per
    note per verse row; the first verse fills event.lyric; leftovers are
    returned. Rests never take lyrics.
    """
    singable = [ev for ev in events if not ev.is_rest]
    if not singable or not characters:
        return events, list(characters)
    rows = []
    for ch in sorted(characters, key=lambda c: (c[1][1], c[1][0])):
        if rows and ch[1][1] - rows[-1][-1][1][1] <= row_gap_factor * digit_height:
            rows[-1].append(ch)
        else:
            rows.append([ch])
    index = SpatialIndex([ev.position for ev in singable])
    metric = metrics.metric("lyric", digit_height)
    leftovers = []
    for verse, row in enumerate(rows):
        cands = []
        for ci, (char, center) in enumerate(row):
            hits = index.range_query(center, metric, metrics.cutoff)
            cands.extend((dist, ci, ei) for ei, dist in hits)
        cands.sort()
        used_chars, used_events = set(), set()
        for dist, ci, ei in cands:
            if ci in used_chars or ei in used_events:
                continue
            used_chars.add(ci)
            used_events.add(ei)
            if verse == 0:
                singable[ei].lyric = row[ci][0]
        leftovers.extend(row[ci] for ci in range(len(row)) if ci not in used_chars)
        if verse > 0:
            leftovers.extend(row[ci] for ci in used_chars)
    if leftovers:
        log.info("%d lyric characters left unbound", len(leftovers))
    return events, leftovers


def assemble_measures(events: list, barline_xs: list) -> list:
    """Partition x-ordered events at barline positions; measure length is
    the exact rational sum of its event durations."""
    events = sorted(events, key=lambda e: e.position[0])
    cuts = sorted(barline_xs)
    measures = []
    current = []
    ci = 0
    for ev in events:
        while ci < len(cuts) and ev.position[0] > cuts[ci]:
            measures.append(Measure(events=current,
                                    length=sum((e.duration for e in current), Fraction(0)),
                                    barline_x=cuts[ci]))
            current = []
            ci += 1
        current.append(ev)
    while ci < len(cuts):
        measures.append(Measure(events=current,
                                length=sum((e.duration for e in current), Fraction(0)),
                                barline_x=cuts[ci]))
        current = []
        ci += 1
    if current:
        measures.append(Measure(events=current,
                                length=sum((e.duration for e in current), Fraction(0)),
                                barline_x=None))
    return [m for m in measures if m.events]


def build_score(detections: list, digit_height: float,
                metrics: RelationMetrics | None = None,
                key_root: int = 0, base_octave: int = 4,
                beats_per_measure: Fraction = Fraction(4),
                lyric_chars: list | None = None,
                metadata: dict | None = None) -> ScoreGraph:
    """Full semantic assembly for one page worth of detections."""
    metrics = metrics or RelationMetrics()
    systems_out = []
    slur_ids = itertools.count(1)
    systems = group_systems(detections, digit_height)
    row_ys = [float(np.median([d.center[1] for d in s if d.kind in ("digit", "rest")]))
              for s in systems]
    char_bins = [[] for _ in systems]
    for c in lyric_chars or []:
        if row_ys:
            i = int(np.argmin([abs(c[1][1] - ry) for ry in row_ys]))
            char_bins[i].append(c)
    for si, system in enumerate(systems):
        events, _ = resolve_note_attributes(system, metrics, digit_height)
        resolve_pitches_durations(events, key_root, base_octave)
        arcs = [d for d in system if d.kind == "tie_slur"]
        bind_ties_slurs(events, arcs, metrics, digit_height, slur_ids=slur_ids)
        if char_bins[si]:
            align_lyrics(events, char_bins[si], metrics, digit_height)
        barlines = [d.center[0] for d in system if d.kind == "barline"]
        systems_out.append(assemble_measures(events, barlines))
    return ScoreGraph(systems=systems_out, key_root=key_root,
                      beats_per_measure=beats_per_measure,
                      metadata=metadata or {})
