"""Score emission: MusicXML (partwise subset), format-0 MIDI, and a
lossless JSON form of the score graph.

Durations are exact rationals; with the default 480 divisions every
duration used by the notation rules maps to an integer tick count, so
MIDI timing carries no rounding drift.
"""

from __future__ import annotations

import struct
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from fractions import Fraction

from .semantics import Measure, NoteEvent, ScoreGraph

SCORE_JSON_VERSION = 1

STEP_ALTER = [
    ("C", 0), ("C", 1), ("D", 0), ("D", 1), ("E", 0), ("F", 0),
    ("F", 1), ("G", 0), ("G", 1), ("A", 0), ("A", 1), ("B", 0),
]


class ExportError(ValueError):
    """Score cannot be serialized (unresolved event, bad schema, ...)."""


@dataclass(frozen=True)
class ExportOptions:
    divisions: int = 480
    tempo_bpm: float = 100.0
    part_name: str = "Jianpu melody"
    lyrics_in_midi: bool = False

    def __post_init__(self):
        if self.divisions < 1:
            raise ValueError("divisions must be >= 1")
        if self.tempo_bpm <= 0:
            raise ValueError("tempo must be positive")


def _ticks(duration: Fraction, divisions: int, position) -> int:
    t = duration * divisions
    if t.denominator != 1:
        raise ExportError(
            f"event at {position}: duration {duration} does not divide into "
            f"{divisions} divisions"
        )
    return int(t)


def _check_resolved(ev: NoteEvent) -> None:
    if ev.duration is None or ev.duration <= 0:
        raise ExportError(f"event at {ev.position}: unresolved duration")
    if not ev.is_rest and ev.pitch is None:
        raise ExportError(f"event at {ev.position}: unresolved pitch")


def to_musicxml(score: ScoreGraph, opts: ExportOptions | None = None) -> str:
    """Serialize to a score-partwise document (single part)."""
    opts = opts or ExportOptions()
    root = ET.Element("score-partwise", version="3.1")
    part_list = ET.SubElement(root, "part-list")
    sp = ET.SubElement(part_list, "score-part", id="P1")
    ET.SubElement(sp, "part-name").text = opts.part_name
    part = ET.SubElement(root, "part", id="P1")

    events = list(score.all_events())
    tie_stop = {}  # id(event) -> True when the previous event tied into it
    flat = events
    for i, ev in enumerate(flat[:-1]):
        if ev.tie_to_next:
            tie_stop[id(flat[i + 1])] = True

    open_slurs = {}
    number = 0
    for system in score.systems:
        for measure in system:
            number += 1
            m = ET.SubElement(part, "measure", number=str(number))
            if number == 1:
                attrs = ET.SubElement(m, "attributes")
                ET.SubElement(attrs, "divisions").text = str(opts.divisions)
            for ev in measure.events:
                _check_resolved(ev)
                note = ET.SubElement(m, "note")
                if ev.is_rest:
                    ET.SubElement(note, "rest")
                else:
                    pitch = ET.SubElement(note, "pitch")
                    step, alter = STEP_ALTER[ev.pitch % 12]
                    ET.SubElement(pitch, "step").text = step
                    if alter:
                        ET.SubElement(pitch, "alter").text = str(alter)
                    ET.SubElement(pitch, "octave").text = str(ev.pitch // 12 - 1)
                ET.SubElement(note, "duration").text = str(
                    _ticks(ev.duration, opts.divisions, ev.position))
                if tie_stop.get(id(ev)):
                    ET.SubElement(note, "tie", type="stop")
                if ev.tie_to_next:
                    ET.SubElement(note, "tie", type="start")
                notations = None
                if ev.slur_group is not None:
                    notations = ET.SubElement(note, "notations")
                    if ev.slur_group not in open_slurs:
                        open_slurs[ev.slur_group] = True
                        ET.SubElement(notations, "slur", type="start", number="1")
                    else:
                        del open_slurs[ev.slur_group]
                        ET.SubElement(notations, "slur", type="stop", number="1")
                if ev.lyric:
                    lyr = ET.SubElement(note, "lyric")
                    ET.SubElement(lyr, "text").text = ev.lyric
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


def validate_musicxml(xml_text: str) -> list:
    """Structural validation of the partwise subset; returns issue strings."""
    issues = []
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        return [f"parse error: {exc}"]
    if root.tag != "score-partwise":
        issues.append(f"root is {root.tag!r}, expected score-partwise")
        return issues
    part_list = root.find("part-list")
    if part_list is None:
        issues.append("missing part-list")
    else:
        ids = [sp.get("id") for sp in part_list.findall("score-part")]
        for part in root.findall("part"):
            if part.get("id") not in ids:
                issues.append(f"part {part.get('id')!r} not declared in part-list")
    for part in root.findall("part"):
        measures = part.findall("measure")
        if measures:
            first_attrs = measures[0].find("attributes/divisions")
            if first_attrs is None or not (first_attrs.text or "").isdigit():
                issues.append("first measure lacks attributes/divisions")
        for m in measures:
            if m.get("number") is None:
                issues.append("measure without number attribute")
            for note in m.findall("note"):
                has_pitch = note.find("pitch") is not None
                has_rest = note.find("rest") is not None
                if has_pitch == has_rest:
                    issues.append("note needs exactly one of pitch or rest")
                if has_pitch:
                    p = note.find("pitch")
                    if p.find("step") is None or p.find("octave") is None:
                        issues.append("pitch needs step and octave")
                dur = note.find("duration")
                if dur is None or not (dur.text or "").isdigit():
                    issues.append("note lacks integer duration")
                for tie in note.findall("tie"):
                    if tie.get("type") not in ("start", "stop"):
                        issues.append(f"bad tie type {tie.get('type')!r}")
                for slur in note.findall("notations/slur"):
                    if slur.get("type") not in ("start", "stop"):
                        issues.append(f"bad slur type {slur.get('type')!r}")
    return issues


def _varlen(value: int) -> bytes:
    """MIDI variable-length quantity."""
    if value < 0:
        raise ValueError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def to_midi(score: ScoreGraph, opts: ExportOptions | None = None) -> bytes:
    """Format-0 standard MIDI file: tempo at tick 0, one channel,
    tied notes merged into single sustained notes, rests as gaps."""
    opts = opts or ExportOptions()
    events = []
    for ev in score.all_events():
        _check_resolved(ev)
        events.append(ev)

    timeline = []  # (tick, order, bytes) meta/channel events
    tempo = int(round(60_000_000 / opts.tempo_bpm))
    timeline.append((0, 0, bytes((0xFF, 0x51, 0x03)) + tempo.to_bytes(3, "big")))

    tick = 0
    i = 0
    while i < len(events):
        ev = events[i]
        dur = _ticks(ev.duration, opts.divisions, ev.position)
        if ev.is_rest:
            tick += dur
            i += 1
            continue
        # merge a run of tie_to_next events with equal pitch
        j = i
        while (j + 1 < len(events) and events[j].tie_to_next
               and not events[j + 1].is_rest
               and events[j + 1].pitch == events[j].pitch):
            j += 1
            dur += _ticks(events[j].duration, opts.divisions, events[j].position)
        if opts.lyrics_in_midi and ev.lyric:
            text = ev.lyric.encode("utf-8")
            timeline.append((tick, 1, bytes((0xFF, 0x05, len(text))) + text))
        timeline.append((tick, 2, bytes((0x90, ev.pitch, 80))))
        timeline.append((tick + dur, 1, bytes((0x80, ev.pitch, 64))))
        tick += dur
        i = j + 1

    timeline.sort(key=lambda t: (t[0], t[1]))
    track = bytearray()
    prev = 0
    for t, _, payload in timeline:
        track += _varlen(t - prev)
        track += payload
        prev = t
    track += _varlen(0) + bytes((0xFF, 0x2F, 0x00))

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, opts.divisions)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


# --- JSON form ---------------------------------------------------------------

def _frac_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def _frac_parse(s: str, path: str) -> Fraction:
    try:
        num, den = s.split("/")
        return Fraction(int(num), int(den))
    except (ValueError, ZeroDivisionError) as exc:
        raise ExportError(f"{path}: bad rational {s!r}") from exc


def _event_dict(ev: NoteEvent) -> dict:
    d = {
        "digit": ev.digit,
        "position": [round(ev.position[0], 2), round(ev.position[1], 2)],
        "octave_shift": ev.octave_shift,
        "underline_count": ev.underline_count,
        "dash_count": ev.dash_count,
        "augmentation_dots": ev.augmentation_dots,
        "tie_to_next": ev.tie_to_next,
        "duration": _frac_str(ev.duration) if ev.duration is not None else None,
        "pitch": ev.pitch,
    }
    if ev.slur_group is not None:
        d["slur_group"] = ev.slur_group
    if ev.lyric is not None:
        d["lyric"] = ev.lyric
    return d


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ExportError(f"{path}: missing required field {key!r}")
    return d[key]


def _event_from_dict(d: dict, path: str) -> NoteEvent:
    dur = _require(d, "duration", path)
    return NoteEvent(
        digit=int(_require(d, "digit", path)),
        position=tuple(float(v) for v in _require(d, "position", path)),
        octave_shift=int(d.get("octave_shift", 0)),
        underline_count=int(d.get("underline_count", 0)),
        dash_count=int(d.get("dash_count", 0)),
        augmentation_dots=int(d.get("augmentation_dots", 0)),
        tie_to_next=bool(d.get("tie_to_next", False)),
        slur_group=d.get("slur_group"),
        lyric=d.get("lyric"),
        duration=_frac_parse(dur, path + ".duration") if dur is not None else None,
        pitch=d.get("pitch"),
    )


def score_to_json(score: ScoreGraph) -> dict:
    return {
        "version": SCORE_JSON_VERSION,
        "key_root": score.key_root,
        "beats_per_measure": _frac_str(score.beats_per_measure),
        "metadata": dict(score.metadata),
        "systems": [
            [
                {
                    "events": [_event_dict(e) for e in m.events],
                    "length": _frac_str(m.length),
                    "barline_x": m.barline_x,
                }
                for m in system
            ]
            for system in score.systems
        ],
    }


def score_from_json(doc: dict) -> ScoreGraph:
    version = _require(doc, "version", "$")
    if version != SCORE_JSON_VERSION:
        raise ExportError(
            f"$.version: incompatible score JSON version {version!r}, "
            f"expected {SCORE_JSON_VERSION}"
        )
    systems = []
    for si, system in enumerate(_require(doc, "systems", "$")):
        measures = []
        for mi, m in enumerate(system):
            path = f"$.systems[{si}][{mi}]"
            events = [
                _event_from_dict(e, f"{path}.events[{k}]")
                for k, e in enumerate(_require(m, "events", path))
            ]
            measures.append(Measure(
                events=events,
                length=_frac_parse(_require(m, "length", path), path + ".length"),
                barline_x=m.get("barline_x"),
            ))
        systems.append(measures)
    return ScoreGraph(
        systems=systems,
        key_root=int(_require(doc, "key_root", "$")),
        beats_per_measure=_frac_parse(
            _require(doc, "beats_per_measure", "$"), "$.beats_per_measure"),
        metadata=dict(doc.get("metadata", {})),
    )
