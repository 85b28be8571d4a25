from fractions import Fraction

import numpy as np
import pytest

from jianpu_scribe.imaging import BoundingBox
from jianpu_scribe.semantics import (
    NoteEvent,
    RelationMetrics,
    assemble_measures,
    align_lyrics,
    bind_ties_slurs,
    build_score,
    compute_duration,
    compute_pitch,
    group_systems,
    resolve_note_attributes,
    resolve_pitches_durations,
)
from jianpu_scribe.symboldetect import SymbolDetection


DH = 24.0  # digit height used by these fixtures


def det(kind, cx, cy, w=12, h=24, value=None):
    box = BoundingBox(int(cx - w / 2), int(cy - h / 2), int(cx + w / 2), int(cy + h / 2))
    return SymbolDetection(kind, box, 1.0, (cx, cy), value)


def digit(cx, cy, value=5):
    return det("digit", cx, cy, value=value)


def dot(cx, cy, provisional="octave_dot"):
    return det(provisional, cx, cy, w=5, h=5)


# --- system grouping ---------------------------------------------------------

def test_group_systems_two_rows():
    dets = [digit(50 + 40 * i, 100) for i in range(4)]
    dets += [digit(50 + 40 * i, 260) for i in range(4)]
    dets.append(det("underline", 70, 116, w=14, h=3))
    systems = group_systems(dets, DH)
    assert len(systems) == 2
    assert sum(1 for d in systems[0] if d.kind == "underline") == 1


def test_group_systems_single_row_partition():
    dets = [digit(40 + 30 * i, 80, value=1 + i % 7) for i in range(6)]
    systems = group_systems(dets, DH)
    assert len(systems) == 1
    assert len(systems[0]) == 6
    flat = [d for s in systems for d in s if d.kind in ("digit", "rest")]
    assert len(flat) == 6  # every digit in exactly one system


# --- attribute binding -------------------------------------------------------

def test_fig6_dot_binds_octave_not_augmentation():
    d = digit(100, 100)
    below = dot(100, 100 + 6)  # octave dot below
    right = dot(100 + 8, 100, provisional="augmentation_dot")
    events, orphans = resolve_note_attributes(
        [d, below, right], RelationMetrics(octave=(4 / DH, 8 / DH),
                                           augmentation=(12 / DH, 4 / DH)), DH)
    assert not orphans
    assert events[0].octave_shift == -1
    assert events[0].augmentation_dots == 1


@pytest.mark.parametrize("ratio", [2.0, 3.0, 4.0, 6.0])
def test_fig6_binding_invariant_over_metric_ratio(ratio):
    d = digit(100, 100)
    below = dot(100, 106)
    right = dot(108, 100, provisional="augmentation_dot")
    metrics = RelationMetrics(octave=(4 / DH, 4 * ratio / DH),
                              augmentation=(4 * ratio / DH, 4 / DH))
    events, orphans = resolve_note_attributes([d, below, right], metrics, DH)
    assert events[0].octave_shift == -1
    assert events[0].augmentation_dots == 1
    assert not orphans


def test_two_underlines_counted():
    d = digit(100, 100)
    u1 = det("underline", 100, 116, w=14, h=3)
    u2 = det("underline", 100, 121, w=14, h=3)
    events, _ = resolve_note_attributes([d, u1, u2], RelationMetrics(), DH)
    assert events[0].underline_count == 2


def test_no_structural_symbols_defaults():
    events, orphans = resolve_note_attributes([digit(50, 50)], RelationMetrics(), DH)
    assert events[0].octave_shift == 0
    assert events[0].underline_count == 0
    assert events[0].dash_count == 0
    assert orphans == []


def test_orphan_symbol_dropped():
    d = digit(100, 100)
    far = dot(300, 300)
    events, orphans = resolve_note_attributes([d, far], RelationMetrics(), DH)
    assert len(orphans) == 1
    assert events[0].octave_shift == 0


def test_binding_is_a_partition():
    rng = np.random.default_rng(0)
    dets = [digit(60 + 50 * i, 100, value=1 + i % 7) for i in range(5)]
    pool = []
    for i in range(5):
        pool.append(dot(60 + 50 * i, 112))
        pool.append(det("underline", 60 + 50 * i, 118, w=14, h=3))
    events, orphans = resolve_note_attributes(dets + pool, RelationMetrics(), DH)
    bound = sum(abs(e.octave_shift) + e.underline_count + e.dash_count
                + e.augmentation_dots for e in events)
    assert bound + len(orphans) == len(pool)


def test_translation_invariance():
    def make(offset):
        dx, dy = offset
        dets = [digit(100 + dx, 100 + dy, value=3), dot(100 + dx, 112 + dy),
                det("underline", 100 + dx, 118 + dy, w=14, h=3)]
        events, _ = resolve_note_attributes(dets, RelationMetrics(), DH)
        return events[0]

    a = make((0, 0))
    b = make((500, 300))
    assert (a.octave_shift, a.underline_count) == (b.octave_shift, b.underline_count)


# --- durations and pitches ---------------------------------------------------

def jianpu_duration_oracle(u, dashes, aug):
    """Rule-table oracle: base quarter note, halved per underline,
    one extra beat per dash, half again with the dot."""
    d = Fraction(1, 2 ** u) + dashes
    return d * Fraction(3, 2) if aug else d


@pytest.mark.parametrize("u,dashes,aug", [
    (0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0),
    (0, 1, 0), (0, 2, 0), (0, 3, 0), (0, 0, 1), (1, 0, 1),
])
def test_duration_rule_table(u, dashes, aug):
    ev = NoteEvent(digit=2, position=(0, 0), underline_count=u,
                   dash_count=dashes, augmentation_dots=aug)
    assert compute_duration(ev) == jianpu_duration_oracle(u, dashes, aug)


def test_duration_specific_values():
    assert compute_duration(NoteEvent(1, (0, 0))) == Fraction(1)
    assert compute_duration(NoteEvent(1, (0, 0), underline_count=1)) == Fraction(1, 2)
    assert compute_duration(NoteEvent(1, (0, 0), underline_count=2)) == Fraction(1, 4)
    assert compute_duration(NoteEvent(1, (0, 0), dash_count=1)) == Fraction(2)
    assert compute_duration(NoteEvent(1, (0, 0), augmentation_dots=1)) == Fraction(3, 2)


def test_duration_denominators_are_dyadic_times_three():
    for u in range(4):
        for dashes in range(4):
            for aug in (0, 1):
                d = compute_duration(NoteEvent(1, (0, 0), underline_count=u,
                                               dash_count=dashes,
                                               augmentation_dots=aug))
                den = d.denominator
                while den % 2 == 0:
                    den //= 2
                assert den in (1, 3) or den == 1


def movable_do_oracle(digit, shift, key_root=0, base_octave=4):
    table = {1: 0, 2: 2, 3: 4, 4: 5, 5: 7, 6: 9, 7: 11}
    return table[digit] + 12 * (base_octave + 1 + shift) + key_root


def test_pitch_fixtures():
    assert compute_pitch(NoteEvent(1, (0, 0))) == 60
    assert compute_pitch(NoteEvent(5, (0, 0), octave_shift=1)) == 79
    for d in range(1, 8):
        for shift in (-1, 0, 2):
            ev = NoteEvent(d, (0, 0), octave_shift=shift)
            assert compute_pitch(ev, 2, 4) == movable_do_oracle(d, shift, 2)


def test_pitch_rest_error():
    with pytest.raises(ValueError):
        compute_pitch(NoteEvent(0, (0, 0)))


# --- ties/slurs ---------------------------------------------------------------

def tie_fixture(values, arc_span=(0, 1)):
    events = [NoteEvent(v, (100 + 60 * i, 100.0)) for i, v in enumerate(values)]
    resolve_pitches_durations(events)
    a, b = arc_span
    x0 = int(events[a].position[0])
    x1 = int(events[b].position[0])
    arc = SymbolDetection("tie_slur", BoundingBox(x0, 70, x1, 85), 1.0,
                          ((x0 + x1) / 2, 77.5))
    return events, [arc]


def test_tie_on_equal_pitch():
    events, arcs = tie_fixture([3, 3])
    bind_ties_slurs(events, arcs, RelationMetrics(), DH)
    assert events[0].tie_to_next
    assert events[0].slur_group is None


def test_slur_on_unequal_pitch():
    events, arcs = tie_fixture([1, 3])
    bind_ties_slurs(events, arcs, RelationMetrics(), DH)
    assert not events[0].tie_to_next
    assert events[0].slur_group == events[1].slur_group is not None


def test_no_arcs_no_bindings():
    events, _ = tie_fixture([2, 4])
    bind_ties_slurs(events, [], RelationMetrics(), DH)
    assert not events[0].tie_to_next and events[0].slur_group is None


def test_unbindable_arc_dropped():
    events, arcs = tie_fixture([3, 3])
    far = SymbolDetection("tie_slur", BoundingBox(900, 900, 1000, 920), 1.0, (950, 910))
    bind_ties_slurs(events, [far], RelationMetrics(), DH)
    assert not events[0].tie_to_next


# --- lyric alignment ---------------------------------------------------------

def test_lyrics_one_to_one():
    events = [NoteEvent(1 + i, (100 + 50 * i, 100.0)) for i in range(4)]
    resolve_pitches_durations(events)
    chars = [(c, (100 + 50 * i, 138.0)) for i, c in enumerate("水调歌头")]
    _, leftovers = align_lyrics(events, chars, RelationMetrics(), DH)
    assert [e.lyric for e in events] == list("水调歌头")
    assert leftovers == []


def test_lyric_binds_nearer_x():
    # char between two notes, both within the unit cutoff of the
    # vertical-tolerant metric; the smaller x offset wins
    events = [NoteEvent(1, (100, 100.0)), NoteEvent(2, (118, 100.0))]
    resolve_pitches_durations(events)
    chars = [("只", (108, 124.0))]
    m = RelationMetrics()
    from jianpu_scribe.anisoindex import elliptical_distance

    metric = m.metric("lyric", DH)
    d_left = elliptical_distance((108, 124), (100, 100), metric)
    d_right = elliptical_distance((108, 124), (118, 100), metric)
    assert d_left < d_right <= 1.0  # competition is real
    align_lyrics(events, chars, m, DH)
    assert events[0].lyric == "只"
    assert events[1].lyric is None


def test_lyrics_empty_noop():
    events = [NoteEvent(5, (10, 10.0))]
    resolve_pitches_durations(events)
    _, leftovers = align_lyrics(events, [], RelationMetrics(), DH)
    assert leftovers == [] and events[0].lyric is None


def test_rests_take_no_lyrics():
    events = [NoteEvent(0, (100, 100.0)), NoteEvent(3, (150, 100.0))]
    resolve_pitches_durations(events)
    chars = [("歌", (100, 138.0)), ("声", (150, 138.0))]
    _, leftovers = align_lyrics(events, chars, RelationMetrics(), DH)
    assert events[0].lyric is None
    assert events[1].lyric == "声"
    assert len(leftovers) == 1


# --- measures ----------------------------------------------------------------

def test_assemble_measures_split():
    # notes at x = 50, 90, 130, 170; barline after the first two
    events = [NoteEvent(1 + i, (50 + 40 * i, 100.0)) for i in range(4)]
    resolve_pitches_durations(events)
    measures = assemble_measures(events, [110.0])
    assert len(measures) == 2
    assert measures[0].length == Fraction(2)
    assert measures[1].length == Fraction(2)
    assert measures[0].barline_x == 110.0


def test_assemble_measures_no_barlines():
    events = [NoteEvent(1, (50, 100.0)), NoteEvent(2, (90, 100.0))]
    resolve_pitches_durations(events)
    measures = assemble_measures(events, [])
    assert len(measures) == 1
    assert measures[0].length == Fraction(2)


def test_measure_lengths_conserve_total():
    rng = np.random.default_rng(1)
    events = [NoteEvent(1 + int(rng.integers(0, 7)), (20 + 30 * i, 50.0),
                        underline_count=int(rng.integers(0, 3)))
              for i in range(12)]
    resolve_pitches_durations(events)
    cuts = [110.0, 230.0]
    measures = assemble_measures(events, cuts)
    assert sum((m.length for m in measures), Fraction(0)) == \
        sum((e.duration for e in events), Fraction(0))


def test_build_score_full_assembly():
    dets = []
    for i in range(4):
        dets.append(digit(60 + 50 * i, 100, value=2 + i))
    dets.append(det("barline", 160, 100, w=3, h=34))
    score = build_score(dets, DH)
    assert len(score.systems) == 1
    assert len(score.systems[0]) == 2
    events = list(score.all_events())
    assert [e.pitch for e in events] == [62, 64, 65, 67]
