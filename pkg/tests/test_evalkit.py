from fractions import Fraction

import numpy as np
import pytest

from jianpu_scribe.evalkit import (
    MatchOutcome,
    accuracy,
    accuracy_counts,
    f1,
    joint_f1,
    match_detections,
    measure_length_accuracy,
)


def test_f1_published_fixtures():
    # note-level and lyric rows
    assert round(f1(222, 12, 11), 3) == 0.951
    assert round(f1(316, 39, 8), 3) == 0.931
    assert round(f1(233, 0, 0), 3) == 1.000
    # OCR toolkit comparison rows
    assert round(f1(535, 15, 6), 3) == 0.981
    assert round(f1(543, 6, 3), 3) == 0.992
    assert round(f1(296, 255, 214), 3) == 0.558
    assert round(f1(533, 15, 8), 3) == 0.979


def test_f1_edge_cases():
    assert f1(0, 0, 0) == 1.0
    assert f1(0, 1, 1) == 0.0
    with pytest.raises(ValueError):
        f1(-1, 0, 0)


def test_f1_permutation_invariant_inputs():
    rng = np.random.default_rng(0)
    pred = [(float(x), float(y)) for x, y in rng.uniform(0, 100, (20, 2))]
    truth = [(x + 0.5, y - 0.5) for x, y in pred]
    a = match_detections(pred, truth, 5.0)
    shuffled = list(pred)
    rng.shuffle(shuffled)
    b = match_detections(shuffled, truth, 5.0)
    assert (a.tp, a.fn, a.fp) == (b.tp, b.fn, b.fp)


def test_match_identical_lists():
    pts = [(float(i), 0.0) for i in range(10)]
    out = match_detections(pts, pts, 1.0)
    assert (out.tp, out.fn, out.fp) == (10, 0, 0)


def test_match_empty_prediction():
    truth = [(1.0, 1.0), (2.0, 2.0)]
    out = match_detections([], truth, 1.0)
    assert (out.tp, out.fn, out.fp) == (0, 2, 0)


def test_match_swap_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pred = [tuple(p) for p in rng.uniform(0, 50, (int(rng.integers(3, 12)), 2))]
        truth = [tuple(p) for p in rng.uniform(0, 50, (int(rng.integers(3, 12)), 2))]
        a = match_detections(pred, truth, 6.0)
        b = match_detections(truth, pred, 6.0)
        assert a.tp == b.tp and a.fn == b.fp and a.fp == b.fn


def test_match_greedy_ascending_distance():
    pred = [(0.0, 0.0), (3.0, 0.0)]
    truth = [(1.0, 0.0)]
    out = match_detections(pred, truth, 5.0)
    assert out.pairs == [((0.0, 0.0), (1.0, 0.0))]


def test_joint_f1_all_correct_equals_detection():
    pts = [(float(i), 0.0) for i in range(8)]
    out = match_detections(pts, pts, 1.0)
    assert joint_f1(out, lambda p, t: True) == f1(out.tp, out.fn, out.fp)


def test_joint_f1_single_wrong_pair_zero():
    out = MatchOutcome(tp=1, fn=0, fp=0, pairs=[("a", "b")])
    assert joint_f1(out, lambda p, t: p == t) == 0.0


def test_joint_f1_double_count_rule():
    pairs = [(i, i if i not in (2, 5) else -1) for i in range(10)]
    out = MatchOutcome(tp=10, fn=1, fp=0, pairs=pairs)
    # 2 wrong pairs: tp 8, fn 3, fp 2
    assert joint_f1(out, lambda p, t: p == t) == f1(8, 3, 2)


def test_joint_leq_detection():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(1, 20))
        pairs = [(i, i if rng.random() > 0.3 else -1) for i in range(n)]
        out = MatchOutcome(tp=n, fn=int(rng.integers(0, 5)),
                           fp=int(rng.integers(0, 5)), pairs=pairs)
        assert joint_f1(out, lambda p, t: p == t) <= f1(out.tp, out.fn, out.fp) + 1e-12


def test_accuracy_fixtures():
    assert round(accuracy_counts(45, 8), 3) == 0.849
    assert accuracy_counts(233, 0) == 1.0
    assert round(accuracy_counts(222, 11), 3) == 0.953
    pairs = [(1, 1), (2, 2), (3, 4)]
    assert accuracy(pairs, lambda p, t: p == t) == pytest.approx(2 / 3)


def test_measure_length_accuracy():
    pred = [[Fraction(4), Fraction(4), Fraction(3)], [Fraction(2)]]
    truth = [[Fraction(4), Fraction(4), Fraction(4)], [Fraction(2)]]
    assert measure_length_accuracy(pred, truth) == pytest.approx(3 / 4)


def test_measure_alignment_resyncs_per_system():
    # a dropped measure misaligns only the rest of its own system
    pred = [[Fraction(4), Fraction(3)], [Fraction(2), Fraction(2)]]
    truth = [[Fraction(4), Fraction(4), Fraction(3)], [Fraction(2), Fraction(2)]]
    # system 1: pairs (4,4) ok, (3,4) wrong, third unmatched; system 2 intact
    assert measure_length_accuracy(pred, truth) == pytest.approx(3 / 5)


def test_measure_accuracy_empty():
    assert measure_length_accuracy([], []) == 1.0
