"""Evaluation metrics: detection F1, joint F1 with the double-count rule,
content accuracies, and measure-length accuracy.

Joint F1 charges a matched-but-misrecognized symbol twice: once as a
false negative (the truth went unrecognized) and once as a false
positive (a spurious prediction was made).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class MatchOutcome:
    tp: int
    fn: int
    fp: int
    pairs: list  # (prediction, truth) matched pairs

    def __post_init__(self):
        if self.tp != len(self.pairs):
            raise ValueError("tp must equal the number of matched pairs")
        if min(self.tp, self.fn, self.fp) < 0:
            raise ValueError("counts must be nonnegative")


def match_detections(pred: list, truth: list, max_dist: float,
                     center=lambda item: item) -> MatchOutcome:
    """Greedy nearest-pair matching under Euclidean distance <= max_dist.

    Pairs form in ascending distance order; each element is used once.
    `center` extracts an (x, y) from a list item.
    """
    if not pred or not truth:
        return MatchOutcome(tp=0, fn=len(truth), fp=len(pred), pairs=[])
    pc = np.array([center(p) for p in pred], dtype=np.float64)
    tc = np.array([center(t) for t in truth], dtype=np.float64)
    d = np.sqrt(((pc[:, None, :] - tc[None, :, :]) ** 2).sum(axis=2))
    pi, ti = np.nonzero(d <= max_dist)
    order = np.lexsort((ti, pi, d[pi, ti]))
    used_p, used_t = set(), set()
    pairs = []
    for k in order:
        i, j = int(pi[k]), int(ti[k])
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        pairs.append((pred[i], truth[j]))
    return MatchOutcome(tp=len(pairs), fn=len(truth) - len(pairs),
                        fp=len(pred) - len(pairs), pairs=pairs)


def f1(tp: int, fn: int, fp: int) -> float:
    """2 TP / (2 TP + FN + FP); empty vs empty is defined as 1.0."""
    if min(tp, fn, fp) < 0:
        raise ValueError("counts must be nonnegative")
    denom = 2 * tp + fn + fp
    return 1.0 if denom == 0 else 2.0 * tp / denom


def joint_f1(outcome: MatchOutcome, content_equal) -> float:
    """Detection-plus-content F1: each wrong matched pair moves from TP
    to one extra FN and one extra FP."""
    wrong = sum(0 if content_equal(p, t) else 1 for p, t in outcome.pairs)
    return f1(outcome.tp - wrong, outcome.fn + wrong, outcome.fp + wrong)


def accuracy(pairs: list, predicate) -> float:
    """Fraction of aligned pairs satisfying the predicate."""
    if not pairs:
        return 1.0
    return sum(1 for p, t in pairs if predicate(p, t)) / len(pairs)


def accuracy_counts(true_count: int, false_count: int) -> float:
    total = true_count + false_count
    return 1.0 if total == 0 else true_count / total


def measure_length_accuracy(pred_systems: list, truth_systems: list) -> float:
    """Fraction of truth measures whose rational length is matched exactly.

    Measures align sequentially within order-paired systems, so an
    inserted or deleted barline misaligns only the rest of its system.
    """
    total = sum(len(s) for s in truth_systems)
    if total == 0:
        return 1.0
    correct = 0
    for ps, ts in zip(pred_systems, truth_systems):
        for pl, tl in zip(ps, ts):
            if Fraction(pl) == Fraction(tl):
                correct += 1
    return correct / total


@dataclass
class EvalReport:
    detection_f1: float = 1.0
    joint_f1: float = 1.0
    pitch_acc: float = 1.0
    duration_acc: float = 1.0
    measure_len_acc: float = 1.0
    lyric_detection_f1: float | None = None
    lyric_joint_f1: float | None = None
    counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {
            "detection_f1": round(self.detection_f1, 6),
            "joint_f1": round(self.joint_f1, 6),
            "pitch_acc": round(self.pitch_acc, 6),
            "duration_acc": round(self.duration_acc, 6),
            "measure_len_acc": round(self.measure_len_acc, 6),
            "counts": self.counts,
        }
        if self.lyric_detection_f1 is not None:
            d["lyric_detection_f1"] = round(self.lyric_detection_f1, 6)
        if self.lyric_joint_f1 is not None:
            d["lyric_joint_f1"] = round(self.lyric_joint_f1, 6)
        return d

    def format_table(self) -> str:
        rows = [
            ("note detection F1", self.detection_f1),
            ("note joint F1", self.joint_f1),
            ("pitch accuracy", self.pitch_acc),
            ("duration accuracy", self.duration_acc),
            ("measure length accuracy", self.measure_len_acc),
        ]
        if self.lyric_detection_f1 is not None:
            rows.append(("lyric detection F1", self.lyric_detection_f1))
        if self.lyric_joint_f1 is not None:
            rows.append(("lyric joint F1", self.lyric_joint_f1))
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)}  {value:0.3f}" for name, value in rows]
        return "\n".join(lines)


def evaluate_scores(pred, truth, match_radius: float) -> EvalReport:
    """Compare two ScoreGraphs event by event.

    Events match by center distance within `match_radius` (the caller
    supplies 0.75x the digit height). Content for the joint score is
    (kind, pitch, duration).
    """
    pred_events = list(pred.all_events())
    truth_events = list(truth.all_events())
    outcome = match_detections(pred_events, truth_events, match_radius,
                               center=lambda e: e.position)

    def same_content(p, t):
        return p.is_rest == t.is_rest and p.pitch == t.pitch and p.duration == t.duration

    pitched = [(p, t) for p, t in outcome.pairs if not t.is_rest]
    report = EvalReport(
        detection_f1=f1(outcome.tp, outcome.fn, outcome.fp),
        joint_f1=joint_f1(outcome, same_content),
        pitch_acc=accuracy(pitched, lambda p, t: p.pitch == t.pitch),
        duration_acc=accuracy(outcome.pairs, lambda p, t: p.duration == t.duration),
        measure_len_acc=measure_length_accuracy(
            [[m.length for m in s] for s in pred.systems],
            [[m.length for m in s] for s in truth.systems],
        ),
        counts={
            "notes": {"tp": outcome.tp, "fn": outcome.fn, "fp": outcome.fp},
            "pitch": {
                "true": sum(1 for p, t in pitched if p.pitch == t.pitch),
                "false": sum(1 for p, t in pitched if p.pitch != t.pitch),
            },
            "duration": {
                "true": sum(1 for p, t in outcome.pairs if p.duration == t.duration),
                "false": sum(1 for p, t in outcome.pairs if p.duration != t.duration),
            },
        },
    )
    return report


def evaluate_lyrics(pred_chars: list, truth_chars: list, max_dist: float):
    """Character detection and joint F1. Items are (char, (x, y)) pairs."""
    outcome = match_detections(pred_chars, truth_chars, max_dist,
                               center=lambda c: c[1])
    det = f1(outcome.tp, outcome.fn, outcome.fp)
    joint = joint_f1(outcome, lambda p, t: p[0] == t[0])
    return det, joint, outcome
