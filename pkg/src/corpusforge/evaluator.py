"""Frame-level precision/recall of retrieved segments against human labels,
PR sweeps over WER caps, and working-point selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import LengthMismatchError, NoHumanSpeechError, OverlapError

FRAME_RATE = 100
SIL = "<SIL>"


@dataclass(frozen=True)
class LabeledSegment:
    begin_s: float
    end_s: float
    word_times: tuple[tuple[str, float, float], ...] = ()


@dataclass(frozen=True)
class FrameLabeling:
    labels: tuple[str, ...]
    retrieved: tuple[bool, ...]
    frame_rate: int = FRAME_RATE

    @property
    def total_frames(self) -> int:
        return len(self.labels)


def _frame(t: float, rate: int) -> int:
    return int(round(t * rate))


def frame_labels(segments: Iterable, total_frames: int,
                 frame_rate: int = FRAME_RATE) -> FrameLabeling:
    """Label every frame with its word (half-open spans, earlier word wins a
    shared frame) or SIL; frames outside all segments are not retrieved.

    ``segments`` holds LabeledSegment-like objects (begin_s, end_s,
    word_times) or plain (begin_s, end_s, word_times) tuples.
    """
    segs = []
    for s in segments:
        if isinstance(s, tuple):
            s = LabeledSegment(s[0], s[1], tuple(s[2]) if len(s) > 2 else ())
        segs.append(s)
    segs.sort(key=lambda s: (s.begin_s, s.end_s))
    labels = [SIL] * total_frames
    retrieved = [False] * total_frames
    prev_end = None
    for s in segs:
        a, b = _frame(s.begin_s, frame_rate), _frame(s.end_s, frame_rate)
        if prev_end is not None and a < prev_end:
            raise OverlapError(f"segment at {s.begin_s}s overlaps the previous one")
        prev_end = b
        a, b = max(0, a), min(total_frames, b)
        for f in range(a, b):
            retrieved[f] = True
        owned = set()
        for word, wb, we in s.word_times:
            lo = max(a, _frame(wb, frame_rate))
            hi = min(b, _frame(we, frame_rate))
            for f in range(lo, hi):
                if f not in owned:
                    owned.add(f)
                    labels[f] = word
    return FrameLabeling(tuple(labels), tuple(retrieved), frame_rate)


@dataclass(frozen=True)
class FrameCounts:
    correct: int = 0  # retrieved frames agreeing with the human label, silence included
    retrieved: int = 0
    human_speech: int = 0
    correct_speech: int = 0  # the subset of ``correct`` on human speech frames

    def __add__(self, other: "FrameCounts") -> "FrameCounts":
        return FrameCounts(self.correct + other.correct, self.retrieved + other.retrieved,
                           self.human_speech + other.human_speech,
                           self.correct_speech + other.correct_speech)

    def precision(self) -> float:
        return 1.0 if self.retrieved == 0 else self.correct / self.retrieved

    def recall(self) -> float:
        if self.human_speech == 0:
            raise NoHumanSpeechError("human labeling has no speech frames")
        return self.correct_speech / self.human_speech


def frame_counts(pipeline: FrameLabeling, human: FrameLabeling) -> FrameCounts:
    if (pipeline.total_frames != human.total_frames
            or pipeline.frame_rate != human.frame_rate):
        raise LengthMismatchError(
            f"{pipeline.total_frames} frames @ {pipeline.frame_rate} vs "
            f"{human.total_frames} frames @ {human.frame_rate}")
    correct = retrieved = correct_speech = 0
    for lab, ret, ref in zip(pipeline.labels, pipeline.retrieved, human.labels):
        if ret:
            retrieved += 1
            if lab == ref:
                correct += 1
                correct_speech += ref != SIL
    speech = sum(lab != SIL for lab in human.labels)
    return FrameCounts(correct, retrieved, speech, correct_speech)


def precision_recall(pipeline: FrameLabeling, human: FrameLabeling) -> tuple[float, float]:
    """Correct retrieved frames over retrieved frames, and over human speech frames.

    A frame is correct only when its label equals the human label exactly,
    so retrieved silence that the human also marks as silence counts toward
    precision.  Recall only counts correct frames of human speech, which
    keeps it within [0, 1].
    """
    c = frame_counts(pipeline, human)
    return c.precision(), c.recall()


@dataclass(frozen=True)
class PRPoint:
    cap: float
    precision: float
    recall: float
    retained_hours: float
    shortfall: bool = False


@dataclass(frozen=True)
class ScoredSegment:
    """A validated segment with its WER, ready for a cap sweep."""
    doc: str
    begin_s: float
    end_s: float
    wer: float
    word_times: tuple[tuple[str, float, float], ...] = ()


@dataclass(frozen=True)
class HumanDoc:
    total_frames: int
    segments: tuple[LabeledSegment, ...]


def pr_curve(corpus: Sequence[ScoredSegment], human: dict[str, HumanDoc],
             caps: Sequence[float], frame_rate: int = FRAME_RATE) -> list[PRPoint]:
    """One PR point per cap, keeping segments with wer <= cap.

    Counts are summed over documents before dividing.
    """
    caps = list(caps)
    if caps != sorted(caps):
        raise ValueError("caps must be sorted ascending")
    gold = {d: frame_labels(h.segments, h.total_frames, frame_rate) for d, h in human.items()}
    by_doc: dict[str, list[ScoredSegment]] = {d: [] for d in human}
    for s in corpus:
        by_doc.setdefault(s.doc, []).append(s)
    points = []
    for cap in caps:
        total = FrameCounts()
        hours = 0.0
        for d in sorted(by_doc):
            kept = [s for s in by_doc[d] if round(s.wer, 9) <= cap]
            hours += sum(s.end_s - s.begin_s for s in kept) / 3600.0
            if d not in gold:
                continue
            lab = frame_labels([LabeledSegment(s.begin_s, s.end_s, s.word_times) for s in kept],
                               human[d].total_frames, frame_rate)
            total = total + frame_counts(lab, gold[d])
        points.append(PRPoint(cap, total.precision(), total.recall(), hours))
    return points


def select_working_point(curve: Sequence[PRPoint], target_hours: float,
                         max_cap: float = 4.0) -> PRPoint:
    """Smallest cap reaching ``target_hours`` without exceeding ``max_cap``;
    otherwise the largest admissible point, flagged as a shortfall."""
    if not curve:
        raise ValueError("empty curve")
    admissible = sorted((p for p in curve if p.cap <= max_cap), key=lambda p: p.cap)
    if not admissible:
        low = min(curve, key=lambda p: p.cap)
        return PRPoint(low.cap, low.precision, low.recall, low.retained_hours, True)
    for p in admissible:
        if p.retained_hours >= target_hours:
            return p
    last = admissible[-1]
    return PRPoint(last.cap, last.precision, last.recall, last.retained_hours, True)


def curve_csv(curve: Sequence[PRPoint]) -> str:
    lines = ["cap,precision,recall,hours"]
    lines += [f"{p.cap:g},{p.precision:.6f},{p.recall:.6f},{p.retained_hours:.6f}" for p in curve]
    return "\n".join(lines) + "\n"
