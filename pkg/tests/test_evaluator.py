import random

import pytest
from hypothesis import given, settings, strategies as st

from corpusforge.errors import LengthMismatchError, NoHumanSpeechError, OverlapError
from corpusforge.evaluator import (SIL, FrameCounts, HumanDoc, LabeledSegment, PRPoint,
                                   ScoredSegment, curve_csv, frame_counts, frame_labels,
                                   pr_curve, precision_recall, select_working_point)

from oracles import frame_pr


def random_doc(rng, n_words=30):
    """Human segments and a word timeline for one document."""
    words, t = [], 0.5
    for i in range(n_words):
        d = rng.randint(15, 50) / 100
        words.append((rng.choice(["A", "B", "C", "D"]), round(t, 2), round(t + d, 2)))
        t += d + rng.choice([0.05, 0.1, 0.3, 1.2])
    total = round((t + 0.5) * 100)
    segs, i = [], 0
    while i < len(words):
        j = min(len(words), i + rng.randint(1, 6))
        chunk = words[i:j]
        segs.append((round(chunk[0][1] - 0.02, 2), round(chunk[-1][2] + 0.02, 2), tuple(chunk)))
        i = j
    return total, segs


def test_word_and_silence_labels():
    lab = frame_labels([(0.0, 0.5, [("A", 0.1, 0.2), ("B", 0.2, 0.3)])], 100)
    assert lab.labels[10:20] == ("A",) * 10 and lab.labels[20:30] == ("B",) * 10
    assert lab.labels[5] == SIL and lab.labels[60] == SIL
    assert lab.retrieved[:50] == (True,) * 50 and not any(lab.retrieved[50:])
    assert lab.total_frames == 100


def test_earlier_word_owns_shared_frame():
    lab = frame_labels([LabeledSegment(0.0, 1.0, (("A", 0.0, 0.504), ("B", 0.496, 1.0)))], 100)
    assert lab.labels[49] == "A" and lab.labels[50] == "B"
    lab = frame_labels([LabeledSegment(0.0, 1.0, (("A", 0.0, 0.6), ("B", 0.4, 1.0)))], 100)
    assert lab.labels[50] == "A" and lab.labels[60] == "B"


def test_identity_is_perfect():
    rng = random.Random(1)
    total, segs = random_doc(rng)
    lab = frame_labels(segs, total)
    assert precision_recall(lab, lab) == (1.0, 1.0)


def test_errors():
    with pytest.raises(OverlapError):
        frame_labels([(0.0, 1.0, ()), (0.5, 2.0, ())], 300)
    a = frame_labels([(0.0, 1.0, [("A", 0, 1)])], 100)
    with pytest.raises(LengthMismatchError):
        frame_counts(a, frame_labels([], 200))
    with pytest.raises(NoHumanSpeechError):
        precision_recall(a, frame_labels([], 100))
    assert FrameCounts().precision() == 1.0


def test_silence_agreement_counts_as_correct():
    human = frame_labels([(0.0, 1.0, [("A", 0.2, 0.4)])], 100)
    pipe = frame_labels([(0.0, 1.0, [("A", 0.2, 0.4)])], 100)
    assert frame_counts(pipe, human) == FrameCounts(100, 100, 20, 20)


def test_half_coverage_and_nothing_retrieved():
    human = frame_labels([(0.0, 1.0, [("A", 0.0, 1.0)])], 100)
    assert precision_recall(frame_labels([(0.0, 0.5, [("A", 0.0, 0.5)])], 100), human) == \
        (1.0, 0.5)
    assert precision_recall(frame_labels([], 100), human) == (1.0, 0.0)


def test_frame_accounting():
    rng = random.Random(3)
    total, segs = random_doc(rng)
    human = frame_labels(segs, total)
    pipe = frame_labels(segs[::2], total)
    c = frame_counts(pipe, human)
    unretrieved = sum(not r for r in pipe.retrieved)
    assert c.correct + (c.retrieved - c.correct) + unretrieved == total


def scored_corpus(rng, docs=4):
    human, corpus = {}, []
    for d in range(docs):
        total, segs = random_doc(rng)
        human[f"d{d}"] = HumanDoc(total, tuple(LabeledSegment(*s) for s in segs))
        for b, e, words in segs:
            # the pipeline sometimes mislabels a word
            words = tuple((w if rng.random() > 0.1 else "X", wb, we) for w, wb, we in words)
            corpus.append(ScoredSegment(f"d{d}", b, e, rng.choice([0, 0, 1, 2.5, 4, 4, 7, 12, 30]),
                                        words))
    return corpus, human


def test_curve_matches_brute_force_and_recall_is_monotone():
    rng = random.Random(7)
    corpus, human = scored_corpus(rng)
    caps = [k * 1.5 for k in range(20)]
    curve = pr_curve(corpus, human, caps)
    assert [p.cap for p in curve] == caps
    for p in curve:
        c = r = s = cs = 0
        for d, h in human.items():
            kept = [(x.begin_s, x.end_s, x.word_times) for x in corpus
                    if x.doc == d and x.wer <= p.cap]
            hs = [(x.begin_s, x.end_s, x.word_times) for x in h.segments]
            dc, dr, ds, dcs = frame_pr(kept, hs, h.total_frames)
            c, r, s, cs = c + dc, r + dr, s + ds, cs + dcs
        assert p.precision == (1.0 if r == 0 else c / r)
        assert p.recall == cs / s
        assert 0.0 <= p.precision <= 1.0 and 0.0 <= p.recall <= 1.0
        hours = sum(x.end_s - x.begin_s for x in corpus if x.wer <= p.cap) / 3600
        assert p.retained_hours == pytest.approx(hours)
    recalls = [p.recall for p in curve]
    assert recalls == sorted(recalls)


def test_curve_needs_sorted_caps():
    with pytest.raises(ValueError):
        pr_curve([], {}, [4.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_recall_monotone_property(seed):
    corpus, human = scored_corpus(random.Random(seed), docs=2)
    curve = pr_curve(corpus, human, [0, 1, 2, 4, 8, 16, 100])
    rec = [p.recall for p in curve]
    hrs = [p.retained_hours for p in curve]
    assert rec == sorted(rec) and hrs == sorted(hrs)


def test_working_point():
    curve = [PRPoint(0, 0.99, 0.5, 10.0), PRPoint(1, 0.98, 0.6, 20.0),
             PRPoint(4, 0.95, 0.7, 30.0), PRPoint(8, 0.9, 0.8, 40.0)]
    assert select_working_point(curve, 15.0).cap == 1
    assert select_working_point(curve, 5.0).cap == 0
    p = select_working_point(curve, 35.0)
    assert (p.cap, p.shortfall) == (4, True)
    assert select_working_point(curve, 35.0, max_cap=8).cap == 8
    assert select_working_point([PRPoint(8, 1, 1, 1)], 1.0).shortfall
    with pytest.raises(ValueError):
        select_working_point([], 1.0)


def test_curve_csv():
    text = curve_csv([PRPoint(0.0, 1.0, 0.5, 0.25), PRPoint(4.0, 0.9, 0.75, 1.0)])
    assert text.splitlines() == ["cap,precision,recall,hours", "0,1.000000,0.500000,0.250000",
                                 "4,0.900000,0.750000,1.000000"]
