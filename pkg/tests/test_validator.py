import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from corpusforge.align_graph import UNK_WORD, ArcKind, FillerSet, GarbageVocab
from corpusforge.errors import NoPathError
from corpusforge.sw_align import edit_ops
from corpusforge.textnorm import TokenSeq
from corpusforge.validator import (BestPath, EditEntry, EditKind, EditScript, PathArc,
                                   RewritePolicy, TableScorer, ValidationResult, decode,
                                   edits_from_ops, judge, passes_cap, path_to_edits,
                                   rewrite_reference, validate_segment, validation_wer)

from helpers import VOCAB, graph_for, perturb, random_table, scorer_for
from oracles import dijkstra_decode_cost, exhaustive_decode_cost, levenshtein

SMALL_FILLERS = FillerSet(("UM", "YOU KNOW"))
XL = RewritePolicy(fillers=True, disfluency=True)


def decode_edits(ref, spoken, **kw):
    g = graph_for(ref, **kw)
    path = decode(g, scorer_for(spoken))
    fillers = kw.get("fillers", FillerSet())
    return path, path_to_edits(path, TokenSeq.from_texts(ref), fillers, graph=g)


# -- decoding ------------------------------------------------------------------

def test_clean_reference_uses_forced_arcs_only():
    ref = "ALPHA BRAVO CHARLIE DELTA".split()
    path, es = decode_edits(ref, ref)
    assert path.count(ArcKind.LEAK) == 0 and path.total_cost == 0.0
    assert [a.kind for a in path.arcs] == [ArcKind.FORCED] * 4
    assert es.count(EditKind.COR) == 4 and validation_wer(es) == 0.0


def test_missing_word_is_one_deletion():
    ref = "ALPHA BRAVO YOU CHARLIE DELTA".split()
    path, es = decode_edits(ref, [w for w in ref if w != "YOU"])
    assert es.count(EditKind.DEL) == 1
    assert es.count(EditKind.SUB, EditKind.INS) == 0
    (d,) = [e for e in es.entries if e.kind is EditKind.DEL]
    assert (d.ref_word, d.ref_index) == ("YOU", 2)


def test_extra_word_is_one_insertion():
    ref = "ALPHA BRAVO CHARLIE".split()
    _, es = decode_edits(ref, "ALPHA ECHO BRAVO CHARLIE".split())
    assert [(e.kind, e.hyp_word) for e in es.entries if e.kind is not EditKind.COR] == \
        [(EditKind.INS, "ECHO")]


def test_typo_is_substitution():
    ref = "ALPHA BRAVO CHARLIE DELTA".split()
    _, es = decode_edits(ref, "ALPHA ECHO CHARLIE DELTA".split())
    (s,) = [e for e in es.entries if e.kind is not EditKind.COR]
    assert (s.kind, s.ref_word, s.hyp_word) == (EditKind.SUB, "BRAVO", "ECHO")


def test_unknown_spoken_word_goes_through_unk():
    ref = "ALPHA BRAVO CHARLIE".split()
    _, es = decode_edits(ref, "ALPHA ZULU CHARLIE".split())
    (s,) = [e for e in es.entries if e.kind is not EditKind.COR]
    assert (s.kind, s.hyp_word) == (EditKind.SUB, UNK_WORD)


def test_surface_match_is_flagged():
    """A bypassed word replaced by the same garbage word marks a scorer/reference mismatch."""
    ref = TokenSeq.from_texts(["A", "YOU", "B"])
    g = graph_for(ref, garbage=GarbageVocab(("YOU",)), fillers=FillerSet(()), order=2)
    # FORCED arcs refuse YOU, garbage accepts it
    table = {("A", 0): (1, 0.0), ("YOU", 1): (2, 0.0), ("B", 2): (3, 0.0)}
    forced_you = next(k for k, a in enumerate(g.arcs) if a.kind is ArcKind.FORCED
                      and a.label == "YOU")
    g.arcs[forced_you] = type(g.arcs[forced_you])(**{**g.arcs[forced_you].__dict__,
                                                     "cost": math.inf})
    g.reindex()
    path = decode(g, TableScorer(table, 3), beam=None)
    es = path_to_edits(path, ref, FillerSet(()), graph=g)
    (s,) = [e for e in es.entries if e.kind is EditKind.SUB]
    assert (s.ref_word, s.hyp_word, s.note) == ("YOU", "YOU", "surface_match")


@pytest.mark.parametrize("seed", range(5))
def test_decode_matches_exhaustive_on_synth(seed):
    rng = random.Random(seed)
    for _ in range(20):
        ref = rng.choices(VOCAB[:4], k=rng.randint(1, 8))
        g = graph_for(ref, fillers=SMALL_FILLERS)
        sc = scorer_for(perturb(rng, ref))
        want = exhaustive_decode_cost(g, sc)
        assert decode(g, sc, beam=None).total_cost == pytest.approx(want)
        assert decode(g, sc).total_cost == pytest.approx(want)


def test_decode_matches_oracles_on_random_tables():
    rng = random.Random(11)
    for _ in range(60):
        ref = rng.choices(VOCAB[:4], k=rng.randint(1, 6))
        g = graph_for(ref, fillers=SMALL_FILLERS, garbage=GarbageVocab(("ALPHA", "ECHO")))
        sc = random_table(rng, VOCAB[:5] + ["UM", "YOU", "KNOW", UNK_WORD], rng.randint(1, 12))
        want = exhaustive_decode_cost(g, sc)
        assert dijkstra_decode_cost(g, sc) == pytest.approx(want)
        if math.isinf(want):
            with pytest.raises(NoPathError):
                decode(g, sc, beam=None)
        else:
            assert decode(g, sc, beam=None).total_cost == pytest.approx(want)


def well_formed(path: BestPath, g, T):
    assert path.arcs[0].src == g.start and path.arcs[-1].dst == g.final
    for a, b in zip(path.arcs, path.arcs[1:]):
        assert a.dst == b.src and a.end_frame == b.start_frame
    assert path.arcs[0].start_frame == 0 and path.arcs[-1].end_frame == T
    cost = sum(g.arcs[a.arc].cost - a.acoustic_score for a in path.arcs)
    assert cost == pytest.approx(path.total_cost)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_small_beam_returns_valid_path_or_raises(seed, beam):
    rng = random.Random(seed)
    ref = rng.choices(VOCAB[:4], k=rng.randint(1, 6))
    g = graph_for(ref, fillers=SMALL_FILLERS)
    sc = random_table(rng, VOCAB[:5] + ["UM", UNK_WORD], rng.randint(1, 10), density=0.5)
    try:
        path = decode(g, sc, beam=beam)
    except NoPathError:
        return
    well_formed(path, g, sc.total_frames)
    assert path.total_cost >= dijkstra_decode_cost(g, sc) - 1e-9


def test_no_frames_or_no_path():
    g = graph_for(["ALPHA"])
    with pytest.raises(NoPathError):
        decode(g, TableScorer({}, 0))
    with pytest.raises(NoPathError):
        decode(g, TableScorer({}, 5))


def test_decode_is_deterministic():
    rng = random.Random(3)
    ref = rng.choices(VOCAB, k=8)
    spoken = perturb(rng, ref)
    g = graph_for(ref)
    a, b = decode(g, scorer_for(spoken, noise=1.0)), decode(g, scorer_for(spoken, noise=1.0))
    assert a == b


# -- edit scripts --------------------------------------------------------------

def pa(kind, label, src, dst, s, e, origin=None):
    return PathArc(0, kind, label, src, dst, s, e, 0.0, origin)


def test_all_forced_path_is_all_cor():
    ref = TokenSeq.from_texts(["A", "B"])
    g = graph_for(ref)
    p = BestPath([pa(ArcKind.FORCED, "A", 0, 1, 0, 5), pa(ArcKind.FORCED, "B", 1, 2, 5, 9)],
                 0.0, 9)
    assert [e.kind for e in path_to_edits(p, ref, graph=g).entries] == [EditKind.COR] * 2


def test_garbage_without_bypass_is_insertion():
    ref = TokenSeq.from_texts(["A"])
    g = graph_for(ref, fillers=FillerSet(()), order=2)
    null = g.null
    p = BestPath([pa(ArcKind.LEAK, None, 0, null, 0, 0, 0),
                  pa(ArcKind.GARBAGE, "X", null, null, 0, 3, 0),
                  pa(ArcKind.RETURN, None, null, 0, 3, 3, 0),
                  pa(ArcKind.FORCED, "A", 0, 1, 3, 6)], 0.0, 6)
    es = path_to_edits(p, ref, graph=g)
    assert [(e.kind, e.hyp_word) for e in es.entries] == [(EditKind.INS, "X"),
                                                          (EditKind.COR, "A")]


def test_edits_from_ops_and_json():
    es = edits_from_ops(edit_ops(["A", "X", "C"], ["A", "B"]), ["A", "B"], ["A", "X", "C"])
    assert sorted(e.kind.value for e in es.entries) == ["COR", "INS", "SUB"]
    for e in es.entries:
        assert EditEntry.from_json(e.to_json()) == e
    assert es.ref_words == ["A", "B"] and es.hyp_words == ["A", "X", "C"]


# -- WER --------------------------------------------------------------------------

def test_wer_boundary_at_four_percent():
    ref = [f"W{i}" for i in range(25)]
    es = edits_from_ops(edit_ops(ref[:10] + ref[11:], ref), ref, ref[:10] + ref[11:])
    assert validation_wer(es) == 4.0
    assert passes_cap(validation_wer(es), 4.0) and not passes_cap(4.0, 4.0, exclusive=True)
    assert not passes_cap(validation_wer(es), 0.0)
    assert passes_cap(100 / 25, 4.0) and passes_cap(1 / 25 * 100, 4.0)


def test_wer_needs_reference_words():
    with pytest.raises(ValueError):
        validation_wer(EditScript((EditEntry(EditKind.INS, None, "A"),)))


@settings(max_examples=300)
@given(st.lists(st.sampled_from("ABCD"), min_size=1, max_size=12),
       st.lists(st.sampled_from("ABCDE"), max_size=12))
def test_validation_wer_is_levenshtein(ref, hyp):
    es = edits_from_ops(edit_ops(hyp, ref), ref, hyp)
    assert validation_wer(es) == pytest.approx(100.0 * levenshtein(ref, hyp) / len(ref))


def test_decoded_wer_bounds_levenshtein():
    rng = random.Random(4)
    for _ in range(50):
        ref = rng.choices(VOCAB[:4], k=rng.randint(2, 10))
        spoken = perturb(rng, ref)
        path, es = decode_edits(ref, spoken, fillers=FillerSet(()))
        hyp = [w for w in path.words]
        assert es.hyp_words == hyp
        assert es.ref_words == ref
        assert validation_wer(es) >= 100.0 * levenshtein(ref, hyp) / len(ref) - 1e-9


# -- rewriting and judging -----------------------------------------------------------

def test_filler_rewrite():
    ref = "ALPHA BRAVO CHARLIE".split()
    spoken = "ALPHA UM BRAVO CHARLIE".split()
    g = graph_for(ref)
    seg = type("Seg", (), {"sid": "s", "tokens": TokenSeq.from_texts(ref)})
    sc = scorer_for(spoken)
    strict = validate_segment(seg, sc, g, 0.0)
    assert not strict.passed and strict.wer == pytest.approx(100 / 3)
    loose = validate_segment(seg, sc, g, 4.0, XL)
    assert loose.passed and loose.wer == 0.0
    assert loose.rewritten_ref.texts == ["ALPHA", "UM", "BRAVO", "CHARLIE"]
    (e,) = [e for e in loose.edit_script.entries if e.inserted]
    assert (e.kind, e.note) == (EditKind.COR, "filler")


def test_filler_insertion_without_filler_arc_is_rewritten():
    ref = TokenSeq.from_texts(["A", "B"])
    es = EditScript((EditEntry(EditKind.COR, "A", "A", 0), EditEntry(EditKind.INS, None, "YOU"),
                     EditEntry(EditKind.INS, None, "KNOW"), EditEntry(EditKind.COR, "B", "B", 1)))
    new_ref, es2 = rewrite_reference(es, ref, RewritePolicy(fillers=True))
    assert new_ref.texts == ["A", "YOU", "KNOW", "B"] and es2.count(EditKind.INS) == 0


def test_disfluency_rewrite():
    ref = TokenSeq.from_texts(["IT'S", "A", "GREAT", "THING", "<EXCLAMATIONMARK>"])
    es = EditScript((EditEntry(EditKind.COR, "IT'S", "IT'S", 0),
                     EditEntry(EditKind.INS, None, "IT'S"), EditEntry(EditKind.INS, None, "IT'S"),
                     EditEntry(EditKind.COR, "A", "A", 1),
                     EditEntry(EditKind.COR, "GREAT", "GREAT", 2),
                     EditEntry(EditKind.COR, "THING", "THING", 3)))
    new_ref, es2 = rewrite_reference(es, ref, RewritePolicy(disfluency=True))
    assert new_ref.render() == "IT'S IT'S IT'S A GREAT THING <EXCLAMATIONMARK>"
    assert validation_wer(es2) == 0.0
    # an unanchored repetition is a real insertion
    es = EditScript((EditEntry(EditKind.INS, None, "X"), EditEntry(EditKind.INS, None, "X"),
                     EditEntry(EditKind.COR, "A", "A", 0)))
    _, es3 = rewrite_reference(es, TokenSeq.from_texts(["A"]), RewritePolicy(disfluency=True))
    assert es3.count(EditKind.INS) == 2


def test_identity_policy_returns_inputs():
    ref = TokenSeq.from_texts(["A"])
    es = EditScript((EditEntry(EditKind.INS, None, "UM"), EditEntry(EditKind.COR, "A", "A", 0)))
    assert rewrite_reference(es, ref, RewritePolicy()) == (ref, es)


def test_filler_cor_counts_as_insertion_without_filler_policy():
    ref = TokenSeq.from_texts(["A"])
    es = EditScript((EditEntry(EditKind.FILLER_COR, None, "UM"),
                     EditEntry(EditKind.COR, "A", "A", 0)))
    assert judge("s", es, ref, 0.0).wer == 100.0
    r = judge("s", es, ref, 0.0, RewritePolicy(fillers=True))
    assert r.passed and r.rewritten_ref.texts == ["UM", "A"]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_rewriting_never_increases_wer(seed):
    rng = random.Random(seed)
    ref = rng.choices(VOCAB[:4], k=rng.randint(1, 8))
    path, es = decode_edits(ref, perturb(rng, ref), fillers=SMALL_FILLERS)
    tokens = TokenSeq.from_texts(ref)
    base = judge("s", es, tokens, 0.0, RewritePolicy(), SMALL_FILLERS).wer
    for pol in (RewritePolicy(True, False), RewritePolicy(False, True), XL):
        assert judge("s", es, tokens, 0.0, pol, SMALL_FILLERS).wer <= base + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_cap_zero_passes_iff_exact(seed):
    rng = random.Random(seed)
    ref = rng.choices(VOCAB[:4], k=rng.randint(1, 8))
    spoken = perturb(rng, ref)
    g = graph_for(ref)
    seg = type("Seg", (), {"sid": "s", "tokens": TokenSeq.from_texts(ref)})
    r = validate_segment(seg, scorer_for(spoken), g, 0.0)
    assert r.passed == (spoken == ref)


def test_result_json_round_trip():
    ref = "ALPHA BRAVO".split()
    g = graph_for(ref)
    seg = type("Seg", (), {"sid": "s1", "tokens": TokenSeq.from_texts(ref)})
    r = validate_segment(seg, scorer_for(["ALPHA", "UM", "BRAVO"]), g, 4.0, XL)
    back = ValidationResult.from_json(r.to_json())
    assert back.to_json() == r.to_json()


def test_no_path_is_a_failure():
    g = graph_for(["ALPHA"])
    seg = type("Seg", (), {"sid": "s", "tokens": TokenSeq.from_texts(["ALPHA"])})
    r = validate_segment(seg, TableScorer({}, 4), g, 100.0)
    assert not r.passed and r.reason.startswith("no_path")
