import json

import pytest
from hypothesis import given, settings, strategies as st

from corpusforge.metadata import load_manifest
from corpusforge.synth import (SPOKEN_FILLERS, ErrorRates, SynthDoc, SynthScorer, SynthSpec,
                               generate, gold_manifest, injections_in, load_corpus,
                               make_scorer, make_vocab, write_corpus)
from corpusforge.textnorm import normalize_text


def small(**kw):
    base = dict(seed=3, n_docs=3, words_per_doc=60, vocab_size=80)
    base.update(kw)
    return SynthSpec(**base)


def test_generation_is_deterministic_and_prefix_stable():
    a = [d.to_json() for d in generate(small())]
    b = [d.to_json() for d in generate(small())]
    assert a == b
    assert [d.to_json() for d in generate(small(n_docs=5))][:3] == a
    assert [d.to_json() for d in generate(small(seed=4))] != a


def test_clean_transcript_normalizes_to_spoken_words():
    for d in generate(small()):
        assert normalize_text(d.transcript_raw).words() == [w.text for w in d.true_spoken]
        assert d.answer_key == ()


def test_spoken_words_tile_forward_in_time():
    for d in generate(small(filler_rate=0.2, repetition_rate=0.2)):
        ws = d.true_spoken
        assert ws[0].begin_s >= 0.5 - 1e-9 and ws[-1].end_s <= d.duration_s
        assert all(a.end_s <= b.begin_s for a, b in zip(ws, ws[1:]))


def test_full_deletion_on_one_word_doc_gives_empty_transcript():
    (d,) = generate(SynthSpec(seed=1, n_docs=1, words_per_doc=1, vocab_size=5,
                              error_rates=ErrorRates(deletion=1.0)))
    assert d.transcript_raw == ""
    assert [i.kind for i in d.answer_key] == ["deletion"]
    assert len(d.true_spoken) == 1


def test_answer_key_matches_injected_differences():
    spec = small(n_docs=4, words_per_doc=150, filler_rate=0.1, repetition_rate=0.1,
                 error_rates=ErrorRates(0.05, 0.03, 0.5, 0.5))
    for d in generate(spec):
        spoken = [w.text for w in d.true_spoken]
        written = normalize_text(d.transcript_raw).words()
        missing = sum(len(i.spoken) for i in d.answer_key
                      if i.kind in ("deletion", "filler_drop"))
        missing += sum(1 for i in d.answer_key if i.kind == "disfluency_drop")
        assert len(written) == len(spoken) - missing
        for i in d.answer_key:
            assert i.begin_s < i.end_s
            if i.kind == "typo":
                assert i.written != i.spoken[0]
                assert i.written in written


def test_fillers_are_spoken_from_the_list():
    fillers = {w for p in SPOKEN_FILLERS for w in p.split()}
    for d in generate(small(filler_rate=0.3)):
        assert fillers & {w.text for w in d.true_spoken}
    assert not fillers & set(make_vocab(500, 0))


def test_rates_validated():
    with pytest.raises(ValueError):
        ErrorRates(deletion=1.5)
    with pytest.raises(ValueError):
        ErrorRates(deletion=0.6, typo=0.6)
    with pytest.raises(ValueError):
        SynthSpec(n_docs=0)
    with pytest.raises(ValueError):
        SynthSpec(sentence_words=(5, 2))


def test_spec_json_round_trip():
    spec = small(error_rates=ErrorRates(0.1, 0.2), filler_rate=0.3)
    assert SynthSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec


# -- scorer ---------------------------------------------------------------

def test_scorer_tiles_frames_by_onset():
    (d,) = generate(small(n_docs=1))
    sc = make_scorer(d)
    assert sc.total_frames == round(d.duration_s * 100)
    assert sc.boundaries[0] == 0 and sc.boundaries[-1] == sc.total_frames
    assert list(sc.boundaries) == sorted(sc.boundaries)
    t, path = 0, []
    for w in d.true_spoken:
        end, score = sc.best_span(w.text, t)
        assert score == 0.0
        path.append(w.text)
        t = end
    assert t == sc.total_frames
    assert sc.best_span(d.true_spoken[1].text, 0)[1] == -16.0
    assert sc.best_span("<UNK>", 0)[1] == -3.0
    assert sc.best_span(d.true_spoken[0].text, 1) is None


def test_scorer_margin_floor():
    with pytest.raises(ValueError):
        SynthScorer(["A"], 10, [0, 10], margin=3.9)


def test_noise_is_deterministic():
    (d,) = generate(small(n_docs=1))
    a, b = make_scorer(d, noise=0.5, seed=1), make_scorer(d, noise=0.5, seed=1)
    w = d.true_spoken[0].text
    assert a.best_span(w, 0) == b.best_span(w, 0) != make_scorer(d, 0.5, 2).best_span(w, 0)


def test_window_keeps_inside_words_and_stable_jitter():
    (d,) = generate(small(n_docs=1))
    sc = make_scorer(d, noise=0.3, seed=5)
    ws = d.true_spoken
    begin, end = ws[3].begin_s - 0.05, ws[7].end_s + 0.05
    win = sc.window(begin, end)
    assert win.words == tuple(w.text for w in ws[3:8])
    assert win.total_frames == round(end * 100) - round(begin * 100)
    # jitter depends on absolute frames, so a word scores the same in both views
    f_abs = round(ws[4].begin_s * 100)
    f_loc = f_abs - round(begin * 100)
    assert win.best_span(ws[4].text, f_loc)[1] == sc.best_span(ws[4].text, f_abs)[1]


def test_injections_in_windows():
    spec = small(n_docs=2, words_per_doc=200, repetition_rate=0.3,
                 error_rates=ErrorRates(0.05, 0.0, 0.0, 1.0))
    for d in generate(spec):
        for i in d.answer_key:
            assert i in injections_in(d, i.begin_s, i.end_s)
            if i.kind == "disfluency_drop":
                mid = (i.begin_s + i.end_s) / 2
                assert i not in injections_in(d, i.begin_s, mid)
            else:
                assert i in injections_in(d, i.begin_s - 1, (i.begin_s + i.end_s) / 2)
        assert injections_in(d, d.duration_s, d.duration_s + 1) == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_gold_segments_are_valid_manifest(seed):
    docs = generate(small(seed=seed, n_docs=2, filler_rate=0.1, repetition_rate=0.1))
    from corpusforge.metadata import save_manifest
    m = load_manifest(save_manifest(gold_manifest(docs)))
    assert len(m.audios) == 2
    for a, d in zip(m.audios, docs):
        assert sum(len(s.words) for s in a.segments) == len(d.true_spoken)


def test_write_and_load_corpus(tmp_path):
    spec = small(error_rates=ErrorRates(0.1, 0.1))
    docs = generate(spec)
    write_corpus(docs, tmp_path, spec)
    back = load_corpus(tmp_path)
    assert [d.to_json() for d in back] == [d.to_json() for d in docs]
    assert (tmp_path / "transcripts" / f"{docs[0].aid}.txt").read_text().strip() == \
        docs[0].transcript_raw
    key = json.loads((tmp_path / "answer_keys" / f"{docs[0].aid}.json").read_text())
    assert key == [i.to_json() for i in docs[0].answer_key]
    assert SynthSpec.from_json(json.loads((tmp_path / "spec.json").read_text())) == spec
    assert SynthDoc.from_json(docs[1].to_json()).to_json() == docs[1].to_json()
