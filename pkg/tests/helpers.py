"""Small builders for decoder and validator tests."""
from __future__ import annotations

import random

from corpusforge.align_graph import UNK_WORD, FillerSet, GarbageVocab, GraphWeights, build_graph
from corpusforge.chunk_match import TimedWord
from corpusforge.synth import SynthScorer
from corpusforge.textnorm import TokenSeq
from corpusforge.validator import TableScorer

VOCAB = ["ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO", "FOXTROT"]
GARBAGE = GarbageVocab(("ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO"))


def timed(words, length=0.3, gap=0.1, lead=0.2):
    out, t = [], lead
    for w in words:
        out.append(TimedWord(w, round(t, 3), round(t + length, 3)))
        t += length + gap
    return tuple(out)


def scorer_for(spoken, margin=16.0, noise=0.0, seed=0):
    tw = timed(spoken)
    dur = (tw[-1].end_s + 0.2) if tw else 1.0
    return SynthScorer.from_words(tw, dur, noise, seed, margin)


def graph_for(ref_words, fillers=FillerSet(), garbage=GARBAGE, order=4, window=10,
              detours=True, unk=True, weights=GraphWeights()):
    ref = ref_words if isinstance(ref_words, TokenSeq) else TokenSeq.from_texts(ref_words)
    return build_graph(ref, order, weights, garbage, fillers, window, detours,
                       UNK_WORD if unk else None)


def perturb(rng: random.Random, ref: list[str]) -> list[str]:
    """Spoken words: the reference with a few random edits."""
    out = list(ref)
    for _ in range(rng.randint(0, 2)):
        op = rng.choice(["del", "ins", "sub", "rep", "filler"])
        i = rng.randrange(len(out) + 1)
        if op == "del" and i < len(out) and len(out) > 1:
            del out[i]
        elif op == "ins":
            out.insert(i, rng.choice(VOCAB))
        elif op == "sub" and i < len(out):
            out[i] = rng.choice(VOCAB)
        elif op == "rep" and i < len(out):
            out.insert(i, out[i])
        elif op == "filler":
            out[i:i] = rng.choice([["UM"], ["YOU", "KNOW"]])
    return out or list(ref)


def random_table(rng: random.Random, words, T, density=0.4, max_len=3):
    table = {}
    for f in range(T):
        for w in words:
            if rng.random() < density:
                table[(w, f)] = (min(T, f + rng.randint(1, max_len)), -rng.uniform(0, 8))
    return TableScorer(table, T)
