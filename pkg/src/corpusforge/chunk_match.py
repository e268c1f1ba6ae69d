"""Uniform chunking of hypothesis and transcript, and TF-IDF chunk matching."""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .textnorm import TokenSeq


@dataclass(frozen=True)
class TimedWord:
    text: str
    begin_s: float
    end_s: float
    score: float = 0.0

    def __post_init__(self):
        if not self.end_s > self.begin_s:
            raise ValueError(f"word {self.text!r}: end_s must exceed begin_s")


@dataclass(frozen=True)
class TimedHypothesis:
    words: tuple[TimedWord, ...]
    audio_duration_s: float

    def __post_init__(self):
        for a, b in zip(self.words, self.words[1:]):
            if b.begin_s < a.end_s:
                raise ValueError("hypothesis words overlap or are unsorted")

    def to_json(self) -> dict:
        return {"duration": self.audio_duration_s,
                "words": [[w.text, w.begin_s, w.end_s, w.score] for w in self.words]}

    @classmethod
    def from_json(cls, d: dict) -> "TimedHypothesis":
        return cls(tuple(TimedWord(w[0], float(w[1]), float(w[2]),
                                   float(w[3]) if len(w) > 3 else 0.0)
                         for w in d["words"]), float(d["duration"]))


class Side(str, enum.Enum):
    HYP = "HYP"
    REF = "REF"


@dataclass(frozen=True)
class Chunk:
    id: int
    side: Side
    token_range: tuple[int, int]
    words: tuple[str, ...]
    time_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class ChunkMatch:
    hyp_chunk: int
    ref_chunk: int
    similarity: float

    def to_json(self) -> dict:
        return {"hyp_chunk": self.hyp_chunk, "ref_chunk": self.ref_chunk,
                "similarity": self.similarity}

    @classmethod
    def from_json(cls, d: dict) -> "ChunkMatch":
        return cls(int(d["hyp_chunk"]), int(d["ref_chunk"]), float(d["similarity"]))


def chunk_transcript(ref: TokenSeq, words_per_chunk: int = 100,
                     overlap: int = 50) -> list[Chunk]:
    """Sliding word windows over the transcript.

    PUNCT tokens do not count toward the window size but stay inside the
    token ranges, so the union of ranges covers every token.
    """
    if not words_per_chunk > overlap >= 0:
        raise ValueError("need words_per_chunk > overlap >= 0")
    pos = ref.word_positions()
    n = len(pos)
    if n == 0:
        return [Chunk(0, Side.REF, (0, len(ref)), ())]
    step = words_per_chunk - overlap
    chunks = []
    for k, start in enumerate(range(0, n, step)):
        stop = min(start + words_per_chunk, n)
        lo = 0 if start == 0 else pos[start]
        hi = pos[stop] if stop < n else len(ref)
        words = tuple(ref.tokens[p].text for p in pos[start:stop])
        chunks.append(Chunk(k, Side.REF, (lo, hi), words))
    return chunks


def chunk_hypothesis(hyp: TimedHypothesis, window_s: float = 30.0,
                     overlap_s: float = 5.0) -> list[Chunk]:
    """Uniform time windows; a word belongs to every window containing its
    midpoint (windows are half-open).  Windows without words are skipped."""
    if not window_s > overlap_s >= 0:
        raise ValueError("need window_s > overlap_s >= 0")
    if not hyp.words:
        return []
    step = window_s - overlap_s
    mids = [round((w.begin_s + w.end_s) / 2, 6) for w in hyp.words]
    horizon = max(hyp.audio_duration_s, hyp.words[-1].end_s)
    chunks = []
    k = 0
    while k * step < horizon:
        t0 = round(k * step, 6)
        t1 = round(min(t0 + window_s, horizon), 6)
        idx = [i for i, m in enumerate(mids) if t0 <= m < t1
               or (t1 == horizon and m == horizon)]
        if idx:
            chunks.append(Chunk(len(chunks), Side.HYP, (idx[0], idx[-1] + 1),
                                tuple(hyp.words[i].text for i in idx), (t0, t1)))
        k += 1
    return chunks


def idf_table(ref_chunks: list[Chunk]) -> dict[str, float]:
    n = len(ref_chunks)
    df = Counter()
    for c in ref_chunks:
        df.update(set(c.words))
    return {w: math.log((n + 1) / (d + 1)) + 1.0 for w, d in df.items()}


def tfidf_vector(words, idf: dict[str, float], n_ref: int) -> dict[str, float]:
    unseen = math.log(n_ref + 1) + 1.0
    return {w: c * idf.get(w, unseen) for w, c in Counter(words).items()}


def match_chunks(hyp_chunks: list[Chunk], ref_chunks: list[Chunk],
                 threshold: float = 0.2) -> list[ChunkMatch]:
    """Match each hypothesis chunk to its most similar transcript chunk.

    TF is the raw count, IDF is ln((N+1)/(df+1)) + 1 over the N transcript
    chunks.  Ties go to the lower transcript chunk id; matches below
    ``threshold`` are dropped.
    """
    if not hyp_chunks or not ref_chunks:
        return []
    idf = idf_table(ref_chunks)
    vocab = {w: i for i, w in enumerate(sorted(idf))}
    n_ref = len(ref_chunks)

    R = np.zeros((n_ref, len(vocab)))
    for r, c in enumerate(ref_chunks):
        for w, v in tfidf_vector(c.words, idf, n_ref).items():
            R[r, vocab[w]] = v
    rnorm = np.linalg.norm(R, axis=1)

    matches = []
    for h in hyp_chunks:
        vec = tfidf_vector(h.words, idf, n_ref)
        hnorm = math.sqrt(sum(v * v for v in vec.values()))
        if hnorm == 0:
            continue
        q = np.zeros(len(vocab))
        for w, v in vec.items():
            if w in vocab:
                q[vocab[w]] = v
        denom = rnorm * hnorm
        sims = np.divide(R @ q, denom, out=np.zeros(n_ref), where=denom > 0)
        best = int(np.argmax(sims))  # first maximum -> lowest id
        sim = float(min(1.0, max(0.0, sims[best])))
        if sim >= threshold and sim > 0:
            matches.append(ChunkMatch(h.id, ref_chunks[best].id, sim))
    return matches
