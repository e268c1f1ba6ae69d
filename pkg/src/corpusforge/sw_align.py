"""Smith-Waterman alignment of hypothesis chunks against transcript chunks,
with zero-cost skipping of transcript punctuation and hypothesis silence,
and stitching of chunk alignments into one timed transcript."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

from .chunk_match import Chunk, ChunkMatch, TimedHypothesis
from .errors import InconsistentTimestampsError
from .textnorm import SILENCE_WORD, SPECIAL_WORDS, TokenKind, TokenSeq


class OpKind(str, enum.Enum):
    MATCH = "MATCH"
    SUB = "SUB"
    INS = "INS"
    DEL = "DEL"
    SKIP_PUNCT = "SKIP_PUNCT"
    SKIP_SIL = "SKIP_SIL"


ERROR_KINDS = (OpKind.SUB, OpKind.INS, OpKind.DEL)
_REF_KINDS = (OpKind.MATCH, OpKind.SUB, OpKind.DEL, OpKind.SKIP_PUNCT)
_HYP_KINDS = (OpKind.MATCH, OpKind.SUB, OpKind.INS, OpKind.SKIP_SIL)


@dataclass(frozen=True)
class AlignOp:
    kind: OpKind
    hyp_index: int | None = None
    ref_index: int | None = None

    def __post_init__(self):
        if (self.kind in _HYP_KINDS) != (self.hyp_index is not None):
            raise ValueError(f"{self.kind}: hyp_index presence mismatch")
        if (self.kind in _REF_KINDS) != (self.ref_index is not None):
            raise ValueError(f"{self.kind}: ref_index presence mismatch")

    def shifted(self, dh: int, dr: int) -> "AlignOp":
        return AlignOp(self.kind,
                       None if self.hyp_index is None else self.hyp_index + dh,
                       None if self.ref_index is None else self.ref_index + dr)

    def to_json(self) -> list:
        return [self.kind.value, self.hyp_index, self.ref_index]

    @classmethod
    def from_json(cls, v) -> "AlignOp":
        return cls(OpKind(v[0]), v[1], v[2])


@dataclass(frozen=True)
class Scoring:
    match: int = 2
    mismatch: int = -1
    gap: int = -1
    skip: int = 0

    def op_score(self, kind: OpKind) -> int:
        if kind is OpKind.MATCH:
            return self.match
        if kind is OpKind.SUB:
            return self.mismatch
        if kind in (OpKind.INS, OpKind.DEL):
            return self.gap
        return self.skip


@dataclass(frozen=True)
class ChunkAlignment:
    match: ChunkMatch | None
    ops: tuple[AlignOp, ...]
    score: int

    def to_json(self) -> dict:
        return {"match": None if self.match is None else self.match.to_json(),
                "ops": [op.to_json() for op in self.ops], "score": self.score}

    @classmethod
    def from_json(cls, d: dict) -> "ChunkAlignment":
        return cls(None if d["match"] is None else ChunkMatch.from_json(d["match"]),
                   tuple(AlignOp.from_json(v) for v in d["ops"]), int(d["score"]))


def _text(x) -> str:
    return x if isinstance(x, str) else x.text


# traceback codes, in tie-break priority order
_STOP, _MATCH, _SUB, _DEL, _INS, _SKIP_PUNCT, _SKIP_SIL = range(7)
_CODE_KIND = {_MATCH: OpKind.MATCH, _SUB: OpKind.SUB, _DEL: OpKind.DEL,
              _INS: OpKind.INS, _SKIP_PUNCT: OpKind.SKIP_PUNCT,
              _SKIP_SIL: OpKind.SKIP_SIL}


def score_ops(ops, scoring: Scoring = Scoring()) -> int:
    return sum(scoring.op_score(op.kind) for op in ops)


def _split_long_deletions(ops: list[AlignOp], max_del_run: int,
                          scoring: Scoring) -> list[AlignOp]:
    """Cut the alignment at runs of more than ``max_del_run`` deleted
    transcript words and keep the best-scoring piece."""
    pieces, cur, run = [], [], []
    for op in ops:
        if op.kind in (OpKind.DEL, OpKind.SKIP_PUNCT) and (run or op.kind is OpKind.DEL):
            run.append(op)
            continue
        if run:
            if sum(o.kind is OpKind.DEL for o in run) > max_del_run:
                pieces.append(cur)
                cur = []
            else:
                cur.extend(run)
            run = []
        cur.append(op)
    if run and sum(o.kind is OpKind.DEL for o in run) <= max_del_run:
        cur.extend(run)
    pieces.append(cur)
    if len(pieces) == 1:
        return pieces[0]
    return max(pieces, key=lambda p: score_ops(p, scoring))


def sw_align(hyp: Sequence, ref: Sequence, scoring: Scoring = Scoring(),
             max_del_run: int | None = 15) -> ChunkAlignment:
    """Best local alignment of ``hyp`` against ``ref``.

    Items are strings or objects with a ``text`` attribute.  Transcript
    punctuation words and hypothesis ``<SIL>`` markers are consumed at the
    skip cost and never take part in a match or substitution.  Ties prefer
    MATCH > SUB > DEL > INS > SKIP; the earliest (row-major) maximal cell
    ends the alignment.  Indices in the result are local to the inputs.
    """
    h = [_text(x) for x in hyp]
    r = [_text(x) for x in ref]
    n, m = len(h), len(r)
    if n == 0 or m == 0:
        return ChunkAlignment(None, (), 0)
    h_sil = [t == SILENCE_WORD for t in h]
    r_punct = [t in SPECIAL_WORDS for t in r]
    M, X, G, K = scoring.match, scoring.mismatch, scoring.gap, scoring.skip

    H = [[0] * (m + 1) for _ in range(n + 1)]
    P = [bytearray(m + 1) for _ in range(n + 1)]
    best, bi, bj = 0, 0, 0
    for i in range(1, n + 1):
        hi = h[i - 1]
        hsil = h_sil[i - 1]
        up_cost, up_code = (K, _SKIP_SIL) if hsil else (G, _INS)
        Hi, Hp, Pi = H[i], H[i - 1], P[i]
        for j in range(1, m + 1):
            if r_punct[j - 1]:
                left, lcode = Hi[j - 1] + K, _SKIP_PUNCT
            else:
                left, lcode = Hi[j - 1] + G, _DEL
            if hsil or r_punct[j - 1]:
                v, code = left, lcode
            else:
                if hi == r[j - 1]:
                    v, code = Hp[j - 1] + M, _MATCH
                else:
                    v, code = Hp[j - 1] + X, _SUB
                if left > v:
                    v, code = left, lcode
            up = Hp[j] + up_cost
            if up > v or (up == v and up_code < code):
                v, code = up, up_code
            if v > 0:
                Hi[j] = v
                Pi[j] = code
                if v > best:
                    best, bi, bj = v, i, j
    ops = []
    i, j = bi, bj
    while H[i][j] > 0:
        code = P[i][j]
        kind = _CODE_KIND[code]
        if code in (_MATCH, _SUB):
            ops.append(AlignOp(kind, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif code in (_DEL, _SKIP_PUNCT):
            ops.append(AlignOp(kind, None, j - 1))
            j -= 1
        else:
            ops.append(AlignOp(kind, i - 1, None))
            i -= 1
    ops.reverse()
    if max_del_run is not None:
        ops = _split_long_deletions(ops, max_del_run, scoring)
    return ChunkAlignment(None, tuple(ops), score_ops(ops, scoring))


def edit_ops(hyp: Sequence, ref: Sequence) -> list[AlignOp]:
    """Minimum-edit global alignment of two word sequences (no skips)."""
    h = [_text(x) for x in hyp]
    r = [_text(x) for x in ref]
    n, m = len(h), len(r)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        D[i][0] = i
    for j in range(m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            D[i][j] = min(D[i - 1][j - 1] + (h[i - 1] != r[j - 1]),
                          D[i][j - 1] + 1, D[i - 1][j] + 1)
    ops = []
    i, j = n, m
    while i or j:
        if i and j and D[i][j] == D[i - 1][j - 1] + (h[i - 1] != r[j - 1]):
            kind = OpKind.MATCH if h[i - 1] == r[j - 1] else OpKind.SUB
            ops.append(AlignOp(kind, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j and D[i][j] == D[i][j - 1] + 1:
            ops.append(AlignOp(OpKind.DEL, None, j - 1))
            j -= 1
        else:
            ops.append(AlignOp(OpKind.INS, i - 1, None))
            i -= 1
    ops.reverse()
    return ops


def alignment_wer(ops, ref_len_words: int) -> float:
    """Percentage of SUB + INS + DEL over the transcript word count;
    skip operations do not count."""
    if ref_len_words <= 0:
        raise ValueError("ref_len_words must be positive")
    errors = sum(op.kind in ERROR_KINDS for op in ops)
    return 100.0 * errors / ref_len_words


# ---------------------------------------------------------------------------
# hypothesis items and per-chunk alignment

@dataclass(frozen=True)
class HypItem:
    text: str
    begin_s: float
    end_s: float
    word_index: int | None


def hyp_items(hyp: TimedHypothesis, sil_gap_s: float = 0.1) -> list[HypItem]:
    """Hypothesis words with ``<SIL>`` markers for gaps longer than ``sil_gap_s``."""
    items = []
    prev_end = 0.0
    for k, w in enumerate(hyp.words):
        if round(w.begin_s - prev_end, 6) > sil_gap_s:
            items.append(HypItem(SILENCE_WORD, prev_end, w.begin_s, None))
        items.append(HypItem(w.text, w.begin_s, w.end_s, k))
        prev_end = w.end_s
    return items


def align_chunk(match: ChunkMatch, hyp_chunk: Chunk, ref_chunk: Chunk,
                items: list[HypItem], ref: TokenSeq,
                scoring: Scoring = Scoring(), max_del_run: int | None = 15) -> ChunkAlignment:
    """Align one matched chunk pair; indices in the result are global
    (item index on the hypothesis side, token index on the transcript side)."""
    item_of_word = {it.word_index: i for i, it in enumerate(items) if it.word_index is not None}
    w0, w1 = hyp_chunk.token_range
    i0, i1 = item_of_word[w0], item_of_word[w1 - 1] + 1
    r0, r1 = ref_chunk.token_range
    local = sw_align([it.text for it in items[i0:i1]], ref.texts[r0:r1], scoring, max_del_run)
    return ChunkAlignment(match, tuple(op.shifted(i0, r0) for op in local.ops), local.score)


# ---------------------------------------------------------------------------
# stitching

ALIGNED = "ALIGNED"
UNALIGNED = "UNALIGNED"


@dataclass
class TimedTranscript:
    ref: TokenSeq
    duration_s: float
    word_times: list  # per token: (begin_s, end_s) or None
    hyp_word: list  # per token: index into the hypothesis words or None
    pause_after: list  # per token, seconds
    pause_before: list  # per token, seconds
    align_label: list  # per token: ALIGNED / UNALIGNED for words, None for PUNCT
    ops: list = field(default_factory=list)  # resolved ops in transcript order

    def to_json(self) -> dict:
        return {
            "ref": self.ref.to_json(),
            "duration": self.duration_s,
            "word_times": [None if t is None else list(t) for t in self.word_times],
            "hyp_word": self.hyp_word,
            "pause_after": self.pause_after,
            "pause_before": self.pause_before,
            "align_label": self.align_label,
            "ops": [op.to_json() for op in self.ops],
        }

    @classmethod
    def from_json(cls, d: dict) -> "TimedTranscript":
        return cls(
            ref=TokenSeq.from_json(d["ref"]),
            duration_s=float(d["duration"]),
            word_times=[None if t is None else (float(t[0]), float(t[1])) for t in d["word_times"]],
            hyp_word=list(d["hyp_word"]),
            pause_after=[float(x) for x in d["pause_after"]],
            pause_before=[float(x) for x in d["pause_before"]],
            align_label=list(d["align_label"]),
            ops=[AlignOp.from_json(v) for v in d["ops"]],
        )

    def to_ctm(self, name: str = "doc") -> str:
        lines = []
        for tok, t, lab in zip(self.ref.tokens, self.word_times, self.align_label):
            if tok.kind is not TokenKind.WORD:
                continue
            if t is None:
                lines.append(f"{name} {tok.text} - - {lab}")
            else:
                lines.append(f"{name} {tok.text} {t[0]:.3f} {t[1] - t[0]:.3f} {lab}")
        return "\n".join(lines) + ("\n" if lines else "")


def _clip(alignment: ChunkAlignment, claimed: list[bool]) -> list[tuple[float, int, AlignOp]]:
    """Keep the ops of ``alignment`` on unclaimed transcript tokens; hypothesis
    only ops survive when both neighbouring transcript ops survive."""
    ops = alignment.ops
    keep_ref = [op.ref_index is not None and not claimed[op.ref_index] for op in ops]
    out = []
    prev_kept = None  # was the last transcript-side op kept?
    pending = []
    for op, kept in zip(ops, keep_ref):
        if op.ref_index is None:
            pending.append(op)
            continue
        if kept:
            if prev_kept:
                out.extend((op.ref_index - 0.5, op.hyp_index, p) for p in pending)
            out.append((op.ref_index, -1, op))
        pending = []
        prev_kept = kept
    return out


def stitch(alignments: Sequence[ChunkAlignment], ref: TokenSeq, hyp: TimedHypothesis,
           sil_gap_s: float = 0.1) -> TimedTranscript:
    """Merge chunk alignments into word timings for the whole transcript.

    Where chunk alignments overlap on a transcript token the higher scoring
    alignment wins (ties go to the earlier alignment).  MATCH and SUB ops
    give the transcript word the timing of its hypothesis word; all other
    words stay UNALIGNED.
    """
    items = hyp_items(hyp, sil_gap_s)
    n = len(ref)
    claimed = [False] * n
    order = sorted(range(len(alignments)), key=lambda k: (-alignments[k].score, k))
    kept = []
    for k in order:
        clipped = _clip(alignments[k], claimed)
        for _, _, op in clipped:
            if op.ref_index is not None:
                claimed[op.ref_index] = True
        kept.extend((key, sub, k, op) for key, sub, op in clipped)
    kept.sort(key=lambda x: (x[0], x[1] if x[1] is not None else -1, x[2]))
    ops = [op for *_, op in kept]

    word_times = [None] * n
    hyp_word = [None] * n
    for op in ops:
        if op.kind in (OpKind.MATCH, OpKind.SUB):
            it = items[op.hyp_index]
            word_times[op.ref_index] = (it.begin_s, it.end_s)
            hyp_word[op.ref_index] = it.word_index

    last = -1
    for i in range(n):
        if hyp_word[i] is not None:
            if hyp_word[i] <= last:
                raise InconsistentTimestampsError(
                    f"token {i} ({ref.tokens[i].text}) maps to hypothesis word "
                    f"{hyp_word[i]} after word {last}")
            last = hyp_word[i]

    words = hyp.words
    pause_after = [0.0] * n
    pause_before = [0.0] * n
    labels = [None] * n
    for i, tok in enumerate(ref.tokens):
        if tok.kind is not TokenKind.WORD:
            continue
        labels[i] = ALIGNED if word_times[i] is not None else UNALIGNED
        k = hyp_word[i]
        if k is None:
            continue
        nxt = words[k + 1].begin_s if k + 1 < len(words) else max(hyp.audio_duration_s, words[k].end_s)
        prv = words[k - 1].end_s if k > 0 else 0.0
        after = round(max(0.0, nxt - words[k].end_s), 6)
        pause_before[i] = round(max(0.0, words[k].begin_s - prv), 6)
        # the pause is attributed to the last punctuation mark following the word
        j = i
        while j + 1 < n and ref.tokens[j + 1].kind is TokenKind.PUNCT:
            j += 1
        pause_after[j] = after
    return TimedTranscript(ref, hyp.audio_duration_s, word_times, hyp_word,
                           pause_after, pause_before, labels, ops)
