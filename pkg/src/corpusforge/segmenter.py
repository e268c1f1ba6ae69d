"""Rule-based cutting of a timed transcript into candidate segments."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .sw_align import ALIGNED, AlignOp, TimedTranscript, alignment_wer
from .textnorm import TokenKind, TokenSeq


@dataclass(frozen=True)
class SegmentRules:
    sil_thresh_s: float = 1.0
    punct_pause_s: float = 0.2
    max_len_s: float = 20.0
    boundary_sil_s: float = 0.15
    max_alignment_wer: float = 75.0
    min_len_s: float = 0.5


@dataclass
class CandidateSegment:
    sid: str
    begin_s: float
    end_s: float
    tokens: TokenSeq
    token_range: tuple[int, int]  # span of the transcript between split points
    alignment_wer: float
    boundary_silence: tuple[float, float]
    word_times: list = field(default_factory=list)  # (word, begin_s, end_s)

    @property
    def duration(self) -> float:
        return self.end_s - self.begin_s

    def to_json(self) -> dict:
        return {
            "sid": self.sid, "begin": self.begin_s, "end": self.end_s,
            "tokens": self.tokens.to_json(), "token_range": list(self.token_range),
            "alignment_wer": self.alignment_wer,
            "boundary_silence": list(self.boundary_silence),
            "word_times": [list(w) for w in self.word_times],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CandidateSegment":
        return cls(d["sid"], float(d["begin"]), float(d["end"]),
                   TokenSeq.from_json(d["tokens"]), tuple(d["token_range"]),
                   float(d["alignment_wer"]), tuple(d["boundary_silence"]),
                   [(w[0], float(w[1]), float(w[2])) for w in d["word_times"]])


def find_split_points(tt: TimedTranscript, sil_thresh_s: float = 1.0,
                      punct_pause_s: float = 0.2) -> list[int]:
    """Token indices after which a cut is allowed.

    A cut is allowed after any token followed by more than ``sil_thresh_s``
    of silence, after punctuation followed by more than ``punct_pause_s``,
    and wherever the alignment label changes between consecutive words.
    """
    toks = tt.ref.tokens
    n = len(toks)
    splits = set()
    for i, tok in enumerate(toks):
        p = tt.pause_after[i]
        if p > sil_thresh_s:
            splits.add(i)
        elif tok.kind is TokenKind.PUNCT and p > punct_pause_s:
            splits.add(i)
    prev_label = None
    for i, tok in enumerate(toks):
        if tok.kind is not TokenKind.WORD:
            continue
        lab = tt.align_label[i]
        if prev_label is not None and lab != prev_label:
            splits.add(i - 1)  # after the last token preceding this word
        prev_label = lab
    return sorted(s for s in splits if s < n - 1)


def _segment_ops(ops: list[AlignOp], lo: int, hi: int) -> list[AlignOp]:
    idx = [k for k, op in enumerate(ops) if op.ref_index is not None and lo <= op.ref_index < hi]
    if not idx:
        return []
    return ops[idx[0]:idx[-1] + 1]


def cut_segments(tt: TimedTranscript, splits, rules: SegmentRules = SegmentRules(),
                 prefix: str = "seg", stats: Counter | None = None) -> list[CandidateSegment]:
    """Cut between consecutive split points and apply the drop rules.

    ``stats`` (if given) counts why spans were dropped.
    """
    stats = stats if stats is not None else Counter()
    toks = tt.ref.tokens
    n = len(toks)
    bounds = [-1] + [s for s in splits] + [n - 1]
    out = []
    for a, b in zip(bounds, bounds[1:]):
        lo, hi = a + 1, b + 1
        if lo >= hi:
            continue
        words = [i for i in range(lo, hi) if toks[i].kind is TokenKind.WORD]
        if not words:
            continue
        stats["spans"] += 1
        aligned = [i for i in words if tt.align_label[i] == ALIGNED]
        if not aligned:
            stats["dropped_unaligned"] += 1
            continue
        # splits sit on label changes, so an aligned span is aligned throughout
        first, last = words[0], words[-1]
        keep_hi = last + 1
        if keep_hi < hi and toks[keep_hi].kind is TokenKind.PUNCT:
            keep_hi += 1  # one sentence-final punctuation mark

        lead_gap = tt.pause_before[first]
        trail_gap = max(tt.pause_after[last:hi])
        # gaps at a cut are shared with the neighbouring segment
        lead_limit = rules.boundary_sil_s if a < 0 else min(rules.boundary_sil_s, lead_gap / 2)
        trail_limit = rules.boundary_sil_s if b >= n - 1 else min(rules.boundary_sil_s, trail_gap / 2)
        lead = round(min(lead_gap, lead_limit), 6)
        trail = round(min(trail_gap, trail_limit), 6)
        begin = round(tt.word_times[first][0] - lead, 6)
        end = round(tt.word_times[last][1] + trail, 6)

        seg_ops = _segment_ops(tt.ops, lo, hi)
        wer = alignment_wer(seg_ops, len(words))
        dur = end - begin
        if wer >= rules.max_alignment_wer:
            stats["dropped_alignment_wer"] += 1
            continue
        if dur >= rules.max_len_s:
            stats["dropped_too_long"] += 1
            continue
        if dur < rules.min_len_s:
            stats["dropped_too_short"] += 1
            continue
        stats["kept"] += 1
        out.append(CandidateSegment(
            sid=f"{prefix}_S{len(out):05d}",
            begin_s=begin, end_s=end,
            tokens=tt.ref[first:keep_hi],
            token_range=(lo, hi),
            alignment_wer=wer,
            boundary_silence=(lead, trail),
            word_times=[(toks[i].text, tt.word_times[i][0], tt.word_times[i][1]) for i in words],
        ))
    return out


def segment_transcript(tt: TimedTranscript, rules: SegmentRules = SegmentRules(),
                       prefix: str = "seg", stats: Counter | None = None) -> list[CandidateSegment]:
    if not any(lab == ALIGNED for lab in tt.align_label):
        return []
    splits = find_split_points(tt, rules.sil_thresh_s, rules.punct_pause_s)
    return cut_segments(tt, splits, rules, prefix, stats)
