"""Validation decoding over the leaky alignment graph and segment filtering."""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Protocol

from .align_graph import AlignGraph, Arc, ArcKind, FillerSet
from .errors import NoPathError
from .sw_align import OpKind
from .textnorm import Token, TokenKind, TokenSeq


class AcousticScorer(Protocol):
    """Scores a word hypothesis starting at a frame.

    ``best_span`` returns the best (end_frame, log_score) for ``word``
    starting at ``from_frame``, or None if the word cannot start there.
    """
    frame_rate: int
    total_frames: int

    def best_span(self, word: str, from_frame: int) -> tuple[int, float] | None: ...


class TableScorer:
    """Scorer backed by an explicit {(word, from_frame): (end_frame, log_score)} table."""

    def __init__(self, table: dict, total_frames: int, frame_rate: int = 100):
        self.table = dict(table)
        self.total_frames = total_frames
        self.frame_rate = frame_rate

    def best_span(self, word, from_frame):
        return self.table.get((word, from_frame))


# ---------------------------------------------------------------------------
# decoding

@dataclass(frozen=True)
class PathArc:
    arc: int
    kind: ArcKind
    label: str | None
    src: int
    dst: int
    start_frame: int
    end_frame: int
    acoustic_score: float
    origin: int | None = None


@dataclass
class BestPath:
    arcs: list[PathArc]
    total_cost: float
    total_frames: int

    @property
    def words(self) -> list[str]:
        return [a.label for a in self.arcs
                if a.kind in (ArcKind.FORCED, ArcKind.GARBAGE, ArcKind.FILLER)]

    def count(self, kind: ArcKind) -> int:
        return sum(a.kind is kind for a in self.arcs)


def _key_order(key):
    state, origin = key
    return (state, -1 if origin is None else origin)


def decode(g: AlignGraph, scorer: AcousticScorer, beam: int | None = 64) -> BestPath:
    """Viterbi token passing over (state, frame) with per-frame beam pruning.

    Tokens on null-loop states remember the forced position they leaked
    from, which restricts the RETURN arcs they may take.  Costs add the arc
    cost and the negated acoustic log score.  Ties resolve on (state id,
    origin) and then arc order.
    """
    T = scorer.total_frames
    if T <= 0:
        raise NoPathError("scorer has no frames")
    states = g.states
    arcs = g.arcs
    null = g.null
    eps_kinds = (ArcKind.LEAK, ArcKind.RETURN)
    word_kinds = (ArcKind.FORCED, ArcKind.GARBAGE, ArcKind.FILLER)

    returns_by_origin: dict[int, list[int]] = {}
    eps_out = [[] for _ in states]
    word_out = [[] for _ in states]
    garbage_arcs = []
    for k, a in enumerate(arcs):
        if math.isinf(a.cost):
            continue
        if a.kind is ArcKind.RETURN:
            returns_by_origin.setdefault(a.origin, []).append(k)
        elif a.kind in eps_kinds:
            eps_out[a.src].append(k)
        elif a.kind is ArcKind.GARBAGE and a.src == null and a.dst == null:
            garbage_arcs.append(k)
        elif a.kind in word_kinds:
            word_out[a.src].append(k)

    span_cache: dict[tuple[str, int], tuple[int, float] | None] = {}

    def span(word, t):
        key = (word, t)
        if key not in span_cache:
            span_cache[key] = scorer.best_span(word, t)
        return span_cache[key]

    garbage_cache: dict[int, list[tuple[int, float, int, float]]] = {}

    def garbage_moves(t):
        # best garbage arc per end frame; identical destination, so only the best matters
        if t not in garbage_cache:
            best: dict[int, tuple[float, int, float]] = {}
            for k in garbage_arcs:
                sp = span(arcs[k].label, t)
                if sp is None or sp[0] > T or sp[0] <= t:
                    continue
                inc = arcs[k].cost - sp[1]
                if sp[0] not in best or inc < best[sp[0]][0]:
                    best[sp[0]] = (inc, k, sp[1])
            garbage_cache[t] = [(e, inc, k, sc) for e, (inc, k, sc) in sorted(best.items())]
        return garbage_cache[t]

    def dest_key(arc: Arc, origin):
        st = states[arc.dst]
        if st.null_loop:
            if origin is None:  # entering the null state from a leak chain
                origin = states[arc.src].ref_position
            return (arc.dst, origin)
        return (arc.dst, None)

    start_key = (g.start, None)
    final_key = (g.final, None)
    pending: dict[int, dict] = {0: {start_key: 0.0}}
    back: dict[tuple[int, tuple], tuple] = {}
    frames = [0]

    while frames:
        t = heapq.heappop(frames)
        cur = pending.pop(t)
        # epsilon closure (Dijkstra; all costs are non-negative)
        dist = dict(cur)
        heap = [(c, _key_order(k), k) for k, c in cur.items()]
        heapq.heapify(heap)
        done = set()
        while heap:
            c, _, key = heapq.heappop(heap)
            if key in done or c > dist[key]:
                continue
            done.add(key)
            state, origin = key
            out = eps_out[state]
            if states[state].is_null and origin is not None:
                out = out + returns_by_origin.get(origin, [])
            for k in out:
                a = arcs[k]
                nk = dest_key(a, origin if a.kind is not ArcKind.RETURN else None)
                if a.kind is ArcKind.RETURN:
                    nk = (a.dst, None)
                nc = c + a.cost
                if nc < dist.get(nk, math.inf):
                    dist[nk] = nc
                    back[(t, nk)] = (t, key, k, t, t, 0.0)
                    heapq.heappush(heap, (nc, _key_order(nk), nk))

        alive = sorted(dist.items(), key=lambda kv: (kv[1], _key_order(kv[0])))
        if beam:
            alive = alive[:beam]
        if t == T:
            if any(k == final_key for k, _ in alive):
                break
            continue

        for key, c in alive:
            state, origin = key
            moves = []
            for k in word_out[state]:
                a = arcs[k]
                sp = span(a.label, t)
                if sp is None or sp[0] > T or sp[0] <= t:
                    continue
                moves.append((sp[0], a.cost - sp[1], k, sp[1]))
            if state == null:
                moves.extend(garbage_moves(t))
            for end, inc, k, sc in moves:
                nk = dest_key(arcs[k], origin)
                nc = c + inc
                bucket = pending.get(end)
                if bucket is None:
                    bucket = pending[end] = {}
                    heapq.heappush(frames, end)
                if nc < bucket.get(nk, math.inf):
                    bucket[nk] = nc
                    back[(end, nk)] = (t, key, k, t, end, sc)
    else:
        raise NoPathError("no accepting path within the beam")

    # the loop broke at t == T with the final state alive
    total = dist[final_key]
    path = []
    node = (T, final_key)
    while node in back:
        pt, pkey, k, s, e, sc = back[node]
        a = arcs[k]
        path.append(PathArc(k, a.kind, a.label, a.src, a.dst, s, e, sc,
                            pkey[1] if a.kind is ArcKind.RETURN else node[1][1]))
        node = (pt, pkey)
    if node != (0, start_key):
        raise NoPathError("broken back-pointer chain")
    path.reverse()
    return BestPath(path, total, T)


# ---------------------------------------------------------------------------
# edit scripts

class EditKind(str, enum.Enum):
    COR = "COR"
    SUB = "SUB"
    INS = "INS"
    DEL = "DEL"
    FILLER_COR = "FILLER_COR"


@dataclass(frozen=True)
class EditEntry:
    kind: EditKind
    ref_word: str | None = None
    hyp_word: str | None = None
    ref_index: int | None = None  # word index into the reference
    start_frame: int | None = None
    end_frame: int | None = None
    inserted: bool = False  # reference word added by rewriting
    note: str | None = None

    def to_json(self) -> list:
        return [self.kind.value, self.ref_word, self.hyp_word, self.ref_index,
                self.start_frame, self.end_frame, self.inserted, self.note]

    @classmethod
    def from_json(cls, v) -> "EditEntry":
        return cls(EditKind(v[0]), *v[1:])


@dataclass(frozen=True)
class EditScript:
    entries: tuple[EditEntry, ...]

    def count(self, *kinds: EditKind) -> int:
        return sum(e.kind in kinds for e in self.entries)

    @property
    def hyp_words(self) -> list[str]:
        return [e.hyp_word for e in self.entries if e.hyp_word is not None]

    @property
    def ref_words(self) -> list[str]:
        return [e.ref_word for e in self.entries if e.ref_word is not None]


def _excursion_entries(origin, ret_pos, garbage, fillers_in, words, f0, f1):
    """Edits for one trip off the forced path: garbage words pair with the
    bypassed reference words they overlap most in time."""
    bypassed = list(range(origin, ret_pos))
    k = len(bypassed)
    spans = []
    for i in range(k):
        a = f0 + (f1 - f0) * i / k
        b = f0 + (f1 - f0) * (i + 1) / k
        spans.append((a, b))
    paired: dict[int, int] = {}
    used = set()
    for i in range(k):
        best, best_ov = None, 0.0
        for gi, (word, s, e) in enumerate(garbage):
            if gi in used:
                continue
            ov = min(e, spans[i][1]) - max(s, spans[i][0])
            if ov > best_ov:
                best, best_ov = gi, ov
        if best is not None:
            paired[best] = i
            used.add(best)
    items = []
    for gi, (word, s, e) in enumerate(garbage):
        if gi in paired:
            p = bypassed[paired[gi]]
            note = "surface_match" if words[p] == word else None
            items.append((s, 1, EditEntry(EditKind.SUB, words[p], word, p, s, e, note=note)))
        else:
            items.append((s, 2, EditEntry(EditKind.INS, None, word, None, s, e)))
    for i, p in enumerate(bypassed):
        if i not in paired.values():
            items.append((spans[i][0], 0, EditEntry(EditKind.DEL, words[p], None, p, None, None)))
    for word, s, e in fillers_in:
        items.append((s, 3, EditEntry(EditKind.FILLER_COR, None, word, None, s, e)))
    items.sort(key=lambda x: (x[0], x[1]))
    return [e for *_, e in items]


def path_to_edits(p: BestPath, ref: TokenSeq, fillers: FillerSet = FillerSet(),
                  graph: AlignGraph | None = None) -> EditScript:
    """Turn a decoded path into an edit script against the reference words.

    FORCED arcs are correct words, GARBAGE arcs insertions, bypassed
    reference words deletions; a garbage word overlapping a bypassed word
    becomes a substitution.  FILLER arcs are FILLER_COR.
    """
    words = ref.words()
    entries = []
    exc = None  # [origin, start_frame, garbage, fillers]
    for a in p.arcs:
        if a.kind is ArcKind.FORCED:
            pos = _forced_pos(a, graph, words, entries)
            entries.append(EditEntry(EditKind.COR, a.label, a.label, pos,
                                     a.start_frame, a.end_frame))
        elif a.kind is ArcKind.LEAK:
            if exc is None:
                origin = a.origin if a.origin is not None else _leak_origin(a, graph, entries)
                exc = [origin, a.start_frame, [], []]
        elif a.kind is ArcKind.GARBAGE:
            exc[2].append((a.label, a.start_frame, a.end_frame))
        elif a.kind is ArcKind.FILLER:
            if exc is None:
                entries.append(EditEntry(EditKind.FILLER_COR, None, a.label, None,
                                         a.start_frame, a.end_frame))
            else:
                exc[3].append((a.label, a.start_frame, a.end_frame))
        elif a.kind is ArcKind.RETURN:
            ret_pos = graph.states[a.dst].ref_position if graph else _return_pos(a, exc)
            entries.extend(_excursion_entries(exc[0], ret_pos, exc[2], exc[3], words,
                                              exc[1], a.end_frame))
            exc = None
    return EditScript(tuple(entries))


def _forced_pos(a: PathArc, graph, words, entries) -> int:
    if graph is not None:
        return graph.states[a.src].ref_position
    done = [e.ref_index for e in entries if e.ref_index is not None]
    return (max(done) + 1) if done else 0


def _leak_origin(a: PathArc, graph, entries) -> int:
    if graph is not None:
        return graph.states[a.src].ref_position
    done = [e.ref_index for e in entries if e.ref_index is not None]
    return (max(done) + 1) if done else 0


def _return_pos(a: PathArc, exc):
    raise ValueError("path_to_edits needs the graph to resolve RETURN targets")


def edits_from_ops(ops, ref_words, hyp_words) -> EditScript:
    """Edit script from word-level alignment operations (skips dropped)."""
    table = {OpKind.MATCH: EditKind.COR, OpKind.SUB: EditKind.SUB,
             OpKind.INS: EditKind.INS, OpKind.DEL: EditKind.DEL}
    out = []
    for op in ops:
        if op.kind not in table:
            continue
        r = None if op.ref_index is None else ref_words[op.ref_index]
        h = None if op.hyp_index is None else hyp_words[op.hyp_index]
        out.append(EditEntry(table[op.kind], r, h, op.ref_index))
    return EditScript(tuple(out))


# ---------------------------------------------------------------------------
# reference rewriting and WER

@dataclass(frozen=True)
class RewritePolicy:
    fillers: bool = False
    disfluency: bool = False


def _disfluent(entries: list[EditEntry]) -> set[int]:
    """INS entries inside a run of identical hypothesis words that is
    anchored on a correctly recognized reference word."""
    seq = [(i, e) for i, e in enumerate(entries) if e.hyp_word is not None]
    marked = set()
    k = 0
    while k < len(seq):
        j = k
        while j + 1 < len(seq) and seq[j + 1][1].hyp_word == seq[k][1].hyp_word:
            j += 1
        run = seq[k:j + 1]
        if len(run) > 1 and any(e.kind is EditKind.COR for _, e in run):
            marked.update(i for i, e in run if e.kind is EditKind.INS)
        k = j + 1
    return marked


def _filler_insertions(entries: list[EditEntry], fillers: FillerSet) -> set[int]:
    """INS entries whose consecutive hypothesis words spell a filler phrase."""
    marked = set()
    seqs = sorted(fillers.sequences, key=len, reverse=True)
    i = 0
    while i < len(entries):
        for seq in seqs:
            run = entries[i:i + len(seq)]
            if (len(run) == len(seq) and all(e.kind is EditKind.INS for e in run)
                    and tuple(e.hyp_word for e in run) == seq):
                marked.update(range(i, i + len(seq)))
                i += len(seq) - 1
                break
        i += 1
    return marked


def rewrite_reference(es: EditScript, ref: TokenSeq,
                      policy: RewritePolicy = RewritePolicy(),
                      fillers: FillerSet = FillerSet()) -> tuple[TokenSeq, EditScript]:
    """Insert filler words and collapsed repetitions into the reference;
    the affected edit entries become COR."""
    entries = list(es.entries)
    if not (policy.fillers or policy.disfluency):
        return ref, es
    fill = set()
    if policy.fillers:
        fill = {i for i, e in enumerate(entries) if e.kind is EditKind.FILLER_COR}
        fill |= _filler_insertions(entries, fillers)
    dis = (_disfluent(entries) - fill) if policy.disfluency else set()
    new_entries = []
    for i, e in enumerate(entries):
        if i in fill or i in dis:
            e = EditEntry(EditKind.COR, e.hyp_word, e.hyp_word, None, e.start_frame,
                          e.end_frame, inserted=True, note="filler" if i in fill else "disfluency")
        new_entries.append(e)

    # rebuild the token sequence, keeping punctuation in place
    toks, spans = [], []
    word_pos = ref.word_positions()
    cursor = 0  # next reference token to emit

    def emit_upto(tok_index):
        nonlocal cursor
        while cursor < tok_index:
            toks.append(ref.tokens[cursor])
            spans.append(ref.raw_spans[cursor])
            cursor += 1

    for e in new_entries:
        if e.inserted:
            at = ref.raw_spans[cursor][0] if cursor < len(ref) else (
                ref.raw_spans[-1][1] if len(ref) else 0)
            toks.append(Token(TokenKind.WORD, e.ref_word))
            spans.append((at, at))
        elif e.ref_index is not None:
            tok_index = word_pos[e.ref_index]
            emit_upto(tok_index + 1)
    emit_upto(len(ref))
    return TokenSeq(tuple(toks), tuple(spans)), EditScript(tuple(new_entries))


def validation_wer(es: EditScript) -> float:
    """100 * (SUB + INS + DEL) / number of reference words in the script."""
    n_ref = sum(e.ref_word is not None for e in es.entries)
    if n_ref == 0:
        raise ValueError("edit script has no reference words")
    errors = es.count(EditKind.SUB, EditKind.INS, EditKind.DEL)
    return 100.0 * errors / n_ref


@dataclass
class ValidationResult:
    sid: str
    wer: float
    edit_script: EditScript
    rewritten_ref: TokenSeq | None
    passed: bool
    reason: str | None = None
    path_words: list = field(default_factory=list)  # (word, start_frame, end_frame, kind)

    def to_json(self) -> dict:
        return {
            "sid": self.sid, "wer": self.wer, "passed": self.passed, "reason": self.reason,
            "edits": [e.to_json() for e in self.edit_script.entries],
            "rewritten_ref": None if self.rewritten_ref is None else self.rewritten_ref.to_json(),
            "path_words": [list(w) for w in self.path_words],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ValidationResult":
        return cls(d["sid"], float(d["wer"]),
                   EditScript(tuple(EditEntry.from_json(v) for v in d["edits"])),
                   None if d["rewritten_ref"] is None else TokenSeq.from_json(d["rewritten_ref"]),
                   bool(d["passed"]), d["reason"], [tuple(w) for w in d["path_words"]])


def passes_cap(wer: float, cap: float, exclusive: bool = False) -> bool:
    # tolerate float noise at the boundary, e.g. 1/25 -> 4.000000000000001
    w = round(wer, 9)
    return w < cap if exclusive else w <= cap


def judge(sid: str, es: EditScript, ref: TokenSeq, cap: float,
          policy: RewritePolicy = RewritePolicy(), fillers: FillerSet = FillerSet(),
          cap_exclusive: bool = False, path_words=()) -> ValidationResult:
    """Apply a rewriting policy to a raw edit script and compare with ``cap``."""
    if not policy.fillers:
        # without filler rewriting a spoken filler is an ordinary insertion
        es = EditScript(tuple(
            replace(e, kind=EditKind.INS) if e.kind is EditKind.FILLER_COR else e
            for e in es.entries))
    rewritten, es2 = rewrite_reference(es, ref, policy, fillers)
    wer = validation_wer(es2)
    changed = rewritten if rewritten is not ref else None
    return ValidationResult(sid, wer, es2, changed, passes_cap(wer, cap, cap_exclusive),
                            None, list(path_words))


def path_words(path: BestPath) -> list[tuple]:
    return [(a.label, a.start_frame, a.end_frame, a.kind.value) for a in path.arcs
            if a.kind in (ArcKind.FORCED, ArcKind.GARBAGE, ArcKind.FILLER)]


def no_path_result(sid: str, err: Exception) -> ValidationResult:
    return ValidationResult(sid, 100.0, EditScript(()), None, False, f"no_path: {err}")


def validate_segment(seg, scorer: AcousticScorer, g: AlignGraph, cap: float,
                     policy: RewritePolicy = RewritePolicy(), beam: int | None = 64,
                     fillers: FillerSet = FillerSet(), cap_exclusive: bool = False
                     ) -> ValidationResult:
    """Decode one candidate segment and compare its WER with ``cap``.

    ``seg`` is anything with ``sid`` and ``tokens`` (a CandidateSegment).
    A decode failure is reported as a failed result, not raised.
    """
    try:
        path = decode(g, scorer, beam)
    except NoPathError as e:
        return no_path_result(seg.sid, e)
    es = path_to_edits(path, seg.tokens, fillers, graph=g)
    return judge(seg.sid, es, seg.tokens, cap, policy, fillers, cap_exclusive, path_words(path))
